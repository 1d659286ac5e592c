"""MiniC: a cast-free heap language with a safe and an unsafe backend."""

from __future__ import annotations

from ..interpreter import DEFAULT_FUEL, ENFORCE, FRESH, RunResult, instantiate, run
from .compile import SAFE, UNSAFE, compile_program
from .shadow import ShadowTracker, Tagged
from .syntax import SourceError, SourceErrors, SrcProgram, parse_src
from .typecheck import CheckedProgram, typecheck_src

compile = compile_program  # noqa: A001 - the public name of the operation


def compile_src(text: str, backend: str = SAFE, module_id: str = "main",
                alloc: str = FRESH):
    return compile_program(typecheck_src(parse_src(text)), backend, module_id, alloc)


def run_src(text: str, backend: str = SAFE, args=(), mode: str = ENFORCE,
            alloc: str = FRESH, fuel: int = DEFAULT_FUEL, entry: str = "main",
            audit: bool = False) -> RunResult:
    """Parse, typecheck, compile, link and run; the unsafe backend runs under a shadow tracker."""
    m = compile_src(text, backend, alloc=alloc)
    tracker = ShadowTracker() if backend == UNSAFE else None
    return run(instantiate([m]), entry, args, mode=mode, fuel=fuel, alloc_mode=alloc,
               tracker=tracker, audit=audit)


__all__ = ["SAFE", "UNSAFE", "CheckedProgram", "ShadowTracker", "SourceError", "SourceErrors",
           "SrcProgram", "Tagged", "compile", "compile_program", "compile_src", "parse_src",
           "run_src", "typecheck_src"]
