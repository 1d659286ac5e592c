"""Core data types of the MSWasm IR."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class ValType(Enum):
    I32 = "i32"
    I64 = "i64"
    HANDLE = "handle"

    def __str__(self) -> str:
        return self.value


I32 = ValType.I32
I64 = ValType.I64
HANDLE = ValType.HANDLE

BINOPS_I32 = (
    "add", "sub", "mul", "div_s", "rem_s", "and", "or", "xor", "shl", "shr_s",
    "eq", "ne", "lt_s", "gt_s", "le_s", "ge_s",
)

# mnemonic -> (params popped, bottom first; results pushed)
SIGNATURES: dict[str, tuple[tuple[ValType, ...], tuple[ValType, ...]]] = {
    **{f"i32.{op}": ((I32, I32), (I32,)) for op in BINOPS_I32},
    "i32.const": ((), (I32,)),
    "i64.const": ((), (I64,)),
    "print": ((I32,), ()),
    "segment.new": ((I32,), (HANDLE,)),
    "segment.free": ((HANDLE,), ()),
    "segment.load8": ((HANDLE,), (I32,)),
    "segment.load32": ((HANDLE,), (I32,)),
    "segment.load64": ((HANDLE,), (I64,)),
    "segment.store8": ((HANDLE, I32), ()),
    "segment.store32": ((HANDLE, I32), ()),
    "segment.store64": ((HANDLE, I64), ()),
    "handle.add": ((HANDLE, I32), (HANDLE,)),
    "handle.slice": ((HANDLE, I32, I32), (HANDLE,)),
    "handle.null": ((), (HANDLE,)),
    "handle.eq": ((HANDLE, HANDLE), (I32,)),
    "handle.get_offset": ((HANDLE,), (I32,)),
}

# ops whose typing depends on context (locals, labels, callee)
SPECIAL_OPS = ("local.get", "local.set", "drop", "block", "loop", "if", "br", "br_if",
               "call", "return")

# ops carrying one integer immediate
IMMEDIATE_OPS = ("i32.const", "i64.const", "local.get", "local.set", "br", "br_if", "call")

MNEMONICS = frozenset(SIGNATURES) | frozenset(SPECIAL_OPS)

LOAD_WIDTH = {"segment.load8": 1, "segment.load32": 4, "segment.load64": 8}
STORE_WIDTH = {"segment.store8": 1, "segment.store32": 4, "segment.store64": 8}


@dataclass(frozen=True)
class Instr:
    """One instruction. ``arg`` is the immediate; structured ops use ``body``/``orelse``.

    ``result`` is the declared result type of a block/loop/if (``None`` for arity 0).
    ``pos`` is the source (line, column) and is ignored by equality.
    """

    op: str
    arg: int | None = None
    body: tuple[Instr, ...] = ()
    orelse: tuple[Instr, ...] = ()
    result: ValType | None = None
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class FuncType:
    params: tuple[ValType, ...]
    results: tuple[ValType, ...]

    def __str__(self) -> str:
        ps = " ".join(map(str, self.params))
        rs = " ".join(map(str, self.results))
        return f"({ps}) -> ({rs})"


@dataclass(frozen=True)
class Import:
    module: str
    name: str
    type: FuncType


@dataclass(frozen=True)
class FuncDef:
    name: str
    params: tuple[ValType, ...] = ()
    results: tuple[ValType, ...] = ()
    locals: tuple[ValType, ...] = ()
    body: tuple[Instr, ...] = ()
    exported: bool = False

    @property
    def type(self) -> FuncType:
        return FuncType(self.params, self.results)


@dataclass(frozen=True)
class ModuleDef:
    """A module. Function index space is imports first, then ``funcs``."""

    id: str
    funcs: tuple[FuncDef, ...] = ()
    imports: tuple[Import, ...] = ()

    def func_type(self, index: int) -> FuncType | None:
        if 0 <= index < len(self.imports):
            return self.imports[index].type
        local = index - len(self.imports)
        if 0 <= local < len(self.funcs):
            return self.funcs[local].type
        return None

    def exports(self) -> dict[str, FuncDef]:
        return {f.name: f for f in self.funcs if f.exported}

    def func_index(self, name: str) -> int:
        for i, f in enumerate(self.funcs):
            if f.name == name:
                return len(self.imports) + i
        for i, imp in enumerate(self.imports):
            if imp.name == name:
                return i
        raise KeyError(name)


def ins(op: str, arg: int | None = None, *, body=(), orelse=(), result=None) -> Instr:
    """Shorthand constructor used by the compilers and tests."""
    return Instr(op, arg, tuple(body), tuple(orelse), result)
