"""``mswasm`` command line.

Exit codes: 0 success / SAFE, 1 trap or failed check, 2 usage, compile, link or
input-format error, 3 policy violation (``monitor`` only). The effective
configuration of every command is echoed to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import run_corpus
from .interpreter import (DEFAULT_FUEL, ENFORCE, FRESH, OBSERVE, REUSE, LinkError,
                          instantiate, run)
from .ir.text import ParseError, parse_module, serialize_module
from .ir.validate import ValidationError
from .minic import SAFE, UNSAFE, ShadowTracker, SourceError, SourceErrors, compile_src
from .monitors import IMPLICATIONS, Policy, check, implication_name, lattice_check
from .robustness import (DEFAULT_CONTEXT_FUEL, load_component,
                         load_components, robust_component, witness_check)
from .trace import InvalidTrace, TraceFormatError, enumerate_traces, read_trace, write_trace

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2, 3
COMPILE_ERRORS = (SourceError, SourceErrors, ParseError, ValidationError)


def _echo_config(args) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    print("# config " + json.dumps(cfg, sort_keys=True, default=str), file=sys.stderr)


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _load_module(path: Path, backend: str, alloc: str):
    text = path.read_text()
    if path.suffix == ".minic":
        return compile_src(text, backend, module_id=path.stem, alloc=alloc)
    return parse_module(text)


# -- subcommands ---------------------------------------------------------------------

def cmd_compile(args) -> int:
    try:
        m = compile_src(args.src.read_text(), args.backend,
                        module_id=args.module_id or args.src.stem, alloc=args.alloc)
    except OSError as e:
        return _err(str(e))
    except COMPILE_ERRORS as e:
        return _err(f"{args.src}: {e}")
    text = serialize_module(m)
    if args.output:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        modules = [_load_module(p, args.backend, args.alloc) for p in args.modules]
        program = instantiate(modules)
        uses_unsafe = args.backend == UNSAFE and any(p.suffix == ".minic" for p in args.modules)
        result = run(program, args.entry, args.args, mode=args.mode, fuel=args.fuel,
                     alloc_mode=args.alloc, tracker=ShadowTracker() if uses_unsafe else None)
    except OSError as e:
        return _err(str(e))
    except COMPILE_ERRORS as e:
        return _err(str(e))
    except LinkError as e:
        return _err(f"UnlinkedImport: {e}")
    for v in result.output:
        print(v)
    if result.trap:
        print(f"trap {result.trap.kind} at event {result.trap.event_index}")
    elif result.value is not None:
        print(f"result {result.value}")
    else:
        print("ok")
    if args.trace:
        args.trace.write_text(write_trace(result.trace))
    return EXIT_FAIL if result.trap else EXIT_OK


def cmd_monitor(args) -> int:
    try:
        trace = read_trace(args.trace.read_text())
        verdict = check(trace, Policy(args.policy))
    except OSError as e:
        return _err(str(e))
    except (TraceFormatError, InvalidTrace) as e:
        print(f"INVALID {e}")
        return EXIT_USAGE
    print(verdict)
    return EXIT_OK if verdict.safe else EXIT_VIOLATION


def cmd_lattice(args) -> int:
    try:
        report = lattice_check(args.max_len, args.colors, args.addrs, args.sizes)
    except ValueError as e:
        return _err(str(e))
    print(f"traces {report.traces}")
    total = 0
    for imp in IMPLICATIONS:
        name = implication_name(*imp)
        cex = report.counterexamples[name]
        total += len(cex)
        w = report.witnesses.get(name)
        shape = " ".join(e.kind for e in w) if w else "none"
        print(f"{name}: {len(cex)} counterexamples, witness [{shape}]")
        for t in cex[:args.show]:
            print("  counterexample:")
            for line in write_trace(t).splitlines():
                print("    " + line)
    print(f"{total} counterexamples")
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_enumerate(args) -> int:
    try:
        counts: dict[int, int] = {}
        for t in enumerate_traces(args.max_len, args.colors, args.addrs, args.sizes):
            counts[len(t)] = counts.get(len(t), 0) + 1
    except ValueError as e:
        return _err(str(e))
    for n in sorted(counts):
        print(f"length {n}: {counts[n]}")
    print(f"total {sum(counts.values())}")
    return EXIT_OK


def cmd_robust(args) -> int:
    try:
        comps = [load_component(p) for p in args.component] if args.component \
            else load_components(args.components_dir)
    except (OSError, *COMPILE_ERRORS) as e:
        return _err(str(e))
    violations = failures = 0
    report_lines = []
    print(f"seed {args.seed}")
    for c in comps:
        rep = robust_component(c, args.contexts, args.seed, args.fuel, args.mode)
        violations += len(rep.violations)
        report_lines += rep.lines()
        print(rep.summary())
        for r in witness_check(c.catalog, {c.name: c}):
            print("  " + str(r))
            failures += not r.ok
    if args.report:
        args.report.write_text("".join(line + "\n" for line in report_lines))
    print(f"{failures} catalog failures")
    print(f"{violations} violations")
    return EXIT_OK if violations == 0 and failures == 0 else EXIT_FAIL


def cmd_corpus(args) -> int:
    try:
        reports = run_corpus(args.dir)
    except (OSError, ValueError, *COMPILE_ERRORS) as e:
        return _err(str(e))
    for r in reports:
        print(r)
    passed = sum(r.ok for r in reports)
    print(f"{passed}/{len(reports)} entries pass")
    return EXIT_OK if passed == len(reports) else EXIT_FAIL


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mswasm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a MiniC file to .mswat")
    p.add_argument("src", type=Path)
    p.add_argument("--backend", choices=(SAFE, UNSAFE), default=SAFE)
    p.add_argument("--alloc", choices=(FRESH, REUSE), default=FRESH,
                   help="unsafe backend allocator variant (default: %(default)s)")
    p.add_argument("--module-id", default=None, help="module id (default: file stem)")
    p.add_argument("-o", "--output", type=Path, default=None)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="link and run .mswat / .minic modules")
    p.add_argument("modules", nargs="+", type=Path)
    p.add_argument("--entry", default="main")
    p.add_argument("--args", nargs="*", type=int, default=[])
    p.add_argument("--mode", choices=(ENFORCE, OBSERVE), default=ENFORCE)
    p.add_argument("--alloc", choices=(FRESH, REUSE), default=FRESH)
    p.add_argument("--backend", choices=(SAFE, UNSAFE), default=SAFE,
                   help="backend for .minic inputs (default: %(default)s)")
    p.add_argument("--trace", type=Path, default=None, help="write the event trace here")
    p.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("monitor", help="check a trace file against one policy")
    p.add_argument("trace", type=Path)
    p.add_argument("--policy", choices=[x.value for x in Policy], default=Policy.FULL.value)
    p.set_defaults(func=cmd_monitor)

    for name, fn, hlp in (("lattice", cmd_lattice, "brute-force policy implication check"),
                          ("enumerate", cmd_enumerate, "count store-consistent traces")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--max-len", type=int, default=5)
        p.add_argument("--colors", type=int, default=2)
        p.add_argument("--addrs", type=int, default=4)
        p.add_argument("--sizes", type=int, default=2)
        if name == "lattice":
            p.add_argument("--show", type=int, default=3,
                           help="counterexamples printed per implication")
        p.set_defaults(func=fn)

    p = sub.add_parser("robust", help="fuzz Safe-compiled components with typed contexts")
    p.add_argument("--component", action="append", type=Path, default=[],
                   help="component directory or .minic file (repeatable)")
    p.add_argument("--components-dir", type=Path, default=Path("components"),
                   help="used when no --component is given (default: %(default)s)")
    p.add_argument("--contexts", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fuel", type=int, default=DEFAULT_CONTEXT_FUEL)
    p.add_argument("--mode", choices=(ENFORCE, OBSERVE), default=ENFORCE)
    p.add_argument("--report", type=Path, default=None, help="JSON-lines report path")
    p.set_defaults(func=cmd_robust)

    p = sub.add_parser("corpus", help="check every corpus entry against expected.toml")
    p.add_argument("--dir", type=Path, default=Path("corpus"))
    p.set_defaults(func=cmd_corpus)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    _echo_config(args)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
