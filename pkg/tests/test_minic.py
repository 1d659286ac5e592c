from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import CORPUS
from mswasm.corpus import load_corpus
from mswasm.interpreter import ENFORCE, OBSERVE, REUSE
from mswasm.ir import check_module
from mswasm.ir.syntax import HANDLE
from mswasm.minic import (SAFE, UNSAFE, SourceError, SourceErrors, compile_src, parse_src,
                          run_src, typecheck_src)
from mswasm.minic.compile import FLAT_BYTES, HELPERS
from mswasm.minic.fuzz import BUGS, FuzzConfig, gen_program
from mswasm.monitors import Policy, check
from mswasm.trace import FORGED, WRITE

ENTRIES = {e.name: e for e in load_corpus(CORPUS)}


def errors_of(text):
    with pytest.raises(SourceErrors) as ei:
        typecheck_src(parse_src(text))
    return [e.kind for e in ei.value.errors]


# -- front end ------------------------------------------------------------------------

def test_trivial_program_checks():
    typecheck_src(parse_src("fn main() { print(1+2); }"))


def test_int_as_pointer_is_rejected():
    assert errors_of("fn main() { let p: ptr = 5; }") == ["TypeMismatch"]


@pytest.mark.parametrize("src, kind", [
    ("fn main() { print(x); }", "UnknownVariable"),
    ("fn main() { let p: ptr = malloc(1); print(p); }", "TypeMismatch"),
    ("fn main() { let n: int = 1; print(*n); }", "TypeMismatch"),
    ("fn main() { let p: ptr = malloc(1); let q: ptr = p + 1; }", "TypeMismatch"),
    ("fn main() { g(); }", "UnknownFunction"),
    ("fn f(a: int) {} fn main() { f(); }", "ArityMismatch"),
    ("fn f() {} fn f() {} fn main() {}", "DuplicateName"),
    ("fn main() -> int { return; }", "TypeMismatch"),
    ("fn main() { print(4294967296); }", "TypeMismatch"),
])
def test_type_errors(src, kind):
    assert kind in errors_of(src)


def test_all_errors_reported_with_positions():
    with pytest.raises(SourceErrors) as ei:
        typecheck_src(parse_src("fn main() {\n  print(x);\n  let p: ptr = 3;\n}"))
    errs = ei.value.errors
    assert [e.kind for e in errs] == ["UnknownVariable", "TypeMismatch"]
    assert [e.line for e in errs] == [2, 3]
    assert all(e.col >= 1 for e in errs)


def test_syntax_error():
    with pytest.raises(SourceError) as ei:
        parse_src("fn main() { let = 3; }")
    assert ei.value.kind == "SyntaxError" and ei.value.line == 1


@pytest.mark.parametrize("name", sorted(ENTRIES))
def test_corpus_typechecks(name):
    typecheck_src(parse_src(ENTRIES[name].source))


# -- compile --------------------------------------------------------------------------

@pytest.mark.parametrize("backend", [SAFE, UNSAFE])
@pytest.mark.parametrize("name", sorted(ENTRIES))
def test_output_validates(name, backend):
    m = compile_src(ENTRIES[name].source, backend, module_id=name)
    assert check_module(m) == []


def test_backend_module_shapes():
    src = ENTRIES["array_sum"].source
    safe = compile_src(src, SAFE)
    unsafe = compile_src(src, UNSAFE)
    assert any(HANDLE in f.params for f in safe.funcs)
    ops = {i.op for f in unsafe.funcs for i in f.body}
    assert "handle.add" in ops  # only inside the runtime helpers and wrapper
    assert [f.name for f in unsafe.funcs[:len(HELPERS)]] == list(HELPERS)


def test_unsafe_rejects_externs_and_reserved_names():
    with pytest.raises(SourceError, match="UnsupportedConstruct"):
        compile_src("extern lib fn f(); fn main() { f(); }", UNSAFE)
    with pytest.raises(SourceError, match="UnsupportedConstruct"):
        compile_src("fn __malloc() {} fn main() {}", UNSAFE)


def test_array_sum_is_45():
    for backend in (SAFE, UNSAFE):
        assert run_src(ENTRIES["array_sum"].source, backend).value == 45


def test_print_program():
    for backend in (SAFE, UNSAFE):
        assert run_src("fn main() { print(1 + 2); }", backend).output == [3]


def test_off_by_one_write():
    src = ENTRIES["oob_write"].source
    r = run_src(src, SAFE)
    assert r.trap.kind == "OutOfBounds"
    last = r.trace[r.trap.event_index]
    assert last.kind == WRITE and last.addr == 4 * 4  # i = n
    u = run_src(src, UNSAFE, mode=OBSERVE)
    assert u.trap is None
    assert check(u.trace, Policy.FULL).kind == "SpatialOOB"
    bad = u.trace[check(u.trace, Policy.FULL).at]
    assert bad.prov == FORGED


def test_uaf_examples():
    read, write = ENTRIES["uaf_read"], ENTRIES["uaf_write"]
    assert read.run(SAFE, ENFORCE).trap.kind == "UseAfterFree"
    assert write.run(SAFE, ENFORCE).trap.kind == "UseAfterFree"
    assert read.alloc == REUSE
    assert check(read.run(UNSAFE, OBSERVE).trace, Policy.FULL).kind == "UseAfterRealloc"
    assert check(write.run(UNSAFE, OBSERVE).trace, Policy.FULL).kind == "UseAfterFree"


def test_unsafe_without_tracker_runs_silently():
    from mswasm.interpreter import instantiate, run
    m = compile_src(ENTRIES["oob_write"].source, UNSAFE)
    r = run(instantiate([m]), "main")
    assert r.trap is None and len(r.trace) >= 1
    assert r.trace[0].size == FLAT_BYTES


# -- fuzzer ---------------------------------------------------------------------------

def test_fuzz_is_deterministic():
    assert gen_program(7) == gen_program(7)
    assert gen_program(7) != gen_program(8)
    cfg = FuzzConfig(max_helpers=1, bugs=("oob",))
    assert gen_program(3, cfg) == gen_program(3, cfg)


def test_fuzz_unknown_bug():
    with pytest.raises(ValueError):
        gen_program(0, FuzzConfig(bugs=("leak",)))


@given(st.integers(0, 100_000))
def test_backend_agreement_on_fuzzed_programs(seed):
    src = gen_program(seed)
    typecheck_src(parse_src(src))
    safe = run_src(src, SAFE)
    if safe.trap is None:
        unsafe = run_src(src, UNSAFE, mode=OBSERVE)
        assert unsafe.trap is None
        assert unsafe.output == safe.output


@given(st.integers(0, 100_000))
def test_fuzzed_programs_are_memory_safe(seed):
    r = run_src(gen_program(seed), SAFE, mode=OBSERVE)
    assert check(r.trace, Policy.FULL).safe
    assert r.trap is None or r.trap.kind not in ("OutOfBounds", "UseAfterFree", "DoubleFree")


EXPECTED_TRAP = {"oob": "OutOfBounds", "uaf": "UseAfterFree", "double_free": "DoubleFree"}
EXPECTED_VIOLATION = {"oob": "SpatialOOB", "uaf": "UseAfterFree", "double_free": "DoubleFree"}


@pytest.mark.parametrize("bug", BUGS)
@pytest.mark.parametrize("seed", range(5))
def test_bug_switches(bug, seed):
    src = gen_program(seed, FuzzConfig(bugs=(bug,)))
    r = run_src(src, SAFE)
    assert r.trap.kind == EXPECTED_TRAP[bug]
    u = run_src(src, UNSAFE, mode=OBSERVE)
    assert check(u.trace, Policy.FULL).kind == EXPECTED_VIOLATION[bug]
