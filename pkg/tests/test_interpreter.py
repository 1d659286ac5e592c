from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import MSWAT, CORPUS, I, module
from mswasm.interpreter import (ENFORCE, FRESH, MAX_SEGMENT_BYTES, NULL_HANDLE, OBSERVE, REUSE,
                                Handle, LinkError, SegmentStore, TrapSignal, access_check,
                                handle_slice, instantiate, run, run_modules)
from mswasm.ir import HANDLE, I32, FuncDef, FuncType, Import, ModuleDef, parse_module
from mswasm.minic import SAFE, compile_src
from mswasm.minic.fuzz import gen_program
from mswasm.monitors import Policy, check
from mswasm.trace import ALLOC, FREE, READ, WRITE, replay, write_trace

MSW = {p.stem: parse_module(p.read_text()) for p in MSWAT}


def run1(body, results=(), locals_=(HANDLE,), mode=ENFORCE, alloc=FRESH, **kw):
    return run_modules([module(body, results, locals_)], "main", mode=mode, alloc_mode=alloc,
                       **kw)


def new(size, local=0):
    return [I("i32.const", size), I("segment.new"), I("local.set", local)]


def kinds(result):
    return [e.kind for e in result.trace]


# -- examples -----------------------------------------------------------------------

def test_in_bounds_store():
    body = new(8) + [I("local.get", 0), I("i32.const", 4), I("handle.add"),
                     I("i32.const", 1), I("segment.store32")]
    r = run1(body)
    assert r.trap is None and kinds(r) == [ALLOC, WRITE]
    assert r.trace[1].addr == 4 and r.trace[1].size == 4


def test_store_past_end_traps_at_event_two():
    r = run_modules([MSW["store_oob"]], "main")
    assert r.trap.kind == "OutOfBounds" and r.trap.event_index == 2
    assert kinds(r) == [ALLOC, WRITE, WRITE]


def test_use_after_free_through_copy():
    body = new(8) + [I("local.get", 0), I("local.set", 1), I("local.get", 0),
                     I("segment.free"), I("local.get", 1), I("segment.load8")]
    r = run1(body, results=[I32], locals_=(HANDLE, HANDLE))
    assert r.trap.kind == "UseAfterFree"
    assert kinds(r) == [ALLOC, FREE, READ] and r.trap.event_index == 2


def test_observe_reads_stale_zero():
    r = run_modules([MSW["stale_load"]], "main", mode=OBSERVE)
    assert r.trap is None and r.value == 0
    assert r.trace[-1].kind == READ and r.trace[-1].loc[0] == "freed:1"
    enforced = run_modules([MSW["stale_load"]], "main")
    assert enforced.trap.kind == "UseAfterFree" and enforced.trap.event_index == 2


def test_observe_write_to_freed_updates_stale_byte():
    body = new(4) + [I("local.get", 0), I("segment.free"),
                     I("local.get", 0), I("i32.const", 9), I("segment.store8"),
                     I("local.get", 0), I("segment.load8")]
    r = run1(body, results=[I32], mode=OBSERVE)
    assert r.value == 9 and r.trap is None


def test_observe_still_traps_without_a_cell():
    body = new(4) + [I("local.get", 0), I("i32.const", 4), I("handle.add"), I("segment.load8")]
    r = run1(body, results=[I32], mode=OBSERVE)
    assert r.trap.kind == "OutOfBounds"


def test_observe_read_of_neighbour_continues():
    body = new(4) + new(4, 1) + [I("local.get", 0), I("i32.const", 4), I("handle.add"),
                                 I("segment.load8")]
    r = run1(body, results=[I32], locals_=(HANDLE, HANDLE), mode=OBSERVE)
    assert r.trap is None and r.trace[-1].loc == ("other:2",)
    assert check(r.trace, Policy.FULL).kind == "SpatialOOB"


def test_slices_program():
    assert run_modules([MSW["slices"]], "main").value == 9


def test_linked_program():
    assert run_modules([MSW["lib"], MSW["linked"]], "main").value == 42


# -- access_check ---------------------------------------------------------------------

def _store_with(size):
    s = SegmentStore()
    return s, s.new_segment(size)


def test_access_check_boundary_inclusive():
    s, h = _store_with(4)
    assert access_check(h, 4, s) is None
    assert access_check(Handle(h.color, h.base, 1, 4, True), 4, s) == "OutOfBounds"


def test_access_check_negative_offset():
    s, h = _store_with(4)
    assert access_check(Handle(h.color, h.base, -1, 4, True), 1, s) == "OutOfBounds"


def test_access_check_order():
    s, h = _store_with(4)
    assert access_check(NULL_HANDLE, 4, s) == "NullDeref"
    s.free(h.color)
    # not live beats out of bounds
    assert access_check(Handle(h.color, h.base, 100, 4, True), 1, s) == "UseAfterFree"
    assert access_check(Handle(h.color, h.base, 0, 4, False), 1, s) == "NullDeref"


# -- seg_new / seg_free ---------------------------------------------------------------

def test_fresh_allocation_is_disjoint():
    s = SegmentStore(FRESH)
    a, b = s.new_segment(4), s.new_segment(4)
    assert (a.base, b.base) == (0, 4) and a.color != b.color
    s.check_invariants()


def test_reuse_allocation_takes_lowest_gap():
    s = SegmentStore(REUSE)
    a = s.new_segment(4)
    s.free(a.color)
    b = s.new_segment(4)
    assert b.base == 0 and b.color == 2
    s.check_invariants()


def test_reuse_falls_back_to_bump():
    s = SegmentStore(REUSE)
    a = s.new_segment(2)
    s.new_segment(2)
    s.free(a.color)
    assert s.new_segment(3).base == 4
    assert s.new_segment(2).base == 0


def test_zero_sized_segment():
    body = new(0) + [I("local.get", 0), I("segment.load8")]
    r = run1(body, results=[I32])
    assert r.trace[0].size == 0 and r.trap.kind == "OutOfBounds"


def test_segment_size_cap():
    r = run1(new(MAX_SEGMENT_BYTES + 1))
    assert r.trap.kind == "OutOfMemory" and r.trace == []
    assert run1(new(MAX_SEGMENT_BYTES)).trap is None


def test_free_then_trace():
    r = run1(new(8) + [I("local.get", 0), I("segment.free")])
    assert r.trap is None and kinds(r) == [ALLOC, FREE]


def test_double_free_traps():
    r = run1(new(8) + [I("local.get", 0), I("segment.free")] * 2)
    assert r.trap.kind == "DoubleFree" and kinds(r) == [ALLOC, FREE, FREE]


def test_observe_double_free_continues():
    r = run1(new(8) + [I("local.get", 0), I("segment.free")] * 2, mode=OBSERVE)
    assert r.trap is None
    assert check(r.trace, Policy.FULL).kind == "DoubleFree"


def test_free_null_handle():
    r = run1([I("handle.null"), I("segment.free")])
    assert r.trap.kind == "NullDeref"


def test_free_from_interior_offset():
    body = new(8) + [I("local.get", 0), I("i32.const", 5), I("handle.add"), I("segment.free"),
                     I("local.get", 0), I("segment.load8")]
    r = run1(body, results=[I32])
    assert r.trap.kind == "UseAfterFree"


# -- slices -------------------------------------------------------------------------

def test_slice_view():
    h = Handle(1, 10, 3, 8, True)
    v = handle_slice(h, 2, 4)
    assert (v.color, v.base, v.offset, v.bound, v.valid) == (1, 12, 0, 4, True)


def test_slice_out_of_range():
    with pytest.raises(TrapSignal):
        handle_slice(Handle(1, 0, 0, 8, True), 2, 8)
    with pytest.raises(TrapSignal):
        handle_slice(NULL_HANDLE, 0, 0)


def test_identity_slice():
    h = Handle(1, 0, 5, 8, True)
    assert handle_slice(h, 0, 8) == Handle(1, 0, 0, 8, True)


@given(st.integers(0, 16), st.integers(-4, 20), st.integers(-4, 20))
def test_slice_never_widens(bound, start, length):
    h = Handle(1, 100, 0, bound, True)
    try:
        v = handle_slice(h, start, length)
    except TrapSignal as t:
        assert t.kind == "InvalidSlice"
        return
    assert h.base <= v.base and v.base + v.bound <= h.base + h.bound


def test_slice_trap_in_program():
    body = new(8) + [I("local.get", 0), I("i32.const", 2), I("i32.const", 8), I("handle.slice"),
                     I("drop")]
    assert run1(body).trap.kind == "InvalidSlice"


# -- linking --------------------------------------------------------------------------

def _exporter():
    f = FuncDef("f", (I32,), (I32,), (), (I("local.get", 0),), True)
    return ModuleDef("lib", (f,))


def _importer(params):
    imp = Import("lib", "f", FuncType(tuple(params), (I32,)))
    main = FuncDef("main", (), (I32,), (),
                   tuple([I("i32.const", 1)] * len(params) + [I("call", 0)]), True)
    return ModuleDef("ctx", (main,), (imp,))


def test_link_ok():
    p = instantiate([_exporter(), _importer((I32,))])
    assert run(p, "main").value == 1


def test_link_wrong_arity():
    with pytest.raises(LinkError):
        instantiate([_exporter(), _importer((I32, I32))])


def test_link_missing_module():
    with pytest.raises(LinkError):
        instantiate([_importer((I32,))])


def test_single_module_links():
    assert instantiate([MSW["slices"]]).order == ["slices"]


def test_duplicate_module_and_entry_errors():
    with pytest.raises(LinkError):
        instantiate([MSW["slices"], MSW["slices"]])
    with pytest.raises(LinkError):
        run(instantiate([MSW["slices"]]), "nope")


# -- properties -----------------------------------------------------------------

def _programs():
    srcs = [(p.name, (CORPUS / p.name / "prog.minic").read_text())
            for p in sorted(CORPUS.iterdir()) if (p / "prog.minic").exists()]
    return srcs


def test_determinism_on_fuzzed_programs():
    for seed in range(30):
        m = compile_src(gen_program(seed), SAFE)
        for mode in (ENFORCE, OBSERVE):
            a = run_modules([m], "main", mode=mode)
            b = run_modules([m], "main", mode=mode)
            assert write_trace(a.trace) == write_trace(b.trace)
            assert a.output == b.output and a.outcome == b.outcome


@pytest.mark.parametrize("name, src", _programs(), ids=[n for n, _ in _programs()])
def test_audit_mode_holds_store_invariants(name, src):
    m = compile_src(src, SAFE)
    args = [5] if "secret" in src else []
    for mode in (ENFORCE, OBSERVE):
        for alloc in (FRESH, REUSE):
            r = run_modules([m], "main", args, mode=mode, alloc_mode=alloc, audit=True)
            replay(r.trace)


def test_zero_init():
    body = new(4) + [I("local.get", 0), I("i32.const", 1), I("handle.add"), I("segment.load8")]
    assert run1(body, results=[I32]).value == 0


@given(st.integers(0, 5_000))
def test_enforce_soundness_and_color_freshness(seed):
    m = compile_src(gen_program(seed), SAFE)
    r = run_modules([m], "main")
    replay(r.trace)
    body = r.trace[:-1] if r.trap else r.trace
    assert check(body, Policy.FULL).safe
    colors = [e.color for e in r.trace if e.kind == ALLOC]
    assert len(colors) == len(set(colors))


def test_fuel_exhaustion():
    loop = [I("loop", body=[I("br", 0)])]
    r = run1(loop, locals_=(), fuel=1000)
    assert r.trap.kind == "FuelExhausted"


def test_div_by_zero():
    r = run1([I("i32.const", 1), I("i32.const", 0), I("i32.div_s")], results=[I32], locals_=())
    assert r.trap.kind == "DivByZero"
