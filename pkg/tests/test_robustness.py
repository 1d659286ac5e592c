from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import COMPONENTS, I
from mswasm.interpreter import OBSERVE, Crossing, Trap
from mswasm.ir import HANDLE, I32, FuncDef, FuncType, Import, ModuleDef, check_module
from mswasm.robustness import (CONTEXT_ID, FREE_THEN_CALL, AdversarialContext,
                               RobustnessSpec, Witness, WitnessCatalog, audit_leaks,
                               gen_contexts, load_components, load_witnesses,
                               robust_component, rsp_run, run_context, witness_check)
from mswasm.trace import ALLOC, FREE, LEGIT, READ, TraceEvent, freed

COMPS = {c.name: c for c in load_components(COMPONENTS)}


def ops(module):
    out = []

    def walk(body):
        for i in body:
            out.append((i.op, i.arg))
            walk(i.body)
            walk(i.orelse)
    for f in module.funcs:
        walk(f.body)
    return out


# -- context generation ------------------------------------------------------------

def test_trivial_interface_context():
    [ctx] = gen_contexts({}, seed=0, n=1, component="empty")
    assert ctx.module.imports == ()
    names = [op for op, _ in ops(ctx.module)]
    assert "call" not in names
    assert "segment.new" in names and "segment.free" in names
    assert check_module(ctx.module) == []


def test_bare_interface_needs_component():
    with pytest.raises(ValueError):
        gen_contexts({}, 0, 1)


GET_BUF = {"get_buf": FuncType((), (HANDLE,)), "peek": FuncType((HANDLE, I32), (I32,)),
           "reset": FuncType((), ())}


def test_free_returned_then_call_pattern_occurs():
    ctxs = gen_contexts(GET_BUF, seed=0, n=50, component="lib")
    hits = [c for c in ctxs if FREE_THEN_CALL in c.patterns]
    assert hits
    names = [op for op, _ in ops(hits[0].module)]
    first_free = names.index("segment.free")
    assert "call" in names[first_free:]


@given(st.integers(0, 10_000))
def test_contexts_validate(seed):
    for c in COMPS.values():
        for ctx in gen_contexts(c.module, seed, 4):
            assert check_module(ctx.module) == []
            assert ctx.module.id == CONTEXT_ID


def test_generation_is_deterministic():
    a = gen_contexts(COMPS["bufpool"].module, 3, 10)
    b = gen_contexts(COMPS["bufpool"].module, 3, 10)
    assert a == b
    assert a != gen_contexts(COMPS["bufpool"].module, 4, 10)
    assert [c.id for c in a] == [f"ctx-{i:04d}" for i in range(10)]


# -- the predicate -------------------------------------------------------------------

def ev(i, kind, color, owner, addr=None, size=None, loc=()):
    prov = LEGIT if kind not in (ALLOC, FREE) else None
    return TraceEvent(i, kind, color, owner, addr, size, prov, tuple(loc))


SPEC = RobustnessSpec("lib")
COMP_UAF = [ev(0, ALLOC, 1, "lib", 0, 4), ev(1, FREE, 1, "ctx"),
            ev(2, READ, 1, "lib", 0, 4, [freed(1)] * 4)]
CTX_UAF = [ev(0, ALLOC, 1, "ctx", 0, 4), ev(1, FREE, 1, "ctx"),
           ev(2, READ, 1, "ctx", 0, 4, [freed(1)] * 4)]


def test_judge_statuses():
    trap = Trap("UseAfterFree", 2)
    assert SPEC.judge(COMP_UAF[:1])[0] == "ok"
    assert SPEC.judge(COMP_UAF, trap, {"UseAfterFree"})[0] == "blocked"
    assert SPEC.judge(COMP_UAF, trap)[0] == "unwitnessed"
    assert SPEC.judge(COMP_UAF)[0] == "violation"
    assert SPEC.judge(CTX_UAF, trap)[0] == "self-harm"


def test_context_touching_component_memory_is_attributed():
    t = [ev(0, ALLOC, 1, "lib", 0, 4), ev(1, FREE, 1, "lib"),
         ev(2, READ, 1, "ctx", 0, 4, [freed(1)] * 4)]
    assert SPEC.judge(t)[0] == "violation"


def test_predicate_is_prefix_monotone():
    bad_at = None
    for k in range(len(COMP_UAF) + 1):
        status = SPEC.judge(COMP_UAF[:k])[0]
        if bad_at is not None:
            assert status == "violation"
        elif status == "violation":
            bad_at = k
    assert bad_at == 3


# -- runs ---------------------------------------------------------------------------

def _ctx(body, imports=(), locals_=(HANDLE,)):
    main = FuncDef("main", (), (), tuple(locals_), tuple(body), True)
    return AdversarialContext("ctx-x", ModuleDef(CONTEXT_ID, (main,), tuple(imports)))


def test_context_double_free_is_benign():
    body = [I("i32.const", 8), I("segment.new"), I("local.set", 0),
            I("local.get", 0), I("segment.free"), I("local.get", 0), I("segment.free")]
    r = run_context(COMPS["checksum"].module, _ctx(body), RobustnessSpec("checksum"))
    assert r.trap == "DoubleFree" and r.status == "self-harm" and not r.failed


def test_link_failure_is_per_context():
    bad = _ctx([], imports=[Import("checksum", "missing", FuncType((), ()))], locals_=())
    good = _ctx([], locals_=())
    good = AdversarialContext("ctx-y", good.module)
    rep = rsp_run(COMPS["checksum"].module, [bad, good], RobustnessSpec("checksum"))
    assert [r.status for r in rep.results] == ["link-error", "ok"]


@pytest.mark.parametrize("name", sorted(COMPS))
def test_components_have_no_violations(name):
    rep = robust_component(COMPS[name], n=60, seed=11)
    assert rep.violations == []
    assert len(rep.results) == 60


def test_report_is_deterministic():
    a = robust_component(COMPS["sorter"], n=40, seed=5)
    b = robust_component(COMPS["sorter"], n=40, seed=5)
    assert a.lines() == b.lines() and a.summary() == b.summary()
    rec = json.loads(a.lines()[0])
    assert set(rec) >= {"component", "context", "outcome", "trap", "status", "leaks"}
    assert a.summary().endswith("0 violations")


def test_observe_mode_ablation_finds_violations():
    rep = robust_component(COMPS["bufpool"], n=50, seed=0, mode=OBSERVE)
    assert rep.violations
    assert all(r.status == "violation" for r in rep.violations)


# -- capability leaks -----------------------------------------------------------------

def test_leak_audit_flags_exported_secret():
    rep = robust_component(COMPS["leaky_secret"], n=40, seed=0)
    assert rep.leaks and not rep.violations
    assert robust_component(COMPS["checksum"], n=40, seed=0).leaks == []


def test_audit_leaks_exact():
    cross = [Crossing("out", "ctx", "lib", "get", 1), Crossing("out", "ctx", "lib", "get", 2),
             Crossing("in", "ctx", "lib", "put", 1), Crossing("out", "lib", "lib", "x", 1)]
    assert audit_leaks(cross, "lib", {1}) == [1]
    assert audit_leaks(cross, "lib", {1, 2}) == [1, 2]
    assert audit_leaks(cross, "lib", set()) == []


# -- catalog ------------------------------------------------------------------------

def test_empty_catalog():
    assert witness_check(WitnessCatalog(), {}) == []
    assert COMPS["checksum"].catalog.entries == []


def test_shipped_catalog_passes():
    results = []
    for c in COMPS.values():
        results += witness_check(c.catalog, COMPS)
    assert len(results) >= 8
    assert all(r.ok for r in results), [str(r) for r in results if not r.ok]
    assert str(results[0]).startswith("PASS ")


def test_kind_mismatch_fails():
    w = COMPS["bufpool"].catalog.entries[0]
    wrong = Witness(w.component, w.id, "DoubleFree", w.source)
    [r] = witness_check(WitnessCatalog([wrong]), COMPS)
    assert not r.ok
    assert str(r) == f"FAIL bufpool/{w.id} expected DoubleFree observed UseAfterFree"


def test_compile_failure_is_reported_per_entry():
    w = Witness("bufpool", "broken", "UseAfterFree", "fn main( {")
    [r] = witness_check(WitnessCatalog([w]), COMPS)
    assert not r.ok and r.observed.startswith("error:")


def test_witness_file_is_strict(tmp_path):
    p = tmp_path / "witnesses.toml"
    p.write_text('[[witness]]\nid = "a"\nkind = "DoubleFree"\nsource = ""\ncolour = 1\n')
    with pytest.raises(ValueError, match="unknown witness field"):
        load_witnesses(p, "x")
    assert load_witnesses(tmp_path / "absent.toml", "x").entries == []
