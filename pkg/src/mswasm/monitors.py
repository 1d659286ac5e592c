"""Color-tag memory-safety monitors and their relaxations.

Five policies, each a prefix-closed predicate over a trace:

``full``
    every accessed byte carries the accessing color; no double free.
``spatial``
    every accessed byte lies in the footprint recorded when the color was
    allocated; lifetime is ignored.
``relaxed-temporal``
    spatial, and no accessed byte has been handed to another color since
    (dangling access to freed-but-not-reallocated memory is tolerated);
    no double free.
``pointer-integrity``
    no access through a forged pointer.
``data-integrity``
    the ``full`` byte check, applied to writes only.

:func:`check` evaluates a whole trace directly; :func:`check_incremental` is
the reference-monitor form. The two are implemented separately and must agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .trace import ALLOC, FORGED, FREE, SAME, WRITE, InvalidTrace, Trace, TraceEvent, \
    parse_loc, replay, walk_traces


class Policy(Enum):
    FULL = "full"
    SPATIAL = "spatial"
    RELAXED_TEMPORAL = "relaxed-temporal"
    POINTER_INTEGRITY = "pointer-integrity"
    DATA_INTEGRITY = "data-integrity"

    def __str__(self) -> str:
        return self.value


SPATIAL_OOB = "SpatialOOB"
USE_AFTER_FREE = "UseAfterFree"
USE_AFTER_REALLOC = "UseAfterRealloc"
DOUBLE_FREE = "DoubleFree"
FORGED_ACCESS = "ForgedAccess"
INTEGRITY_WRITE = "IntegrityWrite"
VIOLATION_KINDS = (SPATIAL_OOB, USE_AFTER_FREE, USE_AFTER_REALLOC, DOUBLE_FREE,
                   FORGED_ACCESS, INTEGRITY_WRITE)


@dataclass(frozen=True)
class Safe:
    safe = True

    def __str__(self) -> str:
        return "SAFE"


@dataclass(frozen=True)
class Violation:
    kind: str
    at: int
    color: int
    safe = False

    def __str__(self) -> str:
        return f"VIOLATION {self.kind} at {self.at} color {self.color}"


SAFE = Safe()
Verdict = Safe | Violation


def _inside(fp, addr):
    return fp is not None and fp[0] <= addr < fp[0] + fp[1]


# -- batch --------------------------------------------------------------------

def _full_kind(e: TraceEvent, fp, freed_then: bool) -> str | None:
    """Full-policy classification of one access; None when every byte is ``same``."""
    if all(tok == SAME for tok in e.loc):
        return None
    if fp is None or not freed_then:
        return SPATIAL_OOB
    for k, tok in enumerate(e.loc):
        state, c = parse_loc(tok)
        if _inside(fp, e.addr + k) and (state == "other" or (state == "freed" and c != e.color)):
            return USE_AFTER_REALLOC
    return USE_AFTER_FREE


def check(t: Trace, p: Policy) -> Verdict:
    """First violation of ``p`` in ``t``; raises :class:`InvalidTrace` if ``t`` does not replay."""
    footprint = replay(t)
    alloc_at = {e.color: e.index for e in t if e.kind == ALLOC}
    first_free: dict[int, int] = {}
    for e in t:
        if e.kind == FREE:
            first_free.setdefault(e.color, e.index)

    def fp_at(color, i):
        return footprint[color] if alloc_at.get(color, i) < i else None

    def freed_before(color, i):
        return first_free.get(color, i) < i

    for e in t:
        i = e.index
        if e.kind == FREE:
            if p in (Policy.FULL, Policy.RELAXED_TEMPORAL) and freed_before(e.color, i):
                return Violation(DOUBLE_FREE, i, e.color)
            continue
        if not e.is_access:
            continue
        fp = fp_at(e.color, i)
        if p is Policy.POINTER_INTEGRITY:
            if e.prov == FORGED:
                return Violation(FORGED_ACCESS, i, e.color)
        elif p is Policy.FULL:
            kind = _full_kind(e, fp, freed_before(e.color, i))
            if kind:
                return Violation(kind, i, e.color)
        elif p is Policy.DATA_INTEGRITY:
            if e.kind == WRITE and _full_kind(e, fp, freed_before(e.color, i)):
                return Violation(INTEGRITY_WRITE, i, e.color)
        else:
            addrs = range(e.addr, e.addr + e.size)
            if not all(_inside(fp, a) for a in addrs):
                return Violation(SPATIAL_OOB, i, e.color)
            if p is Policy.RELAXED_TEMPORAL and \
                    any(tok not in (SAME, f"freed:{e.color}") for tok in e.loc):
                return Violation(USE_AFTER_REALLOC, i, e.color)
    return SAFE


def check_all(t: Trace, policies: Iterable[Policy] = Policy) -> dict[Policy, Verdict]:
    return {p: check(t, p) for p in policies}


# -- incremental ----------------------------------------------------------------

@dataclass(frozen=True)
class MonitorState:
    """Fold state. ``footprints`` is never mutated; transitions copy it."""

    policy: Policy
    footprints: dict = field(default_factory=dict)
    freed: frozenset = frozenset()
    violation: Violation | None = None

    def footprint(self, color: int) -> tuple[int, int] | None:
        return self.footprints.get(color)


def monitor_init(p: Policy) -> MonitorState:
    return MonitorState(p)


def _byte_state(state: MonitorState, e: TraceEvent, k: int) -> str:
    tok = e.loc[k]
    if tok == SAME:
        return "ok"
    fp = state.footprints.get(e.color)
    if not _inside(fp, e.addr + k):
        return "outside"
    if tok == f"freed:{e.color}":
        return "dangling"
    return "reused"


def _access_violation(state: MonitorState, e: TraceEvent) -> str | None:
    p = state.policy
    if p is Policy.POINTER_INTEGRITY:
        return FORGED_ACCESS if e.prov == FORGED else None
    if p is Policy.DATA_INTEGRITY and e.kind != WRITE:
        return None
    states = [_byte_state(state, e, k) for k in range(e.size)]
    if p is Policy.SPATIAL:
        return SPATIAL_OOB if "outside" in states else None
    if p is Policy.RELAXED_TEMPORAL:
        if "outside" in states:
            return SPATIAL_OOB
        return USE_AFTER_REALLOC if "reused" in states else None
    if all(s == "ok" for s in states):
        return None
    if p is Policy.DATA_INTEGRITY:
        return INTEGRITY_WRITE
    if e.color not in state.freed:
        return SPATIAL_OOB
    return USE_AFTER_REALLOC if "reused" in states else USE_AFTER_FREE


def check_incremental(state: MonitorState, e: TraceEvent,
                      p: Policy | None = None) -> tuple[MonitorState, Violation | None]:
    """One monitor step. Once a violation is found the state is terminal."""
    if p is not None and p is not state.policy:
        raise ValueError(f"state belongs to policy {state.policy}, not {p}")
    if state.violation is not None:
        return state, None
    if e.kind == ALLOC:
        if e.color in state.footprints:
            raise InvalidTrace(f"color {e.color} allocated twice", e.index)
        fps = dict(state.footprints)
        fps[e.color] = (e.addr, e.size)
        return MonitorState(state.policy, fps, state.freed), None
    if e.kind == FREE:
        if e.color not in state.footprints:
            raise InvalidTrace(f"free of never-allocated color {e.color}", e.index)
        if e.color in state.freed:
            if state.policy in (Policy.FULL, Policy.RELAXED_TEMPORAL):
                v = Violation(DOUBLE_FREE, e.index, e.color)
                return MonitorState(state.policy, state.footprints, state.freed, v), v
            return state, None
        return MonitorState(state.policy, state.footprints, state.freed | {e.color}), None
    kind = _access_violation(state, e)
    if kind is None:
        return state, None
    v = Violation(kind, e.index, e.color)
    return MonitorState(state.policy, state.footprints, state.freed, v), v


def fold(t: Iterable[TraceEvent], p: Policy) -> Verdict:
    state = monitor_init(p)
    for e in t:
        state, v = check_incremental(state, e, p)
        if v is not None:
            return v
    return SAFE


# -- lattice ----------------------------------------------------------------------

IMPLICATIONS = (
    (Policy.FULL, Policy.RELAXED_TEMPORAL),
    (Policy.RELAXED_TEMPORAL, Policy.SPATIAL),
    (Policy.FULL, Policy.DATA_INTEGRITY),
)


def implication_name(strong: Policy, weak: Policy) -> str:
    return f"{strong}=>{weak}"


@dataclass
class LatticeReport:
    traces: int = 0
    counterexamples: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not any(self.counterexamples.values()) and all(
            self.witnesses.get(implication_name(*imp)) for imp in IMPLICATIONS)


def lattice_check(max_len: int = 5, colors: int = 2, addrs: int = 4, sizes: int = 2
                  ) -> LatticeReport:
    """Check the policy implications over every store-consistent trace in the universe.

    Counterexamples are listed verbatim. A strictness witness for ``A=>B`` is
    the shortest trace safe under B but not under A.
    """
    policies = sorted({p for imp in IMPLICATIONS for p in imp}, key=lambda p: p.value)
    report = LatticeReport()
    for imp in IMPLICATIONS:
        report.counterexamples[implication_name(*imp)] = []
    # per-depth monitor states; preorder means depth d's parent sits at d - 1
    stack: list[dict] = [{p: monitor_init(p) for p in policies}]
    for trace, new in walk_traces(max_len, colors, addrs, sizes):
        depth = len(trace)
        del stack[depth:]
        parent = stack[depth - 1]
        states = {p: check_incremental(parent[p], trace[-1], p)[0] for p in policies}
        stack.append(states)
        if not new:
            continue
        report.traces += 1
        safe = {p: states[p].violation is None for p in policies}
        for strong, weak in IMPLICATIONS:
            name = implication_name(strong, weak)
            if safe[strong] and not safe[weak]:
                report.counterexamples[name].append(tuple(trace))
            if safe[weak] and not safe[strong]:
                best = report.witnesses.get(name)
                if best is None or len(trace) < len(best):
                    report.witnesses[name] = tuple(trace)
    return report


# -- 2-hypersafety ----------------------------------------------------------------

class InvalidRelation(ValueError):
    pass


@dataclass(frozen=True)
class PairSafe:
    safe = True

    def __str__(self) -> str:
        return "SAFE"


@dataclass(frozen=True)
class ViolationPair:
    """Observations first differ at ``index``; prefixes are (events, prints) consumed."""

    index: int
    left: tuple[int, int]
    right: tuple[int, int]
    safe = False

    def __str__(self) -> str:
        return (f"VIOLATION-PAIR at observation {self.index} prefixes "
                f"{self.left[0]}+{self.left[1]} / {self.right[0]}+{self.right[1]}")


@dataclass(frozen=True)
class PairRelation:
    """Public observations: every print, plus writes into the ``public_colors`` footprints."""

    public_colors: frozenset
    description: str = "prints and public-segment writes"

    def project(self, trace: Trace, prints: Sequence[tuple[int, int]]) -> list:
        """``prints`` holds (value, number of events emitted before the print)."""
        fps = {e.color: (e.addr, e.size) for e in trace if e.kind == ALLOC}
        missing = set(self.public_colors) - set(fps)
        if missing:
            raise InvalidRelation(f"public color(s) {sorted(missing)} never allocated")
        out = []
        pi = 0

        def flush(upto):
            nonlocal pi
            while pi < len(prints) and prints[pi][1] <= upto:
                out.append((("print", prints[pi][0]), (prints[pi][1], pi + 1)))
                pi += 1

        for e in trace:
            flush(e.index)
            if e.kind == WRITE:
                for c in sorted(self.public_colors):
                    base, size = fps[c]
                    if any(base <= a < base + size for a in range(e.addr, e.addr + e.size)):
                        out.append((("write", c, e.addr - base, e.size), (e.index + 1, pi)))
                        break
        flush(len(trace))
        return out


def check_pair(t1: Trace, prints1, t2: Trace, prints2, r: PairRelation):
    """Compare public projections of two runs; the shortest distinguishing prefix pair."""
    a = r.project(t1, prints1)
    b = r.project(t2, prints2)
    for k in range(max(len(a), len(b))):
        oa = a[k] if k < len(a) else None
        ob = b[k] if k < len(b) else None
        if oa is None or ob is None or oa[0] != ob[0]:
            end1 = oa[1] if oa else (len(t1), len(prints1))
            end2 = ob[1] if ob else (len(t2), len(prints2))
            return ViolationPair(k, end1, end2)
    return PairSafe()
