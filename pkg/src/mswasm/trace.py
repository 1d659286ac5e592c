"""Memory-event traces: the alphabet every memory-safety policy is stated over.

An event is one of alloc/free/read/write. Reads and writes carry a per-byte
snapshot of the location state they touched (``loc``), so policies are pure
folds over the event list; :func:`replay` re-derives those snapshots from a
fresh simulated store and rejects any trace whose snapshots disagree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

ALLOC, FREE, READ, WRITE = "alloc", "free", "read", "write"
KINDS = (ALLOC, FREE, READ, WRITE)
LEGIT, FORGED = "legit", "forged"

SAME = "same"
NONE = "none"

UNIVERSE_LIMITS = {"colors": 3, "addrs": 4, "sizes": 2, "max_len": 6}


@dataclass(frozen=True)
class TraceEvent:
    index: int
    kind: str
    color: int
    owner: str
    addr: int | None = None
    size: int | None = None
    prov: str | None = None
    loc: tuple[str, ...] = ()

    @property
    def is_access(self) -> bool:
        return self.kind in (READ, WRITE)

    def reindexed(self, index: int) -> TraceEvent:
        return TraceEvent(index, self.kind, self.color, self.owner, self.addr, self.size,
                          self.prov, self.loc)


Trace = Sequence[TraceEvent]


def other(color: int) -> str:
    return f"other:{color}"


def freed(color: int) -> str:
    return f"freed:{color}"


def parse_loc(token: str) -> tuple[str, int | None]:
    """Split a loc token into (state, color)."""
    if token in (SAME, NONE):
        return token, None
    state, _, c = token.partition(":")
    return state, int(c)


class TraceFormatError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class InvalidTrace(ValueError):
    """The trace cannot be replayed against a store."""

    def __init__(self, msg: str, index: int):
        super().__init__(f"event {index}: {msg}")
        self.index = index


# -- line-delimited records ---------------------------------------------------

_FIELDS = {
    ALLOC: ("idx", "kind", "color", "addr", "size", "owner"),
    FREE: ("idx", "kind", "color", "owner"),
    READ: ("idx", "kind", "color", "addr", "size", "prov", "owner", "loc"),
    WRITE: ("idx", "kind", "color", "addr", "size", "prov", "owner", "loc"),
}


def event_record(e: TraceEvent) -> dict:
    rec = {"idx": e.index, "kind": e.kind, "color": e.color}
    if e.kind != FREE:
        rec["addr"] = e.addr
        rec["size"] = e.size
    if e.is_access:
        rec["prov"] = e.prov
    rec["owner"] = e.owner
    if e.is_access:
        rec["loc"] = ",".join(e.loc)
    return rec


def write_trace(events: Iterable[TraceEvent]) -> str:
    return "".join(json.dumps(event_record(e), separators=(",", ":")) + "\n" for e in events)


def _check_int(rec, key, lineno, minimum=0):
    v = rec[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise TraceFormatError(f"field {key!r} must be an integer >= {minimum}", lineno)
    return v


def _valid_loc_token(tok: str) -> bool:
    if tok in (SAME, NONE):
        return True
    state, sep, c = tok.partition(":")
    return sep == ":" and state in ("other", "freed") and c.isdigit()


def read_trace(text: str) -> list[TraceEvent]:
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            raise TraceFormatError("blank line", lineno)
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceFormatError(f"not a JSON object: {e.msg}", lineno) from None
        if not isinstance(rec, dict):
            raise TraceFormatError("not a JSON object", lineno)
        kind = rec.get("kind")
        if kind not in _FIELDS:
            raise TraceFormatError(f"unknown kind {kind!r}", lineno)
        fields = _FIELDS[kind]
        extra = set(rec) - set(fields)
        missing = [f for f in fields if f not in rec]
        if extra:
            raise TraceFormatError(f"unknown field(s) {sorted(extra)} for {kind}", lineno)
        if missing:
            raise TraceFormatError(f"missing field(s) {missing} for {kind}", lineno)
        idx = _check_int(rec, "idx", lineno)
        if idx != len(events):
            raise TraceFormatError(f"index gap: expected idx {len(events)}, got {idx}", lineno)
        color = _check_int(rec, "color", lineno)
        if not isinstance(rec["owner"], str):
            raise TraceFormatError("field 'owner' must be a string", lineno)
        addr = size = prov = None
        loc: tuple[str, ...] = ()
        if kind != FREE:
            addr = _check_int(rec, "addr", lineno, 0 if kind == ALLOC else -(1 << 63))
            size = _check_int(rec, "size", lineno, minimum=1 if kind != ALLOC else 0)
        if kind in (READ, WRITE):
            prov = rec["prov"]
            if prov not in (LEGIT, FORGED):
                raise TraceFormatError(f"unknown provenance {prov!r}", lineno)
            if not isinstance(rec["loc"], str):
                raise TraceFormatError("field 'loc' must be a string", lineno)
            loc = tuple(rec["loc"].split(","))
            if len(loc) != size or not all(map(_valid_loc_token, loc)):
                raise TraceFormatError("loc must hold one valid token per byte", lineno)
        events.append(TraceEvent(idx, kind, color, rec["owner"], addr, size, prov, loc))
    return events


# -- replay auditor -------------------------------------------------------------

def replay(events: Trace) -> dict[int, tuple[int, int]]:
    """Check store-consistency; returns the footprint of every allocated color.

    Cells are ``+c`` (allocated to c) or ``-c`` (freed, last color c); absent
    means no cell exists.
    """
    cells: dict[int, int] = {}
    footprint: dict[int, tuple[int, int]] = {}
    live: set[int] = set()
    for n, e in enumerate(events):
        if e.index != n:
            raise InvalidTrace(f"index {e.index} out of sequence", n)
        if e.kind == ALLOC:
            if e.color < 1 or e.color in footprint:
                raise InvalidTrace(f"color {e.color} is not fresh", n)
            if e.addr is None or e.size is None or e.addr < 0 or e.size < 0:
                raise InvalidTrace("alloc needs addr and size", n)
            for a in range(e.addr, e.addr + e.size):
                if cells.get(a, 0) > 0:
                    raise InvalidTrace(f"address {a} is already allocated", n)
            for a in range(e.addr, e.addr + e.size):
                cells[a] = e.color
            footprint[e.color] = (e.addr, e.size)
            live.add(e.color)
        elif e.kind == FREE:
            if e.color not in footprint:
                raise InvalidTrace(f"free of never-allocated color {e.color}", n)
            if e.color in live:
                base, size = footprint[e.color]
                for a in range(base, base + size):
                    cells[a] = -e.color
                live.discard(e.color)
        elif e.kind in (READ, WRITE):
            if e.size is None or e.size < 1 or e.addr is None or len(e.loc) != e.size:
                raise InvalidTrace("access needs addr, size >= 1 and one loc per byte", n)
            for k, a in enumerate(range(e.addr, e.addr + e.size)):
                want = loc_token(cells.get(a, 0), e.color)
                if e.loc[k] != want:
                    raise InvalidTrace(f"loc of byte {a} is {e.loc[k]!r}, store says {want!r}", n)
        else:
            raise InvalidTrace(f"unknown kind {e.kind!r}", n)
    return footprint


def loc_token(cell: int, color: int) -> str:
    if cell == 0:
        return NONE
    if cell > 0:
        return SAME if cell == color else other(cell)
    return freed(-cell)


# -- bounded enumeration --------------------------------------------------------

def check_universe(max_len: int, colors: int, addrs: int, sizes: int) -> None:
    got = {"colors": colors, "addrs": addrs, "sizes": sizes, "max_len": max_len}
    for key, limit in UNIVERSE_LIMITS.items():
        if not 1 <= got[key] <= limit:
            raise ValueError(f"universe too large: {key}={got[key]} (limit 1..{limit})")


def _reuse_addr(cells, bump, size):
    """Lowest maximal run of non-allocated cells below ``bump`` that fits, else ``bump``."""
    if size == 0:
        return bump
    run_start, run_len = 0, 0
    for a in range(bump):
        if cells[a] > 0:
            run_start, run_len = a + 1, 0
            continue
        run_len += 1
        if run_len >= size:
            return run_start
    return bump


def _walk(max_len, n_colors, n_addrs, sizes, provs, reuse, owner) -> Iterator:
    """DFS over store-consistent traces; yields ``(trace, new)`` in preorder.

    In a reuse-mode walk a node is *new* once some alloc picked a different
    address than the fresh allocator would have; other nodes duplicate the
    fresh-mode walk.
    """
    # node: cells (one entry per address), bump, next color, footprints, live, diverged, trace
    stack = [((0,) * n_addrs, 0, 1, (), frozenset(), False, ())]
    while stack:
        cells, bump, next_color, fps, live, diverged, trace = stack.pop()
        if trace:
            yield trace, diverged or not reuse
        if len(trace) == max_len:
            continue
        idx = len(trace)
        children = []
        if next_color <= n_colors:
            for s in sizes:
                fa = bump
                a = _reuse_addr(cells, bump, s) if reuse else fa
                if a + s > n_addrs:
                    continue
                nc = list(cells)
                for x in range(a, a + s):
                    nc[x] = next_color
                e = TraceEvent(idx, ALLOC, next_color, owner, a, s)
                children.append((tuple(nc), max(bump, a + s), next_color + 1,
                                 fps + ((a, s),), live | {next_color}, diverged or a != fa,
                                 trace + (e,)))
        for c in range(1, next_color):
            new_cells, new_live = cells, live
            if c in live:
                base, size = fps[c - 1]
                nc = list(cells)
                for x in range(base, base + size):
                    nc[x] = -c
                new_cells, new_live = tuple(nc), live - {c}
            e = TraceEvent(idx, FREE, c, owner)
            children.append((new_cells, bump, next_color, fps, new_live, diverged,
                             trace + (e,)))
        for kind in (READ, WRITE):
            for c in range(1, next_color):
                for s in sizes:
                    for a in range(0, n_addrs - s + 1):
                        loc = tuple(loc_token(cells[x], c) for x in range(a, a + s))
                        for p in provs:
                            e = TraceEvent(idx, kind, c, owner, a, s, p, loc)
                            children.append((cells, bump, next_color, fps, live, diverged,
                                             trace + (e,)))
        stack.extend(reversed(children))


def walk_traces(max_len: int, colors: int, addrs: int, sizes: int,
                provs: Sequence[str] = (LEGIT,), owner: str = "m") -> Iterator:
    """Preorder ``(trace, new)`` pairs over both alloc modes (fresh walk, then reuse)."""
    check_universe(max_len, colors, addrs, sizes)
    size_set = tuple(range(1, sizes + 1))
    for reuse in (False, True):
        yield from _walk(max_len, colors, addrs, size_set, tuple(provs), reuse, owner)


def enumerate_traces(max_len: int, colors: int, addrs: int, sizes: int,
                     provs: Sequence[str] = (LEGIT,), owner: str = "m") -> Iterator:
    """Every distinct store-consistent trace of length 1..max_len, each exactly once."""
    for trace, new in walk_traces(max_len, colors, addrs, sizes, provs, owner):
        if new:
            yield trace
