"""Deterministic evaluator for linked MSWasm modules.

Segment memory is modelled per byte. Every segment access and free goes
through :meth:`SegmentStore` checks and emits a :class:`~mswasm.trace.TraceEvent`.

Two enforcement modes:

* ``enforce`` -- a failed check emits its event and traps.
* ``observe`` -- artifact device for producing violating traces: temporal and
  spatial violations proceed on the stale/foreign byte; an access touching an
  address with no cell still traps with ``OutOfBounds``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Sequence

from .ir.syntax import HANDLE, LOAD_WIDTH, STORE_WIDTH, FuncDef, ModuleDef
from .ir.validate import TypedModule, validate
from .trace import ALLOC, FREE, LEGIT, READ, WRITE, TraceEvent, loc_token

ENFORCE, OBSERVE = "enforce", "observe"
FRESH, REUSE = "fresh", "reuse"
DEFAULT_FUEL = 1_000_000
MAX_CALL_DEPTH = 256
MAX_SEGMENT_BYTES = 1 << 20

TRAP_KINDS = ("OutOfBounds", "UseAfterFree", "DoubleFree", "NullDeref", "InvalidSlice",
              "DivByZero", "FuelExhausted", "UnlinkedImport", "StackExhausted", "OutOfMemory")

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF


def wrap32(v: int) -> int:
    v &= MASK32
    return v - 0x100000000 if v & 0x80000000 else v


def wrap64(v: int) -> int:
    v &= MASK64
    return v - 0x10000000000000000 if v & 0x8000000000000000 else v


@dataclass(frozen=True)
class Handle:
    color: int
    base: int
    offset: int
    bound: int
    valid: bool = True

    @property
    def addr(self) -> int:
        return self.base + self.offset


NULL_HANDLE = Handle(0, 0, 0, 0, False)


@dataclass(frozen=True)
class Allocated:
    color: int
    byte: int = 0


@dataclass(frozen=True)
class Freed:
    color: int
    byte: int = 0


LocationState = Allocated | Freed | None


@dataclass(frozen=True)
class Trap:
    kind: str
    event_index: int

    def __str__(self) -> str:
        return f"{self.kind} at event {self.event_index}"


class TrapSignal(Exception):
    def __init__(self, kind: str, event_index: int):
        super().__init__(kind)
        self.kind = kind
        self.event_index = event_index


class LinkError(Exception):
    kind = "UnlinkedImport"


@dataclass
class SegmentStore:
    """Byte cells keyed by abstract address.

    ``cells`` maps an address to ``+color`` (allocated) or ``-color`` (freed,
    last owner); ``data`` holds the byte of every existing cell.
    """

    alloc_mode: str = FRESH
    next_color: int = 1
    next_fresh_addr: int = 0
    cells: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    footprint: dict = field(default_factory=dict)
    live: set = field(default_factory=set)

    def location(self, addr: int) -> LocationState:
        c = self.cells.get(addr)
        if c is None:
            return None
        return Allocated(c, self.data[addr]) if c > 0 else Freed(-c, self.data[addr])

    def _reuse_addr(self, size: int) -> int:
        if size == 0:
            return self.next_fresh_addr
        run_start, run_len = 0, 0
        for a in range(self.next_fresh_addr):
            if self.cells.get(a, 0) > 0:
                run_start, run_len = a + 1, 0
                continue
            run_len += 1
            if run_len >= size:
                return run_start
        return self.next_fresh_addr

    def new_segment(self, size: int) -> Handle:
        addr = self._reuse_addr(size) if self.alloc_mode == REUSE else self.next_fresh_addr
        return self.alloc_at(addr, size)

    def alloc_at(self, addr: int, size: int) -> Handle:
        color = self.next_color
        self.next_color += 1
        for a in range(addr, addr + size):
            if self.cells.get(a, 0) > 0:
                raise ValueError(f"address {a} already allocated")
            self.cells[a] = color
            self.data[a] = 0
        self.footprint[color] = (addr, size)
        self.live.add(color)
        self.next_fresh_addr = max(self.next_fresh_addr, addr + size)
        return Handle(color, addr, 0, size, True)

    def free(self, color: int) -> None:
        base, size = self.footprint[color]
        for a in range(base, base + size):
            self.cells[a] = -color
        self.live.discard(color)

    def loc_tokens(self, color: int, addr: int, size: int) -> tuple[str, ...]:
        return tuple(loc_token(self.cells.get(a, 0), color) for a in range(addr, addr + size))

    def check_invariants(self) -> None:
        assert self.live <= set(self.footprint)
        spans = sorted(self.footprint[c] for c in self.live if self.footprint[c][1])
        for (a0, s0), (a1, _) in zip(spans, spans[1:]):
            assert a0 + s0 <= a1, "live footprints overlap"
        for c in self.live:
            base, size = self.footprint[c]
            assert all(self.cells.get(a) == c for a in range(base, base + size))
        for a, c in self.cells.items():
            assert 0 <= self.data[a] <= 255
            if c > 0:
                assert c in self.live


def access_check(h: Handle, width: int, store: SegmentStore) -> str | None:
    """``None`` if the access is permitted, else the trap kind."""
    if not h.valid:
        return "NullDeref"
    if h.color not in store.live:
        return "UseAfterFree"
    if h.offset < 0 or h.offset + width > h.bound:
        return "OutOfBounds"
    return None


def handle_slice(h: Handle, start: int, length: int) -> Handle:
    if not h.valid or start < 0 or length < 0 or start + length > h.bound:
        raise TrapSignal("InvalidSlice", -1)
    return Handle(h.color, h.base + start, 0, length, True)


# -- linking ------------------------------------------------------------------------

@dataclass
class LinkedProgram:
    modules: dict                      # id -> TypedModule
    order: list                        # link order of module ids
    table: dict                        # (module id, func index) -> (owner id, FuncDef)

    def resolve_entry(self, entry: str) -> tuple[str, FuncDef]:
        mod, dot, name = entry.rpartition(".")
        if dot and mod in self.modules:
            f = self.modules[mod].module.exports().get(name)
            if f is None:
                raise LinkError(f"module {mod} does not export {name!r}")
            return mod, f
        found = [(m, self.modules[m].module.exports()[entry]) for m in self.order
                 if entry in self.modules[m].module.exports()]
        if not found:
            raise LinkError(f"no module exports {entry!r}")
        if len(found) > 1:
            raise LinkError(f"{entry!r} is exported by several modules; qualify it")
        return found[0]


def instantiate(modules: Sequence[TypedModule | ModuleDef],
                link_order: Sequence[str] | None = None) -> LinkedProgram:
    typed = {}
    for m in modules:
        tm = m if isinstance(m, TypedModule) else validate(m)
        if tm.id in typed:
            raise LinkError(f"module id {tm.id!r} linked twice")
        typed[tm.id] = tm
    order = list(link_order) if link_order is not None else list(typed)
    if sorted(order) != sorted(typed):
        raise LinkError("link order must list every module exactly once")
    table = {}
    for mid in order:
        m = typed[mid].module
        for i, imp in enumerate(m.imports):
            target = typed.get(imp.module)
            f = target.module.exports().get(imp.name) if target else None
            if f is None:
                raise LinkError(f"{mid}: unresolved import {imp.module}.{imp.name}")
            if f.type != imp.type:
                raise LinkError(f"{mid}: import {imp.module}.{imp.name} expects {imp.type}, "
                                f"export has {f.type}")
            table[(mid, i)] = (imp.module, f)
        for j, f in enumerate(m.funcs):
            table[(mid, len(m.imports) + j)] = (mid, f)
    return LinkedProgram(typed, order, table)


# -- execution ------------------------------------------------------------------------

@dataclass(frozen=True)
class Crossing:
    """A handle passed between modules: ``direction`` is ``in`` (argument) or ``out`` (result)."""

    direction: str
    caller: str
    callee: str
    func: str
    color: int


@dataclass
class RunResult:
    value: object = None
    trap: Trap | None = None
    trace: list = field(default_factory=list)
    output: list = field(default_factory=list)
    print_marks: list = field(default_factory=list)
    crossings: list = field(default_factory=list)

    @property
    def outcome(self) -> str:
        if self.trap is not None:
            return f"trap:{self.trap.kind}"
        return "ok" if self.value is None else f"value:{self.value}"

    @property
    def prints(self) -> list[tuple[int, int]]:
        return list(zip(self.output, self.print_marks))


_RETURN = -1


class Machine:
    def __init__(self, program: LinkedProgram, mode: str, fuel: int, alloc_mode: str,
                 tracker=None, audit: bool = False):
        if mode not in (ENFORCE, OBSERVE):
            raise ValueError(f"unknown mode {mode!r}")
        if alloc_mode not in (FRESH, REUSE):
            raise ValueError(f"unknown alloc mode {alloc_mode!r}")
        self.program = program
        self.mode = mode
        self.fuel = fuel
        self.store = SegmentStore(alloc_mode)
        self.trace: list[TraceEvent] = []
        self.output: list[int] = []
        self.print_marks: list[int] = []
        self.crossings: list[Crossing] = []
        self.tracker = tracker
        self.audit = audit
        self.depth = 0

    # events
    def emit(self, kind, color, owner, addr=None, size=None, prov=None, loc=()):
        e = TraceEvent(len(self.trace), kind, color, owner, addr, size, prov, loc)
        self.trace.append(e)
        if self.audit:
            self.store.check_invariants()
        return e.index

    def trap(self, kind, at=None):
        raise TrapSignal(kind, len(self.trace) if at is None else at)

    # memory
    def _access(self, h: Handle, width: int, kind: str, owner: str):
        if not h.valid:
            self.trap("NullDeref")
        addr = h.addr
        store = self.store
        if self.tracker is not None:
            idx = None
        else:
            idx = self.emit(kind, h.color, owner, addr, width, LEGIT,
                            store.loc_tokens(h.color, addr, width))
        if self.mode == ENFORCE:
            bad = access_check(h, width, store)
            if bad:
                self.trap(bad, idx)
        elif any(a not in store.cells for a in range(addr, addr + width)):
            self.trap("OutOfBounds", idx)
        return addr

    def load(self, h, width, owner):
        addr = self._access(h, width, READ, owner)
        raw = bytes(self.store.data[a] for a in range(addr, addr + width))
        v = int.from_bytes(raw, "little", signed=width > 1)
        return v

    def store_(self, h, width, value, owner):
        addr = self._access(h, width, WRITE, owner)
        raw = (value & ((1 << (8 * width)) - 1)).to_bytes(width, "little")
        for k, b in enumerate(raw):
            self.store.data[addr + k] = b

    def seg_new(self, size, owner):
        if size < 0:
            size = 0
        if size > MAX_SEGMENT_BYTES:
            self.trap("OutOfMemory")
        h = self.store.new_segment(size)
        if self.tracker is None:
            base, n = self.store.footprint[h.color]
            self.emit(ALLOC, h.color, owner, base, n)
        return h

    def seg_free(self, h, owner):
        if not h.valid:
            self.trap("NullDeref")
        live = h.color in self.store.live
        idx = None
        if self.tracker is None:
            idx = self.emit(FREE, h.color, owner)
        if live:
            self.store.free(h.color)
        elif self.mode == ENFORCE:
            self.trap("DoubleFree", idx)

    # calls
    def call(self, mid: str, f: FuncDef, args: list, caller: str | None):
        if caller is not None and caller != mid:
            for a, t in zip(args, f.params):
                if t is HANDLE:
                    self.crossings.append(Crossing("in", caller, mid, f.name, a.color))
        if self.tracker is not None and f.name in self.tracker.intercepts:
            result = self.tracker.call(self, f.name, args, caller or mid,
                                       lambda: self._invoke(mid, f, args))
        else:
            result = self._invoke(mid, f, args)
        if caller is not None and caller != mid:
            for t in f.results:
                if t is HANDLE:
                    self.crossings.append(Crossing("out", caller, mid, f.name, result.color))
        return result

    def _invoke(self, mid, f, args):
        self.depth += 1
        if self.depth > MAX_CALL_DEPTH:
            self.trap("StackExhausted")
        locs = list(args) + [NULL_HANDLE if t is HANDLE else 0 for t in f.locals]
        st: list = []
        self._block(f.body, st, locs, mid)
        self.depth -= 1
        return st[-1] if f.results else None

    def _block(self, body, st, locs, mid):
        """Run ``body``; returns None on fallthrough, a branch depth, or _RETURN."""
        for i in body:
            self.fuel -= 1
            if self.fuel < 0:
                self.trap("FuelExhausted")
            op = i.op
            if op == "local.get":
                st.append(locs[i.arg])
            elif op == "i32.const":
                st.append(wrap32(i.arg))
            elif op == "local.set":
                locs[i.arg] = st.pop()
            elif op.startswith("i32."):
                b = st.pop()
                a = st.pop()
                st.append(_binop(op, a, b, self))
            elif op in ("block", "loop"):
                h = len(st)
                arity = 1 if i.result else 0
                while True:
                    sig = self._block(i.body, st, locs, mid)
                    if sig == 0 and op == "loop":
                        del st[h:]
                        continue
                    break
                if sig is None:
                    continue
                if sig == 0:
                    _unwind(st, h, arity)
                    continue
                return sig - 1 if sig > 0 else sig
            elif op == "if":
                cond = st.pop()
                h = len(st)
                sig = self._block(i.body if cond != 0 else i.orelse, st, locs, mid)
                if sig is None:
                    continue
                if sig == 0:
                    _unwind(st, h, 1 if i.result else 0)
                    continue
                return sig - 1 if sig > 0 else sig
            elif op == "br":
                return i.arg
            elif op == "br_if":
                if st.pop() != 0:
                    return i.arg
            elif op == "return":
                return _RETURN
            elif op == "call":
                owner_mid, f = self.program.table[(mid, i.arg)]
                n = len(f.params)
                args = st[len(st) - n:] if n else []
                del st[len(st) - n:]
                r = self.call(owner_mid, f, args, mid)
                if f.results:
                    st.append(r)
            elif op == "drop":
                st.pop()
            elif op == "print":
                self.output.append(int(st.pop()))
                self.print_marks.append(len(self.trace))
            elif op in LOAD_WIDTH:
                st.append(self.load(st.pop(), LOAD_WIDTH[op], mid))
            elif op in STORE_WIDTH:
                v = st.pop()
                self.store_(st.pop(), STORE_WIDTH[op], v, mid)
            elif op == "segment.new":
                st.append(self.seg_new(st.pop(), mid))
            elif op == "segment.free":
                self.seg_free(st.pop(), mid)
            elif op == "handle.add":
                d = st.pop()
                h = st.pop()
                st.append(Handle(h.color, h.base, h.offset + d, h.bound, h.valid))
            elif op == "handle.slice":
                n = st.pop()
                s = st.pop()
                h = st.pop()
                try:
                    st.append(handle_slice(h, s, n))
                except TrapSignal:
                    self.trap("InvalidSlice")
            elif op == "handle.null":
                st.append(NULL_HANDLE)
            elif op == "handle.eq":
                b = st.pop()
                a = st.pop()
                st.append(1 if a == b else 0)
            elif op == "handle.get_offset":
                st.append(wrap32(st.pop().offset))
            elif op == "i64.const":
                st.append(wrap64(i.arg))
            else:  # pragma: no cover - validated modules only
                raise RuntimeError(f"unhandled instruction {op}")
        return None


def _unwind(st, height, arity):
    if arity:
        top = st[-1]
        del st[height:]
        st.append(top)
    else:
        del st[height:]


def _binop(op, a, b, m):
    if op == "i32.add":
        return wrap32(a + b)
    if op == "i32.sub":
        return wrap32(a - b)
    if op == "i32.mul":
        return wrap32(a * b)
    if op == "i32.lt_s":
        return int(a < b)
    if op == "i32.eq":
        return int(a == b)
    if op == "i32.ne":
        return int(a != b)
    if op == "i32.gt_s":
        return int(a > b)
    if op == "i32.le_s":
        return int(a <= b)
    if op == "i32.ge_s":
        return int(a >= b)
    if op in ("i32.div_s", "i32.rem_s"):
        if b == 0:
            m.trap("DivByZero")
        q = abs(a) // abs(b)
        if (a < 0) != (b < 0):
            q = -q
        if op == "i32.div_s":
            if q == 0x80000000:
                m.trap("DivByZero")
            return wrap32(q)
        return wrap32(a - q * b)
    if op == "i32.and":
        return wrap32(a & b)
    if op == "i32.or":
        return wrap32(a | b)
    if op == "i32.xor":
        return wrap32(a ^ b)
    if op == "i32.shl":
        return wrap32(a << (b & 31))
    if op == "i32.shr_s":
        return wrap32(a >> (b & 31))
    raise RuntimeError(op)  # pragma: no cover


def run(p: LinkedProgram, entry: str, args: Sequence[int] = (), mode: str = ENFORCE,
        fuel: int = DEFAULT_FUEL, alloc_mode: str = FRESH, tracker=None,
        audit: bool = False) -> RunResult:
    mid, f = p.resolve_entry(entry)
    if len(args) != len(f.params) or any(t is HANDLE for t in f.params):
        raise LinkError(f"entry {entry!r} takes {len(f.params)} i32 argument(s)")
    m = Machine(p, mode, fuel, alloc_mode, tracker, audit)
    if tracker is not None:
        tracker.attach(m)
    value = trap = None
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20_000))
    try:
        value = m.call(mid, f, [wrap32(a) for a in args], None)
        if value is not None:
            value = value if isinstance(value, Handle) else int(value)
    except TrapSignal as t:
        trap = Trap(t.kind, t.event_index)
    finally:
        sys.setrecursionlimit(limit)
    return RunResult(value, trap, m.trace, m.output, m.print_marks, m.crossings)


def run_modules(modules: Sequence[ModuleDef], entry: str, args: Sequence[int] = (),
                **kw) -> RunResult:
    return run(instantiate(modules), entry, args, **kw)
