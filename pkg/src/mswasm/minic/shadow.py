"""Shadow tracker for the unsafe backend.

The unsafe backend's memory is a single flat segment, so the interpreter's own
events say nothing about logical objects. The tracker hooks the runtime
helpers instead:

* ``__malloc`` results come back as :class:`Tagged` ints carrying a logical
  color; the tag rides along through locals, arguments and returns.
* ``__load``/``__store`` emit Read/Write events against a logical
  :class:`~mswasm.interpreter.SegmentStore` whose footprints mirror the
  malloc'd blocks, then run the raw flat access.
* ``__free`` emits a Free and marks the logical block freed.

Provenance is ``forged`` when the tracker cannot attribute the accessed range
to the pointer's own block: the pointer carries no tag, or base + 4*index
leaves the block's footprint.
"""

from __future__ import annotations

from ..interpreter import FRESH, SegmentStore
from ..trace import ALLOC, FORGED, FREE, LEGIT, READ, WRITE
from .compile import ELEM, HELPERS


class Tagged(int):
    """An i32 address that remembers which logical allocation produced it."""

    color: int

    def __new__(cls, value: int, color: int):
        obj = super().__new__(cls, value)
        obj.color = color
        return obj

    def __repr__(self) -> str:
        return f"Tagged({int(self)}, color={self.color})"


def tag_of(v) -> int:
    return v.color if isinstance(v, Tagged) else 0


class ShadowTracker:
    intercepts = frozenset(HELPERS)

    def __init__(self):
        self.attach(None)

    def attach(self, machine) -> None:
        self.machine = machine
        self.store = SegmentStore(FRESH)
        # set when the flat allocator hands out memory overlapping a live logical
        # block (only possible after heap corruption); emission stops from then on
        self.lost = False

    def call(self, m, name, args, owner, proceed):
        if name == "__malloc":
            return self._malloc(m, args, owner, proceed)
        if name == "__free":
            ptr = args[1]
            c = tag_of(ptr)
            if c and not self.lost:
                m.emit(FREE, c, owner)
                if c in self.store.live:
                    self.store.free(c)
            return proceed()
        p, i = args[1], args[2]
        if not self.lost:
            self._access(m, READ if name == "__load" else WRITE, p, i, owner)
        return proceed()

    def _malloc(self, m, args, owner, proceed):
        addr = proceed()
        size = max(int(args[1]), 0) * ELEM
        if self.lost:
            return addr
        try:
            h = self.store.alloc_at(int(addr), size)
        except ValueError:
            self.lost = True
            return addr
        m.emit(ALLOC, h.color, owner, int(addr), size)
        return Tagged(addr, h.color)

    def _access(self, m, kind, p, i, owner):
        color = tag_of(p)
        addr = int(p) + ELEM * int(i)
        fp = self.store.footprint.get(color)
        inside = fp is not None and fp[0] <= addr and addr + ELEM <= fp[0] + fp[1]
        prov = LEGIT if inside else FORGED
        m.emit(kind, color, owner, addr, ELEM, prov,
               self.store.loc_tokens(color, addr, ELEM))
