"""MiniC backends.

``safe``: pointers become handles; ``malloc`` is ``segment.new``, every
dereference goes through ``handle.add`` + a 4-byte segment access.

``unsafe``: one 64 KiB flat segment per entry call, pointers are i32 byte
addresses into it, and ``malloc``/``free``/loads/stores are calls to small
runtime helpers (``__malloc`` etc.). The helpers are what the shadow tracker
intercepts; the flat segment itself never fails a bounds check for in-heap
addresses.
"""

from __future__ import annotations

from functools import lru_cache

from ..ir.syntax import HANDLE, I32, FuncDef, Import, FuncType, Instr, ModuleDef, ins
from ..ir.text import parse_module
from .syntax import (
    INT, PTR, Assign, BinOp, Call, Deref, ExprStmt, Free, If, Let, Malloc, Neg, Null, Num,
    Print, Return, SourceError, SrcProgram, Store, Var, While,
)
from .typecheck import CheckedProgram, typecheck_src

SAFE, UNSAFE = "safe", "unsafe"
ELEM = 4
FLAT_BYTES = 64 * 1024
HEAP_START = 16
HELPERS = ("__malloc", "__free", "__load", "__store")

_BINOPS = {"+": "i32.add", "-": "i32.sub", "*": "i32.mul", "/": "i32.div_s",
           "%": "i32.rem_s", "==": "i32.eq", "!=": "i32.ne", "<": "i32.lt_s",
           ">": "i32.gt_s", "<=": "i32.le_s", ">=": "i32.ge_s"}

# flat layout: [0,4) bump pointer, [4,8) free-list head, blocks carry an
# 8-byte header whose first word is the usable payload size.
_MALLOC_HEAD = """
  (func $__malloc (param handle i32) (result i32) (local i32 i32 i32 i32 i32 i32)
    (local.get 1) (i32.const 4) (i32.mul) (local.set 2)
    (local.get 2) (i32.const 4) (i32.lt_s)
    (if (then (i32.const 4) (local.set 5)) (else (local.get 2) (local.set 5)))
"""

_MALLOC_REUSE = """
    (i32.const 4) (local.set 4)
    (local.get 0) (i32.const 4) (handle.add) (segment.load32) (local.set 3)
    (block
      (loop
        (local.get 3) (i32.const 0) (i32.eq) (br_if 1)
        (local.get 0) (local.get 3) (i32.const 8) (i32.sub) (handle.add) (segment.load32)
        (local.get 5) (i32.ge_s)
        (if
          (then
            (local.get 0) (local.get 4) (handle.add)
            (local.get 0) (local.get 3) (handle.add) (segment.load32)
            (segment.store32)
            (local.get 0) (local.get 3) (i32.const 8) (i32.sub) (handle.add) (segment.load32)
            (local.set 7)
            (i32.const 0) (local.set 6)
            (block
              (loop
                (local.get 6) (local.get 7) (i32.ge_s) (br_if 1)
                (local.get 0) (local.get 3) (local.get 6) (i32.add) (handle.add)
                (i32.const 0) (segment.store32)
                (local.get 6) (i32.const 4) (i32.add) (local.set 6)
                (br 0)))
            (local.get 3) (return)))
        (local.get 3) (local.set 4)
        (local.get 0) (local.get 3) (handle.add) (segment.load32) (local.set 3)
        (br 0)))
"""

_MALLOC_BUMP = """
    (local.get 0) (segment.load32) (i32.const 8) (i32.add) (local.set 3)
    (local.get 0) (local.get 3) (local.get 5) (i32.add) (segment.store32)
    (local.get 0) (local.get 3) (i32.const 8) (i32.sub) (handle.add) (local.get 5)
    (segment.store32)
    (local.get 3))
"""

_FREE_NOOP = """
  (func $__free (param handle i32))
"""

_FREE_REUSE = """
  (func $__free (param handle i32)
    (local.get 1) (i32.const 0) (i32.eq) (if (then (return)))
    (local.get 0) (local.get 1) (handle.add)
    (local.get 0) (i32.const 4) (handle.add) (segment.load32)
    (segment.store32)
    (local.get 0) (i32.const 4) (handle.add) (local.get 1) (segment.store32))
"""

_ACCESS = """
  (func $__load (param handle i32 i32) (result i32)
    (local.get 0) (local.get 1) (local.get 2) (i32.const 4) (i32.mul) (i32.add)
    (handle.add) (segment.load32))
  (func $__store (param handle i32 i32 i32)
    (local.get 0) (local.get 1) (local.get 2) (i32.const 4) (i32.mul) (i32.add)
    (handle.add) (local.get 3) (segment.store32))
"""


@lru_cache(maxsize=None)
def runtime_funcs(alloc: str = "fresh") -> tuple[FuncDef, ...]:
    """The unsafe backend's runtime helpers; ``alloc="reuse"`` recycles freed blocks."""
    reuse = alloc == "reuse"
    text = ("(module rt" + _MALLOC_HEAD + (_MALLOC_REUSE if reuse else "") + _MALLOC_BUMP
            + (_FREE_REUSE if reuse else _FREE_NOOP) + _ACCESS + ")")
    return parse_module(text).funcs


def impl_name(name: str) -> str:
    return f"{name}$impl"


class _FuncCompiler:
    def __init__(self, cp: CheckedProgram, info, backend: str, index: dict):
        self.cp = cp
        self.info = info
        self.backend = backend
        self.index = index
        self.shift = 1 if backend == UNSAFE else 0

    def vt(self, t):
        return HANDLE if t == PTR and self.backend == SAFE else I32

    def slot(self, node):
        return self.info.slot_of[id(node)] + self.shift

    def mem(self):
        return [ins("local.get", 0)]

    def func(self, f) -> FuncDef:
        nparams = len(f.params)
        params = tuple(self.vt(t) for _, t in f.params)
        locals_ = tuple(self.vt(t) for t in self.info.slots[nparams:])
        body = self.stmts(f.body)
        results = ()
        if f.ret is not None:
            results = (self.vt(f.ret),)
            body += self.default(f.ret)
        name = f.name
        exported = f.exported or f.name == "main"
        if self.backend == UNSAFE:
            params = (HANDLE,) + params
            name, exported = impl_name(f.name), False
        return FuncDef(name, params, results, locals_, tuple(body), exported)

    def default(self, t):
        if t == PTR and self.backend == SAFE:
            return [ins("handle.null")]
        return [ins("i32.const", 0)]

    def stmts(self, stmts) -> list[Instr]:
        out = []
        for s in stmts:
            out += self.stmt(s)
        return out

    def stmt(self, s) -> list[Instr]:
        if isinstance(s, (Let, Assign)):
            return self.expr(s.value) + [ins("local.set", self.slot(s))]
        if isinstance(s, Store):
            if self.backend == SAFE:
                return (self.address(s) + self.expr(s.value) + [ins("segment.store32")])
            return (self.mem() + [ins("local.get", self.slot(s))] + self.expr(s.index)
                    + self.expr(s.value) + [self.call_helper("__store")])
        if isinstance(s, Free):
            if self.backend == SAFE:
                return self.expr(s.ptr) + [ins("segment.free")]
            return self.mem() + self.expr(s.ptr) + [self.call_helper("__free")]
        if isinstance(s, Print):
            return self.expr(s.value) + [ins("print")]
        if isinstance(s, If):
            return self.expr(s.cond) + [ins("if", body=self.stmts(s.then),
                                            orelse=self.stmts(s.orelse))]
        if isinstance(s, While):
            exit_test = self.expr(s.cond) + [ins("i32.const", 0), ins("i32.eq"),
                                             ins("br_if", 1)]
            loop = ins("loop", body=exit_test + self.stmts(s.body) + [ins("br", 0)])
            return [ins("block", body=[loop])]
        if isinstance(s, Return):
            return (self.expr(s.value) if s.value is not None else []) + [ins("return")]
        if isinstance(s, ExprStmt):
            out = self.expr(s.expr)
            if self.cp.signatures[s.expr.name][1] is not None:
                out.append(ins("drop"))
            return out
        raise TypeError(s)  # pragma: no cover

    def address(self, node) -> list[Instr]:
        return ([ins("local.get", self.slot(node))] + self.expr(node.index)
                + [ins("i32.const", ELEM), ins("i32.mul"), ins("handle.add")])

    def call_helper(self, name):
        return ins("call", self.index[name])

    def expr(self, e) -> list[Instr]:
        if isinstance(e, Num):
            return [ins("i32.const", e.value)]
        if isinstance(e, Var):
            return [ins("local.get", self.slot(e))]
        if isinstance(e, Null):
            return self.default(PTR)
        if isinstance(e, Malloc):
            if self.backend == SAFE:
                return self.expr(e.count) + [ins("i32.const", ELEM), ins("i32.mul"),
                                             ins("segment.new")]
            return self.mem() + self.expr(e.count) + [self.call_helper("__malloc")]
        if isinstance(e, Deref):
            if self.backend == SAFE:
                return self.address(e) + [ins("segment.load32")]
            return (self.mem() + [ins("local.get", self.slot(e))] + self.expr(e.index)
                    + [self.call_helper("__load")])
        if isinstance(e, Neg):
            return [ins("i32.const", 0)] + self.expr(e.operand) + [ins("i32.sub")]
        if isinstance(e, Call):
            prefix = self.mem() if self.backend == UNSAFE else []
            args = [i for a in e.args for i in self.expr(a)]
            return prefix + args + [ins("call", self.index[e.name])]
        if isinstance(e, BinOp):
            out = self.expr(e.left) + self.expr(e.right)
            if self.backend == SAFE and e.op in ("==", "!=") and self.is_ptr(e.left):
                out.append(ins("handle.eq"))
                if e.op == "!=":
                    out += [ins("i32.const", 0), ins("i32.eq")]
                return out
            return out + [ins(_BINOPS[e.op])]
        raise TypeError(e)  # pragma: no cover

    def is_ptr(self, e) -> bool:
        if isinstance(e, (Null, Malloc)):
            return True
        if isinstance(e, Var):
            return self.info.slots[self.info.slot_of[id(e)]] == PTR
        if isinstance(e, Call):
            return self.cp.signatures[e.name][1] == PTR
        return False


def _wrapper(f, index: dict) -> FuncDef:
    k = len(f.params)
    mem = k
    body = [ins("i32.const", FLAT_BYTES), ins("segment.new"), ins("local.set", mem),
            ins("local.get", mem), ins("i32.const", HEAP_START), ins("segment.store32"),
            ins("local.get", mem)]
    body += [ins("local.get", i) for i in range(k)]
    body.append(ins("call", index[impl_name(f.name)]))
    results = (I32,) if f.ret is not None else ()
    return FuncDef(f.name, (I32,) * k, results, (HANDLE,), tuple(body), True)


def compile_program(prog: SrcProgram | CheckedProgram, backend: str = SAFE,
                    module_id: str = "main", alloc: str = "fresh") -> ModuleDef:
    cp = prog if isinstance(prog, CheckedProgram) else typecheck_src(prog)
    src = cp.program
    if backend not in (SAFE, UNSAFE):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == SAFE:
        vt = {INT: I32, PTR: HANDLE}
        imports = tuple(
            Import(x.module, x.name, FuncType(tuple(vt[t] for _, t in x.params),
                                              (vt[x.ret],) if x.ret else ()))
            for x in src.externs)
        index = {x.name: i for i, x in enumerate(src.externs)}
        for j, f in enumerate(src.funcs):
            index[f.name] = len(imports) + j
        funcs = tuple(_FuncCompiler(cp, cp.funcs[f.name], SAFE, index).func(f)
                      for f in src.funcs)
        return ModuleDef(module_id, funcs, imports)

    if src.externs:
        x = src.externs[0]
        raise SourceError("UnsupportedConstruct", "extern functions need the safe backend",
                          *x.pos)
    for f in src.funcs:
        if f.name.startswith("__"):
            raise SourceError("UnsupportedConstruct",
                              f"names starting with '__' are reserved ({f.name})", *f.pos)
    helpers = runtime_funcs(alloc)
    index = {h.name: i for i, h in enumerate(helpers)}
    for j, f in enumerate(src.funcs):
        index[f.name] = index[impl_name(f.name)] = len(helpers) + j
    impls = tuple(_FuncCompiler(cp, cp.funcs[f.name], UNSAFE, index).func(f)
                  for f in src.funcs)
    wrapped = [f for f in src.funcs if all(t == INT for _, t in f.params) and f.ret != PTR]
    wrappers = tuple(_wrapper(f, index) for f in wrapped)
    return ModuleDef(module_id, helpers + impls + wrappers)
