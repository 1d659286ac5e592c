"""Static typing for MiniC. ``int`` and ``ptr`` never mix; there are no casts."""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import (
    INT, PTR, Assign, BinOp, Call, Deref, ExprStmt, Free, If, Let, Malloc, Neg, Null, Num,
    Print, Return, SourceError, SourceErrors, SrcProgram, Store, Var, While,
)


@dataclass
class FuncInfo:
    name: str
    params: list
    ret: str | None
    slots: list = field(default_factory=list)      # type of every local slot, params first
    slot_of: dict = field(default_factory=dict)    # id(node) -> slot


@dataclass
class CheckedProgram:
    program: SrcProgram
    signatures: dict        # name -> (param types, ret)
    funcs: dict             # name -> FuncInfo


class _Checker:
    def __init__(self, prog: SrcProgram):
        self.prog = prog
        self.errors: list[SourceError] = []
        self.sigs: dict = {}
        self.funcs: dict = {}

    def err(self, kind, msg, node):
        self.errors.append(SourceError(kind, msg, *node.pos))

    def run(self) -> CheckedProgram:
        for d in list(self.prog.externs) + list(self.prog.funcs):
            if d.name in self.sigs:
                self.err("DuplicateName", f"function {d.name!r} defined twice", d)
                continue
            self.sigs[d.name] = ([t for _, t in d.params], d.ret)
        for f in self.prog.funcs:
            self.func(f)
        if self.errors:
            raise SourceErrors(self.errors)
        return CheckedProgram(self.prog, self.sigs, self.funcs)

    def func(self, f):
        info = FuncInfo(f.name, f.params, f.ret)
        self.info = info
        scope: dict = {}
        for pname, ptype in f.params:
            if pname in scope:
                self.err("DuplicateName", f"parameter {pname!r} repeated", f)
            scope[pname] = len(info.slots)
            info.slots.append(ptype)
        self.scopes = [scope]
        self.block(f.body, new_scope=False)
        if f.name not in self.funcs:
            self.funcs[f.name] = info

    def lookup(self, name, node):
        for scope in reversed(self.scopes):
            if name in scope:
                slot = scope[name]
                self.info.slot_of[id(node)] = slot
                return self.info.slots[slot]
        self.err("UnknownVariable", f"unknown variable {name!r}", node)
        return None

    def block(self, stmts, new_scope=True):
        if new_scope:
            self.scopes.append({})
        for s in stmts:
            self.stmt(s)
        if new_scope:
            self.scopes.pop()

    def expect(self, node, want, what):
        got = self.expr(node)
        if got is not None and got != want:
            self.err("TypeMismatch", f"{what} must be {want}, found {got}", node)

    def stmt(self, s):
        if isinstance(s, Let):
            got = self.expr(s.value)
            if got is not None and got != s.type:
                self.err("TypeMismatch", f"cannot initialise {s.type} {s.name!r} with {got}", s)
            scope = self.scopes[-1]
            if s.name in scope:
                self.err("DuplicateName", f"{s.name!r} already declared in this scope", s)
            scope[s.name] = len(self.info.slots)
            self.info.slots.append(s.type)
            self.info.slot_of[id(s)] = scope[s.name]
        elif isinstance(s, Assign):
            t = self.lookup(s.name, s)
            got = self.expr(s.value)
            if t is not None and got is not None and t != got:
                self.err("TypeMismatch", f"cannot assign {got} to {t} {s.name!r}", s)
        elif isinstance(s, Store):
            self.deref(s)
            self.expect(s.value, INT, "stored value")
        elif isinstance(s, Free):
            self.expect(s.ptr, PTR, "free argument")
        elif isinstance(s, Print):
            self.expect(s.value, INT, "print argument")
        elif isinstance(s, If):
            self.expect(s.cond, INT, "condition")
            self.block(s.then)
            self.block(s.orelse)
        elif isinstance(s, While):
            self.expect(s.cond, INT, "condition")
            self.block(s.body)
        elif isinstance(s, Return):
            ret = self.info.ret
            if s.value is None:
                if ret is not None:
                    self.err("TypeMismatch", f"return needs a {ret} value", s)
            elif ret is None:
                self.expr(s.value)
                self.err("TypeMismatch", "void function returns a value", s)
            else:
                self.expect(s.value, ret, "return value")
        elif isinstance(s, ExprStmt):
            self.call(s.expr, as_value=False)
        else:  # pragma: no cover
            raise TypeError(s)

    def deref(self, node):
        t = self.lookup(node.ptr, node)
        if t is not None and t != PTR:
            self.err("TypeMismatch", f"{node.ptr!r} is {t}, not ptr", node)
        self.expect(node.index, INT, "index")

    def call(self, node, as_value=True):
        sig = self.sigs.get(node.name)
        got = [self.expr(a) for a in node.args]
        if sig is None:
            self.err("UnknownFunction", f"unknown function {node.name!r}", node)
            return None
        params, ret = sig
        if len(params) != len(node.args):
            self.err("ArityMismatch", f"{node.name} takes {len(params)} argument(s), "
                     f"got {len(node.args)}", node)
        else:
            for a, t, want in zip(node.args, got, params):
                if t is not None and t != want:
                    self.err("TypeMismatch", f"argument of {node.name} must be {want}, "
                             f"found {t}", a)
        if as_value and ret is None:
            self.err("TypeMismatch", f"{node.name} returns nothing", node)
        return ret

    def expr(self, e):
        if isinstance(e, Num):
            if not -(1 << 31) <= e.value < (1 << 31):
                self.err("TypeMismatch", f"literal {e.value} does not fit in int", e)
            return INT
        if isinstance(e, Null):
            return PTR
        if isinstance(e, Var):
            return self.lookup(e.name, e)
        if isinstance(e, Malloc):
            self.expect(e.count, INT, "malloc count")
            return PTR
        if isinstance(e, Deref):
            self.deref(e)
            return INT
        if isinstance(e, Neg):
            self.expect(e.operand, INT, "negated operand")
            return INT
        if isinstance(e, Call):
            return self.call(e)
        if isinstance(e, BinOp):
            lt = self.expr(e.left)
            rt = self.expr(e.right)
            if lt is None or rt is None:
                return INT
            if e.op in ("==", "!=") and lt == rt == PTR:
                return INT
            if lt != INT or rt != INT:
                self.err("TypeMismatch", f"operator {e.op} on {lt} and {rt}", e)
            return INT
        raise TypeError(e)  # pragma: no cover


def typecheck_src(prog: SrcProgram) -> CheckedProgram:
    return _Checker(prog).run()
