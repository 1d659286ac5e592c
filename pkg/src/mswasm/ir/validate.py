"""Stack-discipline type checker.

Handles are unforgeable because no instruction yields ``handle`` from integers;
the checker reports an integer reaching a handle slot as ``HandleForgeAttempt``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import HANDLE, I32, I64, SIGNATURES, FuncDef, FuncType, Instr, ModuleDef, ValType

ERROR_KINDS = ("TypeMismatch", "StackUnderflow", "BadBranchDepth", "UnknownFunction",
               "HandleForgeAttempt", "UnknownLocal", "DuplicateExport")

# instructions that may place a handle on the operand stack
HANDLE_SOURCES = frozenset({"segment.new", "handle.null", "handle.add", "handle.slice",
                            "local.get", "call", "block", "loop", "if"})


@dataclass(frozen=True)
class TypeError_:
    kind: str
    func: str
    where: str
    msg: str
    pos: tuple[int, int] | None = None

    def __str__(self) -> str:
        loc = f" (line {self.pos[0]}, col {self.pos[1]})" if self.pos else ""
        return f"{self.kind} in {self.func} at {self.where}{loc}: {self.msg}"


class ValidationError(Exception):
    def __init__(self, errors: list[TypeError_]):
        super().__init__("\n".join(map(str, errors)))
        self.errors = errors


@dataclass(frozen=True)
class TypedModule:
    module: ModuleDef
    types: tuple[FuncType, ...]

    @property
    def id(self) -> str:
        return self.module.id


class _Fail(Exception):
    def __init__(self, kind: str, msg: str):
        self.kind = kind
        self.msg = msg


@dataclass
class _Frame:
    label: tuple[ValType, ...]
    end: tuple[ValType, ...]
    height: int
    unreachable: bool = False


@dataclass
class _FuncChecker:
    module: ModuleDef
    func: FuncDef
    errors: list
    origins: list | None
    stack: list = field(default_factory=list)
    frames: list = field(default_factory=list)

    def fail(self, kind, msg):
        raise _Fail(kind, msg)

    def push(self, t, op, where):
        self.stack.append(t)
        if t is HANDLE and self.origins is not None:
            self.origins.append((self.func.name, where, op))

    def pop(self, expect=None):
        frame = self.frames[-1]
        if len(self.stack) == frame.height:
            if frame.unreachable:
                return expect
            self.fail("StackUnderflow", f"expected {expect or 'a value'} on the stack")
        got = self.stack.pop()
        if expect is not None and got is not None and got is not expect:
            if expect is HANDLE and got in (I32, I64):
                self.fail("HandleForgeAttempt", f"{got} used where a handle is required")
            self.fail("TypeMismatch", f"expected {expect}, found {got}")
        return got if got is not None else expect

    def pop_all(self, types):
        for t in reversed(types):
            self.pop(t)

    def mark_unreachable(self):
        frame = self.frames[-1]
        del self.stack[frame.height:]
        frame.unreachable = True

    def end_frame(self):
        frame = self.frames[-1]
        self.pop_all(frame.end)
        if len(self.stack) != frame.height:
            self.fail("TypeMismatch", f"{len(self.stack) - frame.height} extra value(s) "
                      "left on the stack at end of block")
        self.frames.pop()
        return frame

    def local_type(self, i):
        all_locals = self.func.params + self.func.locals
        if i is None or not 0 <= i < len(all_locals):
            self.fail("UnknownLocal", f"local index {i} out of range")
        return all_locals[i]

    def branch_target(self, depth):
        if depth is None or not 0 <= depth < len(self.frames):
            self.fail("BadBranchDepth", f"branch depth {depth} exceeds nesting "
                      f"{len(self.frames) - 1}")
        return self.frames[-1 - depth]

    def run(self):
        f = self.func
        self.frames.append(_Frame(f.results, f.results, 0))
        self.seq(f.body, "")
        try:
            self.end_frame()
        except _Fail as e:
            self.errors.append(TypeError_(e.kind, f.name, "end", e.msg))

    def seq(self, body, prefix):
        for n, instr in enumerate(body):
            where = f"{prefix}{n}"
            try:
                self.instr(instr, where)
            except _Fail as e:
                self.errors.append(TypeError_(e.kind, self.func.name, where, e.msg, instr.pos))
                self.mark_unreachable()

    def nested(self, instr, body, where, label, end):
        height = len(self.stack)
        self.frames.append(_Frame(label, end, height))
        self.seq(body, where + ".")
        try:
            self.end_frame()
        except _Fail as e:
            self.errors.append(TypeError_(e.kind, self.func.name, where + ".end", e.msg,
                                          instr.pos))
            del self.stack[height:]
            self.frames.pop()

    def instr(self, i: Instr, where: str):
        op = i.op
        sig = SIGNATURES.get(op)
        if sig is not None:
            self.pop_all(sig[0])
            for t in sig[1]:
                self.push(t, op, where)
            return
        if op == "local.get":
            self.push(self.local_type(i.arg), op, where)
        elif op == "local.set":
            self.pop(self.local_type(i.arg))
        elif op == "drop":
            self.pop()
        elif op in ("block", "loop"):
            res = (i.result,) if i.result else ()
            label = () if op == "loop" else res
            self.nested(i, i.body, where, label, res)
            for t in res:
                self.push(t, op, where)
        elif op == "if":
            self.pop(I32)
            res = (i.result,) if i.result else ()
            if res and not i.orelse:
                self.fail("TypeMismatch", "if with a result needs an else branch")
            self.nested(i, i.body, where + ".then", res, res)
            self.nested(i, i.orelse, where + ".else", res, res)
            for t in res:
                self.push(t, op, where)
        elif op == "br":
            target = self.branch_target(i.arg)
            self.pop_all(target.label)
            self.mark_unreachable()
        elif op == "br_if":
            target = self.branch_target(i.arg)
            self.pop(I32)
            self.pop_all(target.label)
            for t in target.label:
                self.push(t, op, where)
        elif op == "return":
            self.pop_all(self.func.results)
            self.mark_unreachable()
        elif op == "call":
            ft = self.module.func_type(i.arg if i.arg is not None else -1)
            if ft is None:
                self.fail("UnknownFunction", f"no function with index {i.arg}")
            self.pop_all(ft.params)
            for t in ft.results:
                self.push(t, op, where)
        else:  # pragma: no cover - parser rejects unknown mnemonics
            self.fail("TypeMismatch", f"unknown instruction {op}")


def check_module(m: ModuleDef, origins: list | None = None) -> list[TypeError_]:
    """All type errors of ``m``; ``origins`` (if given) collects every handle push."""
    errors: list[TypeError_] = []
    seen: set[str] = set()
    for f in m.funcs:
        if f.name in seen:
            errors.append(TypeError_("DuplicateExport", f.name, "header",
                                     f"function name {f.name!r} defined twice"))
        seen.add(f.name)
        if len(f.results) > 1:
            errors.append(TypeError_("TypeMismatch", f.name, "header", "at most one result"))
            continue
        _FuncChecker(m, f, errors, origins).run()
    return errors


def validate(m: ModuleDef) -> TypedModule:
    errors = check_module(m)
    if errors:
        raise ValidationError(errors)
    types = tuple(imp.type for imp in m.imports) + tuple(f.type for f in m.funcs)
    return TypedModule(m, types)
