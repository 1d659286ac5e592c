"""MiniC surface syntax: tokens, AST and a recursive-descent parser.

Grammar (``docs/minic.md`` has the full version)::

    program  := (extern | func)*
    extern   := "extern" IDENT "fn" IDENT "(" params? ")" ("->" type)? ";"
    func     := "export"? "fn" IDENT "(" params? ")" ("->" type)? block
    stmt     := "let" IDENT ":" type "=" expr ";"
              | IDENT "=" expr ";"
              | "*" deref "=" expr ";"
              | "free" "(" expr ")" ";"
              | "print" "(" expr ")" ";"
              | "if" "(" expr ")" block ("else" (block | if-stmt))?
              | "while" "(" expr ")" block
              | "return" expr? ";"
              | call ";"
    deref    := "(" IDENT "+" expr ")" | IDENT
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

INT, PTR = "int", "ptr"
KEYWORDS = {"fn", "let", "if", "else", "while", "return", "print", "malloc", "free",
            "int", "ptr", "null", "export", "extern"}


class SourceError(Exception):
    def __init__(self, kind: str, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {kind}: {msg}")
        self.kind = kind
        self.msg = msg
        self.line = line
        self.col = col


class SourceErrors(Exception):
    def __init__(self, errors: list[SourceError]):
        super().__init__("\n".join(map(str, errors)))
        self.errors = errors


# -- AST ---------------------------------------------------------------------------

@dataclass
class Node:
    pos: tuple[int, int] = field(default=(0, 0), compare=False, kw_only=True)


@dataclass
class Num(Node):
    value: int


@dataclass
class Var(Node):
    name: str


@dataclass
class Null(Node):
    pass


@dataclass
class Malloc(Node):
    count: Node


@dataclass
class Deref(Node):
    ptr: str
    index: Node


@dataclass
class Call(Node):
    name: str
    args: list


@dataclass
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass
class Neg(Node):
    operand: Node


@dataclass
class Let(Node):
    name: str
    type: str
    value: Node


@dataclass
class Assign(Node):
    name: str
    value: Node


@dataclass
class Store(Node):
    ptr: str
    index: Node
    value: Node


@dataclass
class Free(Node):
    ptr: Node


@dataclass
class Print(Node):
    value: Node


@dataclass
class If(Node):
    cond: Node
    then: list
    orelse: list


@dataclass
class While(Node):
    cond: Node
    body: list


@dataclass
class Return(Node):
    value: Node | None


@dataclass
class ExprStmt(Node):
    expr: Node


@dataclass
class Func(Node):
    name: str
    params: list             # [(name, type)]
    ret: str | None
    body: list
    exported: bool = False


@dataclass
class Extern(Node):
    module: str
    name: str
    params: list
    ret: str | None


@dataclass
class SrcProgram(Node):
    funcs: list
    externs: list = field(default_factory=list)


# -- lexer ---------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<num>\d+)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>->|==|!=|<=|>=|[-+*/%<>=(){},;:])
""", re.VERBOSE)


@dataclass
class Tok:
    kind: str      # num, id, kw, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SourceError("SyntaxError", f"unexpected character {text[pos]!r}",
                              line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            if kind == "id" and tok in KEYWORDS:
                kind = "kw"
            out.append(Tok(kind, tok, line, pos - line_start + 1))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    out.append(Tok("eof", "", line, pos - line_start + 1))
    return out


# -- parser ----------------------------------------------------------------------------

_PRECEDENCE = [("==", "!=", "<", ">", "<=", ">="), ("+", "-"), ("*", "/", "%")]


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return SourceError("SyntaxError", msg, tok.line, tok.col)

    def at(self, text):
        return self.tok.text == text and self.tok.kind in ("op", "kw")

    def eat(self, text):
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self):
        if self.tok.kind != "id":
            raise self.error(f"expected identifier, found {self.tok.text!r}")
        t = self.tok
        self.i += 1
        return t.text

    def type_(self):
        if self.tok.text in (INT, PTR) and self.tok.kind == "kw":
            t = self.tok.text
            self.i += 1
            return t
        raise self.error(f"expected type, found {self.tok.text!r}")

    def program(self) -> SrcProgram:
        funcs, externs = [], []
        while self.tok.kind != "eof":
            if self.at("extern"):
                externs.append(self.extern())
            else:
                funcs.append(self.func())
        return SrcProgram(funcs, externs, pos=(1, 1))

    def signature(self):
        self.eat("(")
        params = []
        if not self.at(")"):
            while True:
                pname = self.ident()
                self.eat(":")
                params.append((pname, self.type_()))
                if not self.at(","):
                    break
                self.eat(",")
        self.eat(")")
        ret = None
        if self.at("->"):
            self.eat("->")
            ret = self.type_()
        return params, ret

    def extern(self) -> Extern:
        start = self.eat("extern")
        module = self.ident()
        self.eat("fn")
        name = self.ident()
        params, ret = self.signature()
        self.eat(";")
        return Extern(module, name, params, ret, pos=(start.line, start.col))

    def func(self) -> Func:
        start = self.tok
        exported = False
        if self.at("export"):
            self.eat("export")
            exported = True
        self.eat("fn")
        name = self.ident()
        params, ret = self.signature()
        body = self.block()
        return Func(name, params, ret, body, exported, pos=(start.line, start.col))

    def block(self) -> list:
        self.eat("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block")
            stmts.append(self.stmt())
        self.eat("}")
        return stmts

    def deref_target(self):
        if self.at("("):
            self.eat("(")
            p = self.ident()
            self.eat("+")
            idx = self.expr()
            self.eat(")")
            return p, idx
        t = self.tok
        return self.ident(), Num(0, pos=(t.line, t.col))

    def stmt(self):
        t = self.tok
        pos = (t.line, t.col)
        if self.at("let"):
            self.eat("let")
            name = self.ident()
            self.eat(":")
            ty = self.type_()
            self.eat("=")
            value = self.expr()
            self.eat(";")
            return Let(name, ty, value, pos=pos)
        if self.at("*"):
            self.eat("*")
            p, idx = self.deref_target()
            self.eat("=")
            value = self.expr()
            self.eat(";")
            return Store(p, idx, value, pos=pos)
        if self.at("free"):
            self.eat("free")
            self.eat("(")
            e = self.expr()
            self.eat(")")
            self.eat(";")
            return Free(e, pos=pos)
        if self.at("print"):
            self.eat("print")
            self.eat("(")
            e = self.expr()
            self.eat(")")
            self.eat(";")
            return Print(e, pos=pos)
        if self.at("if"):
            return self.if_stmt()
        if self.at("while"):
            self.eat("while")
            self.eat("(")
            cond = self.expr()
            self.eat(")")
            return While(cond, self.block(), pos=pos)
        if self.at("return"):
            self.eat("return")
            value = None if self.at(";") else self.expr()
            self.eat(";")
            return Return(value, pos=pos)
        if t.kind == "id" and self.toks[self.i + 1].text == "=":
            name = self.ident()
            self.eat("=")
            value = self.expr()
            self.eat(";")
            return Assign(name, value, pos=pos)
        if t.kind == "id" and self.toks[self.i + 1].text == "(":
            e = self.primary()
            self.eat(";")
            return ExprStmt(e, pos=pos)
        raise self.error(f"expected statement, found {t.text!r}")

    def if_stmt(self):
        t = self.eat("if")
        self.eat("(")
        cond = self.expr()
        self.eat(")")
        then = self.block()
        orelse = []
        if self.at("else"):
            self.eat("else")
            orelse = [self.if_stmt()] if self.at("if") else self.block()
        return If(cond, then, orelse, pos=(t.line, t.col))

    def expr(self, level=0):
        if level == len(_PRECEDENCE):
            return self.unary()
        left = self.expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in _PRECEDENCE[level]:
            t = self.tok
            self.i += 1
            right = self.expr(level + 1)
            left = BinOp(t.text, left, right, pos=(t.line, t.col))
            if level == 0 and self.tok.text in _PRECEDENCE[0]:
                raise self.error("comparisons do not chain")
        return left

    def unary(self):
        t = self.tok
        if self.at("-"):
            self.eat("-")
            return Neg(self.unary(), pos=(t.line, t.col))
        if self.at("*"):
            self.eat("*")
            p, idx = self.deref_target()
            return Deref(p, idx, pos=(t.line, t.col))
        return self.primary()

    def primary(self):
        t = self.tok
        pos = (t.line, t.col)
        if t.kind == "num":
            self.i += 1
            return Num(int(t.text), pos=pos)
        if self.at("null"):
            self.eat("null")
            return Null(pos=pos)
        if self.at("malloc"):
            self.eat("malloc")
            self.eat("(")
            e = self.expr()
            self.eat(")")
            return Malloc(e, pos=pos)
        if self.at("("):
            self.eat("(")
            e = self.expr()
            self.eat(")")
            return e
        if t.kind == "id":
            name = self.ident()
            if self.at("("):
                self.eat("(")
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.expr())
                        if not self.at(","):
                            break
                        self.eat(",")
                self.eat(")")
                return Call(name, args, pos=pos)
            return Var(name, pos=pos)
        raise self.error(f"expected expression, found {t.text or 'end of input'!r}")


def parse_src(text: str) -> SrcProgram:
    return Parser(text).program()
