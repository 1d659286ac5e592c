"""The ``.mswat`` s-expression text format: reader, parser and canonical printer."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .syntax import (
    IMMEDIATE_OPS, MNEMONICS, FuncDef, FuncType, Import, Instr, ModuleDef, ValType,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


@dataclass
class Atom:
    text: str
    line: int
    col: int
    quoted: bool = False


@dataclass
class SList:
    items: list
    line: int
    col: int


_TOKEN = re.compile(r'\s+|;;[^\n]*|\(|\)|"(?:[^"\\\n]|\\.)*"|[^\s()";]+')


def read_sexprs(text: str) -> list:
    """Tokenize and nest; returns top-level forms as ``SList``/``Atom`` trees."""
    stack: list[SList] = [SList([], 1, 1)]
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        tok = m.group()
        if tok == "(":
            stack.append(SList([], line, col))
        elif tok == ")":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", line, col)
            done = stack.pop()
            stack[-1].items.append(done)
        elif tok[0] == '"':
            stack[-1].items.append(Atom(_unescape(tok[1:-1]), line, col, quoted=True))
        elif not tok[0].isspace() and not tok.startswith(";;"):
            stack[-1].items.append(Atom(tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    if len(stack) != 1:
        open_ = stack[-1]
        raise ParseError("unclosed '('", open_.line, open_.col)
    return stack[0].items


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", r"\1", s)


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _where(node) -> tuple[int, int]:
    return node.line, node.col


def _head(node) -> str | None:
    if isinstance(node, SList) and node.items and isinstance(node.items[0], Atom) \
            and not node.items[0].quoted:
        return node.items[0].text
    return None


def _ident(node, what: str) -> str:
    if not isinstance(node, Atom) or node.quoted:
        raise ParseError(f"expected {what}", *_where(node))
    return node.text


def _int(node) -> int:
    if not isinstance(node, Atom) or node.quoted:
        raise ParseError("expected integer", *_where(node))
    try:
        return int(node.text, 0)
    except ValueError:
        raise ParseError(f"invalid integer {node.text!r}", *_where(node)) from None


def _valtype(node) -> ValType:
    name = _ident(node, "value type")
    try:
        return ValType(name)
    except ValueError:
        raise ParseError(f"unknown value type {name!r}", *_where(node)) from None


def _types(node) -> tuple[ValType, ...]:
    return tuple(_valtype(x) for x in node.items[1:])


def parse_module(text: str) -> ModuleDef:
    forms = read_sexprs(text)
    if len(forms) != 1:
        where = _where(forms[1]) if len(forms) > 1 else (1, 1)
        raise ParseError("expected exactly one (module ...) form", *where)
    return module_from_sexpr(forms[0])


def module_from_sexpr(form) -> ModuleDef:
    if _head(form) != "module":
        raise ParseError("expected (module ...)", *_where(form))
    items = form.items[1:]
    if not items:
        raise ParseError("module id missing", *_where(form))
    mod_id = _ident(items[0], "module id")
    imports: list[Import] = []
    funcs: list[FuncDef] = []
    for item in items[1:]:
        head = _head(item)
        if head == "import":
            if funcs:
                raise ParseError("imports must precede functions", *_where(item))
            imports.append(_parse_import(item))
        elif head == "func":
            funcs.append(_parse_func(item, len(imports) + len(funcs)))
        else:
            raise ParseError("expected (import ...) or (func ...)", *_where(item))
    return ModuleDef(mod_id, tuple(funcs), tuple(imports))


def _parse_signature(items: list, node) -> tuple[tuple, tuple, list]:
    params: tuple = ()
    results: tuple = ()
    rest = list(items)
    if rest and _head(rest[0]) == "param":
        params = _types(rest.pop(0))
    if rest and _head(rest[0]) == "result":
        results = _types(rest.pop(0))
        if len(results) > 1:
            raise ParseError("at most one result", *_where(node))
    return params, results, rest


def _parse_import(node) -> Import:
    items = node.items[1:]
    if len(items) < 2 or not (isinstance(items[1], Atom) and items[1].quoted):
        raise ParseError('expected (import <module> "<name>" ...)', *_where(node))
    module = _ident(items[0], "module id")
    params, results, rest = _parse_signature(items[2:], node)
    if rest:
        raise ParseError("unexpected form in import", *_where(rest[0]))
    return Import(module, items[1].text, FuncType(params, results))


def _parse_func(node, index: int) -> FuncDef:
    items = list(node.items[1:])
    name = None
    exported = False
    if items and isinstance(items[0], Atom) and not items[0].quoted \
            and items[0].text.startswith("$"):
        name = items.pop(0).text[1:]
    if items and _head(items[0]) == "export":
        exp = items.pop(0)
        if len(exp.items) != 2 or not (isinstance(exp.items[1], Atom) and exp.items[1].quoted):
            raise ParseError('expected (export "<name>")', *_where(exp))
        export_name = exp.items[1].text
        if name is not None and name != export_name:
            raise ParseError("function name and export name differ", *_where(exp))
        name, exported = export_name, True
    params, results, items = _parse_signature(items, node)
    locals_: tuple = ()
    if items and _head(items[0]) == "local":
        locals_ = _types(items.pop(0))
    body = tuple(_parse_instr(x) for x in items)
    return FuncDef(name if name is not None else f"func{index}", params, results,
                   locals_, body, exported)


def _parse_body(nodes) -> tuple[Instr, ...]:
    return tuple(_parse_instr(x) for x in nodes)


def _parse_instr(node) -> Instr:
    if isinstance(node, Atom):
        if node.quoted:
            raise ParseError("expected instruction", *_where(node))
        op, args, where = node.text, [], node
    else:
        if not node.items or not isinstance(node.items[0], Atom) or node.items[0].quoted:
            raise ParseError("expected instruction", *_where(node))
        op, args, where = node.items[0].text, node.items[1:], node
    pos = _where(where)
    if op not in MNEMONICS:
        raise ParseError(f"unknown instruction {op!r}", *pos)
    if op in ("block", "loop", "if"):
        result = None
        if args and _head(args[0]) == "result":
            rt = _types(args.pop(0))
            if len(rt) != 1:
                raise ParseError("block result must name one type", *pos)
            result = rt[0]
        if op != "if":
            return Instr(op, None, _parse_body(args), (), result, pos)
        then_body: tuple = ()
        else_body: tuple = ()
        rest = list(args)
        if rest and _head(rest[0]) == "then":
            then_body = _parse_body(rest.pop(0).items[1:])
        if rest and _head(rest[0]) == "else":
            else_body = _parse_body(rest.pop(0).items[1:])
        if rest:
            raise ParseError("expected (then ...) and optional (else ...)", *_where(rest[0]))
        return Instr(op, None, then_body, else_body, result, pos)
    if op in IMMEDIATE_OPS:
        if len(args) != 1:
            raise ParseError(f"{op} takes one immediate", *pos)
        return Instr(op, _int(args[0]), pos=pos)
    if args:
        raise ParseError(f"{op} takes no immediates", *pos)
    return Instr(op, pos=pos)


# -- printing ---------------------------------------------------------------

def _sig(params, results) -> str:
    out = ""
    if params:
        out += " (param " + " ".join(map(str, params)) + ")"
    if results:
        out += " (result " + " ".join(map(str, results)) + ")"
    return out


def _instr_lines(i: Instr, indent: int) -> list[str]:
    pad = " " * indent
    if i.op in ("block", "loop", "if"):
        head = f"{pad}({i.op}" + (f" (result {i.result})" if i.result else "")
        if i.op != "if":
            children = [ln for c in i.body for ln in _instr_lines(c, indent + 2)]
        else:
            children = [f"{pad}  (then"] + \
                [ln for c in i.body for ln in _instr_lines(c, indent + 4)]
            children[-1] += ")"
            if i.orelse:
                children += [f"{pad}  (else"] + \
                    [ln for c in i.orelse for ln in _instr_lines(c, indent + 4)]
                children[-1] += ")"
        if not children:
            return [head + ")"]
        children[-1] += ")"
        return [head] + children
    if i.arg is not None:
        return [f"{pad}({i.op} {i.arg})"]
    return [f"{pad}({i.op})"]


def serialize_module(m: ModuleDef) -> str:
    lines = [f"(module {m.id}"]
    for imp in m.imports:
        lines.append(f'  (import {imp.module} "{_escape(imp.name)}"'
                     f"{_sig(imp.type.params, imp.type.results)})")
    for f in m.funcs:
        head = f'  (func (export "{_escape(f.name)}")' if f.exported else f"  (func ${f.name}"
        head += _sig(f.params, f.results)
        if f.locals:
            head += " (local " + " ".join(map(str, f.locals)) + ")"
        body = [ln for i in f.body for ln in _instr_lines(i, 4)]
        if body:
            body[-1] += ")"
            lines += [head] + body
        else:
            lines.append(head + ")")
    lines[-1] += ")"
    return "\n".join(lines) + "\n"
