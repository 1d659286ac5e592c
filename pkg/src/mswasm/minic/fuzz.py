"""Grammar-directed generator of terminating, well-typed MiniC programs.

Memory discipline of generated programs (with every bug switch off):

* every pointer comes from ``malloc`` with a literal count in 1..8, or from a
  ``mk*`` helper returning a fresh block of known size;
* indices are literals below the block size or ``((e % n) + n) % n``;
* owned blocks are freed once, at the end of the scope that declared them;
* loops run on reserved counters bounded by a literal, nesting is capped and
  the helper call graph is acyclic.

So a Safe-backend run either finishes or stops on a non-memory trap. The
``bugs`` switches append one deliberate violation to ``main``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

BUGS = ("oob", "uaf", "double_free")


@dataclass(frozen=True)
class FuzzConfig:
    max_helpers: int = 3
    max_stmts: int = 5
    max_depth: int = 2
    max_expr_depth: int = 3
    max_loop_iters: int = 5
    max_malloc: int = 8
    bugs: tuple = ()


@dataclass
class _Var:
    name: str
    type: str
    size: object = None       # pointer block size: int literal or the name of an int param
    assignable: bool = True
    owned: bool = False


@dataclass
class _Helper:
    name: str
    kind: str                 # "int": (a, b) -> int; "buf": (p, n, x) -> int; "mk": (x) -> ptr
    size: int = 0


@dataclass
class _Func:
    helpers: list             # callable helpers (later in the DAG)
    is_main: bool
    ret: str | None = None
    scopes: list = field(default_factory=list)
    loop_depth: int = 0


class _Gen:
    def __init__(self, seed: int, cfg: FuzzConfig):
        self.rng = random.Random(seed)
        self.cfg = cfg
        self.fresh = 0
        self.budget = 0

    def name(self, prefix="v"):
        self.fresh += 1
        return f"{prefix}{self.fresh}"

    # -- scopes -----------------------------------------------------------------------

    def visible(self, fn: _Func, type_=None, pred=None):
        seen, out = set(), []
        for scope in reversed(fn.scopes):
            for v in reversed(scope):
                if v.name in seen:
                    continue
                seen.add(v.name)
                if (type_ is None or v.type == type_) and (pred is None or pred(v)):
                    out.append(v)
        return out

    # -- expressions -------------------------------------------------------------------

    def lit(self):
        r = self.rng.random()
        if r < 0.08:
            return self.rng.choice(["2147483647", "(-2147483647 - 1)", "65536", "(-1)"])
        return str(self.rng.randint(0, 20))

    def index(self, fn, ptr: _Var, depth):
        if isinstance(ptr.size, int) and self.rng.random() < 0.5:
            return str(self.rng.randrange(ptr.size))
        n = ptr.size
        e = self.int_expr(fn, depth + 1)
        return f"((({e}) % {n}) + {n}) % {n}"

    def int_expr(self, fn: _Func, depth=0):
        rng = self.rng
        leaf = depth >= self.cfg.max_expr_depth or rng.random() < 0.3
        ints = self.visible(fn, "int")
        ptrs = self.visible(fn, "ptr")
        if leaf:
            if ints and rng.random() < 0.6:
                return rng.choice(ints).name
            return self.lit()
        choice = rng.random()
        if choice < 0.18 and ptrs:
            p = rng.choice(ptrs)
            return f"*({p.name} + {self.index(fn, p, depth)})"
        if choice < 0.26:
            call = self.call_expr(fn, depth, want="int")
            if call:
                return call
        if choice < 0.32:
            return f"-{self.int_expr(fn, depth + 1)}"
        if choice < 0.42:
            op = rng.choice(["==", "!=", "<", ">", "<=", ">="])
            return f"({self.int_expr(fn, depth + 1)} {op} {self.int_expr(fn, depth + 1)})"
        if choice < 0.52:
            op = rng.choice(["/", "%"])
            d = self.int_expr(fn, depth + 1)
            return f"({self.int_expr(fn, depth + 1)} {op} (({d}) * ({d}) + 1))"
        op = rng.choice(["+", "-", "*"])
        return f"({self.int_expr(fn, depth + 1)} {op} {self.int_expr(fn, depth + 1)})"

    def call_expr(self, fn: _Func, depth, want):
        if fn.loop_depth and not fn.is_main:
            return None
        options = [h for h in fn.helpers
                   if (h.kind == "mk") == (want == "ptr")
                   and (h.kind != "buf" or self.visible(fn, "ptr"))]
        if not options:
            return None
        h = self.rng.choice(options)
        if h.kind == "int":
            return f"{h.name}({self.int_expr(fn, depth + 1)}, {self.int_expr(fn, depth + 1)})"
        if h.kind == "mk":
            return f"{h.name}({self.int_expr(fn, depth + 1)})"
        p = self.rng.choice(self.visible(fn, "ptr"))
        return f"{h.name}({p.name}, {p.size}, {self.int_expr(fn, depth + 1)})"

    # -- statements --------------------------------------------------------------------

    def block(self, fn: _Func, depth, ind, extra=(), tail=()):
        fn.scopes.append(list(extra))
        lines = []
        for _ in range(self.rng.randint(1, self.cfg.max_stmts)):
            if self.budget <= 0:
                break
            self.budget -= 1
            lines += self.stmt(fn, depth, ind)
        lines += [ind + t for t in tail]
        for v in fn.scopes[-1]:
            if v.owned:
                lines.append(f"{ind}free({v.name});")
        fn.scopes.pop()
        return lines

    def declare(self, fn, v):
        fn.scopes[-1].append(v)

    def stmt(self, fn: _Func, depth, ind):
        rng = self.rng
        r = rng.random()
        ptrs = self.visible(fn, "ptr")
        if r < 0.10:
            v = _Var(self.name(), "int")
            line = f"{ind}let {v.name}: int = {self.int_expr(fn)};"
            self.declare(fn, v)
            return [line]
        if r < 0.24:
            v = _Var(self.name("p"), "ptr", owned=True)
            mk = self.call_expr(fn, 0, want="ptr") if rng.random() < 0.3 else None
            if mk:
                v.size = next(h.size for h in fn.helpers if mk.startswith(h.name + "("))
                line = f"{ind}let {v.name}: ptr = {mk};"
            else:
                v.size = rng.randint(1, self.cfg.max_malloc)
                line = f"{ind}let {v.name}: ptr = malloc({v.size});"
            self.declare(fn, v)
            return [line]
        if r < 0.28 and ptrs:
            src = rng.choice(ptrs)
            v = _Var(self.name("q"), "ptr", size=src.size)
            self.declare(fn, v)
            return [f"{ind}let {v.name}: ptr = {src.name};"]
        if r < 0.36:
            targets = self.visible(fn, "int", lambda v: v.assignable)
            if targets:
                t = rng.choice(targets)
                return [f"{ind}{t.name} = {self.int_expr(fn)};"]
        if r < 0.56 and ptrs:
            p = rng.choice(ptrs)
            return [f"{ind}*({p.name} + {self.index(fn, p, 0)}) = {self.int_expr(fn)};"]
        if r < 0.68:
            return [f"{ind}print({self.int_expr(fn)});"]
        if r < 0.78 and depth < self.cfg.max_depth:
            out = [f"{ind}if ({self.int_expr(fn)}) {{"]
            out += self.block(fn, depth + 1, ind + "  ")
            if rng.random() < 0.5:
                out.append(f"{ind}}} else {{")
                out += self.block(fn, depth + 1, ind + "  ")
            out.append(f"{ind}}}")
            return out
        if r < 0.88 and depth < self.cfg.max_depth:
            c = _Var(self.name("i"), "int", assignable=False)
            bound = rng.randint(0, self.cfg.max_loop_iters)
            out = [f"{ind}let {c.name}: int = 0;", f"{ind}while ({c.name} < {bound}) {{"]
            self.declare(fn, c)
            fn.loop_depth += 1
            out += self.block(fn, depth + 1, ind + "  ", tail=[f"{c.name} = {c.name} + 1;"])
            fn.loop_depth -= 1
            out.append(f"{ind}}}")
            return out
        if r < 0.94:
            call = self.call_expr(fn, 0, want="int")
            if call:
                return [f"{ind}{call};"]
        if fn.ret == "int" and rng.random() < 0.15:
            return [f"{ind}return {self.int_expr(fn)};"]
        return [f"{ind}print({self.lit()});"]

    # -- program -------------------------------------------------------------------------

    def helper(self, h: _Helper, callees):
        fn = _Func(callees, is_main=False, ret="ptr" if h.kind == "mk" else "int")
        if h.kind == "int":
            sig = f"fn {h.name}(a: int, b: int) -> int"
            params = [_Var("a", "int"), _Var("b", "int")]
        elif h.kind == "buf":
            sig = f"fn {h.name}(p: ptr, n: int, x: int) -> int"
            params = [_Var("p", "ptr", size="n"), _Var("n", "int", assignable=False),
                      _Var("x", "int")]
        else:
            sig = f"fn {h.name}(x: int) -> ptr"
            params = [_Var("x", "int")]
        fn.scopes.append(params)
        self.budget = self.cfg.max_stmts * 2
        if h.kind == "mk":
            # the returned block must stay live, so it is not owned here
            body = [f"  let r: ptr = malloc({h.size});"]
            fn.scopes[-1].append(_Var("r", "ptr", size=h.size))
            body += self.block(fn, 1, "  ")
            body.append("  return r;")
        else:
            body = self.block(fn, 1, "  ", tail=[f"return {self.int_expr(fn)};"])
        return [sig + " {"] + body + ["}"]

    def program(self) -> str:
        rng = self.rng
        n = rng.randint(0, self.cfg.max_helpers)
        helpers = []
        for i in range(n):
            kind = rng.choice(["int", "buf", "mk"])
            helpers.append(_Helper(f"{kind}{i}", kind, rng.randint(1, self.cfg.max_malloc)))
        out = []
        for i in reversed(range(n)):
            out += self.helper(helpers[i], helpers[i + 1:]) + [""]
        fn = _Func(helpers, is_main=True)
        self.budget = self.cfg.max_stmts * 4
        k = rng.randint(1, self.cfg.max_malloc)
        first = _Var(self.name("p"), "ptr", size=k, owned=True)
        body = self.block(fn, 0, "  ", extra=[first], tail=self.bug_lines())
        body.insert(0, f"  let {first.name}: ptr = malloc({k});")
        out += ["fn main() {"] + body + ["}"]
        return "\n".join(out) + "\n"

    def bug_lines(self):
        lines = []
        k = self.rng.randint(1, self.cfg.max_malloc)
        if "oob" in self.cfg.bugs:
            lines += [f"let bo: ptr = malloc({k});", f"*(bo + {k}) = 1;"]
        if "uaf" in self.cfg.bugs:
            lines += [f"let bu: ptr = malloc({k});", "free(bu);", "print(*bu);"]
        if "double_free" in self.cfg.bugs:
            lines += [f"let bd: ptr = malloc({k});", "free(bd);", "free(bd);"]
        return lines


def gen_program(seed: int, config: FuzzConfig = FuzzConfig()) -> str:
    """MiniC source for ``seed``; equal seeds and configs give equal text."""
    unknown = set(config.bugs) - set(BUGS)
    if unknown:
        raise ValueError(f"unknown bug switch(es): {sorted(unknown)}")
    return _Gen(seed, config).program()
