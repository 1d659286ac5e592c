"""Executable robust-safety check for Safe-compiled components.

A *component* is a MiniC program compiled with the safe backend. Adversarial
*contexts* are generated, well-typed MSWasm modules that import the
component's exports and drive them from an exported ``main``. Every run is
judged by :class:`RobustnessSpec`:

* a Full-policy violation is *attributed* to the component when its color was
  allocated by the component or the violating access ran in component code;
* an attributed violation that took effect (execution went past it) is a
  robustness failure;
* an attributed violation that the interpreter stopped with a trap is
  *blocked*; it is acceptable only if the witness catalog holds a MiniC
  context reproducing the same violation kind, i.e. the same bad behaviour is
  already reachable from source;
* everything else (context self-harm, non-memory traps) is benign.

Handles that the component hands back to the context are logged by the
capability-leak audit. Leaks are reported but do not fail the check.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .interpreter import ENFORCE, FRESH, LinkError, instantiate, run
from .ir.syntax import HANDLE, I32, FuncDef, FuncType, Import, ModuleDef, ins
from .ir.validate import validate
from .minic import SAFE, compile_src
from .monitors import Policy, check
from .trace import ALLOC

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

CONTEXT_ID = "ctx"
DEFAULT_CONTEXT_FUEL = 100_000
BOUNDARY_I32 = (0, 1, -1, 2, 3, 4, 7, 8, 16, 64, 1 << 16, (1 << 31) - 1, -(1 << 31))
SEG_SIZES = (0, 1, 4, 8, 16, 32)
FREE_THEN_CALL = "free-returned-then-call"


# -- components and witnesses -------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    component: str
    id: str
    kind: str
    source: str
    description: str = ""


@dataclass
class WitnessCatalog:
    entries: list = field(default_factory=list)

    def kinds(self, component: str) -> set[str]:
        return {w.kind for w in self.entries if w.component == component}

    def for_component(self, component: str) -> "WitnessCatalog":
        return WitnessCatalog([w for w in self.entries if w.component == component])


def load_witnesses(path: Path, component: str) -> WitnessCatalog:
    if not path.exists():
        return WitnessCatalog()
    data = tomllib.loads(path.read_text())
    entries = []
    for rec in data.get("witness", []):
        unknown = set(rec) - {"id", "kind", "source", "description"}
        if unknown:
            raise ValueError(f"{path}: unknown witness field(s) {sorted(unknown)}")
        entries.append(Witness(component, rec["id"], rec["kind"], rec["source"],
                               rec.get("description", "")))
    return WitnessCatalog(entries)


@dataclass
class Component:
    name: str
    source: str
    module: ModuleDef
    catalog: WitnessCatalog


def load_component(path: str | Path) -> Component:
    """``path`` is a component directory (``component.minic`` + ``witnesses.toml``) or a .minic file."""
    path = Path(path)
    src_path = path / "component.minic" if path.is_dir() else path
    name = path.name if path.is_dir() else path.stem
    source = src_path.read_text()
    module = compile_src(source, SAFE, module_id=name)
    catalog = load_witnesses(src_path.parent / "witnesses.toml", name) if path.is_dir() \
        else WitnessCatalog()
    return Component(name, source, module, catalog)


def load_components(root: str | Path) -> list[Component]:
    root = Path(root)
    return [load_component(d) for d in sorted(root.iterdir())
            if (d / "component.minic").exists()]


def interface_of(module: ModuleDef) -> dict[str, FuncType]:
    return {name: f.type for name, f in sorted(module.exports().items())}


# -- context generation ---------------------------------------------------------------

@dataclass(frozen=True)
class AdversarialContext:
    id: str
    module: ModuleDef
    patterns: frozenset = frozenset()


class _ContextBuilder:
    N_HANDLES = 6
    N_INTS = 3

    def __init__(self, rng: random.Random, component: str, interface: dict):
        self.rng = rng
        self.component = component
        self.funcs = list(interface.items())
        self.imports = tuple(Import(component, name, ft) for name, ft in self.funcs)
        self.code: list = []
        self.patterns: set = set()
        # provenance of each handle local: None (null), "own", "ret", "slice", "freed-ret"
        self.hprov: list = [None] * self.N_HANDLES
        self.freed_returned = False
        self.calls = 0

    def h(self, k):     # handle locals follow the i32 locals
        return self.N_INTS + k

    def emit(self, *instrs):
        self.code.extend(instrs)

    def pick_h(self, prefer=None):
        """A handle local, preferring provenance ``prefer`` and mostly avoiding null ones."""
        cands = [k for k, p in enumerate(self.hprov) if p == prefer] if prefer else []
        if not cands and self.rng.random() < 0.9:
            cands = [k for k, p in enumerate(self.hprov) if p is not None]
        return self.rng.choice(cands) if cands else self.rng.randrange(self.N_HANDLES)

    def i32_arg(self):
        if self.rng.random() < 0.25:
            return ins("local.get", self.rng.randrange(self.N_INTS))
        return ins("i32.const", self.rng.choice(BOUNDARY_I32))

    # actions
    def alloc(self, k=None):
        k = self.rng.randrange(self.N_HANDLES) if k is None else k
        self.emit(ins("i32.const", self.rng.choice(SEG_SIZES)), ins("segment.new"),
                  ins("local.set", self.h(k)))
        self.hprov[k] = "own"

    def free(self, k=None):
        k = self.pick_h() if k is None else k
        self.emit(ins("local.get", self.h(k)), ins("segment.free"))
        if self.hprov[k] == "ret":
            self.hprov[k] = "freed-ret"
            self.freed_returned = True
        elif self.hprov[k] == "own":
            self.hprov[k] = "freed-own"

    def derive(self):
        j, k = self.pick_h(), self.rng.randrange(self.N_HANDLES)
        self.emit(ins("local.get", self.h(j)))
        if self.rng.random() < 0.5:
            self.emit(ins("i32.const", self.rng.choice((0, 1, 2, 4))),
                      ins("i32.const", self.rng.choice((0, 1, 4, 8))), ins("handle.slice"))
            self.patterns.add("slice")
        else:
            self.emit(ins("i32.const", self.rng.choice((-4, -1, 1, 4, 8, 32))),
                      ins("handle.add"))
        self.emit(ins("local.set", self.h(k)))
        self.hprov[k] = "slice" if self.hprov[j] else None

    def access(self):
        j = self.pick_h(self.rng.choice(["own", "ret", None]))
        op = self.rng.choice(["segment.load32", "segment.store32", "segment.load8",
                              "segment.store8"])
        self.emit(ins("local.get", self.h(j)))
        if op.startswith("segment.store"):
            self.emit(self.i32_arg(), ins(op))
        else:
            self.emit(ins(op), ins("local.set", self.rng.randrange(self.N_INTS)))

    def call(self, name=None, handle_args=None):
        if not self.funcs:
            return self.alloc()
        idx = self.rng.randrange(len(self.funcs)) if name is None else \
            [n for n, _ in self.funcs].index(name)
        fname, ft = self.funcs[idx]
        for t in ft.params:
            if t is HANDLE:
                k = handle_args if handle_args is not None else \
                    self.pick_h(self.rng.choice(["own", "ret", "slice", "freed-ret", None]))
                self.patterns.add({"own": "own-handle-in", "slice": "slice-in"}.get(
                    self.hprov[k], "handle-in"))
                self.emit(ins("local.get", self.h(k)))
            else:
                self.emit(self.i32_arg())
        if self.freed_returned:
            self.patterns.add(FREE_THEN_CALL)
        self.calls += 1
        if self.calls > 1:
            self.patterns.add("repeated-call")
        self.emit(ins("call", idx))
        for t in ft.results:
            if t is HANDLE:
                k = self.rng.randrange(self.N_HANDLES)
                self.emit(ins("local.set", self.h(k)))
                self.hprov[k] = "ret"
            else:
                self.emit(ins("local.set", self.rng.randrange(self.N_INTS)))
        return fname

    def misc(self):
        r = self.rng.random()
        if r < 0.4:
            self.emit(ins("local.get", self.rng.randrange(self.N_INTS)), ins("print"))
        elif r < 0.7:
            k = self.rng.randrange(self.N_HANDLES)
            self.emit(ins("handle.null"), ins("local.set", self.h(k)))
            self.hprov[k] = None
        else:
            self.emit(ins("local.get", self.rng.randrange(self.N_INTS)),
                      ins("i32.const", self.rng.choice(BOUNDARY_I32)), ins("i32.add"),
                      ins("local.set", self.rng.randrange(self.N_INTS)))

    def free_returned_then_call(self):
        makers = [n for n, ft in self.funcs if HANDLE in ft.results]
        if not makers:
            return
        self.call(self.rng.choice(makers))
        k = self.hprov.index("ret")
        self.free(k)
        others = [n for n, _ in self.funcs]
        self.call(self.rng.choice(others), handle_args=k)

    def build(self, ctx_id: str, template: bool) -> AdversarialContext:
        self.alloc(0)
        if template:
            self.free_returned_then_call()
        steps = self.rng.randint(3, 14)
        actions = [self.call] * 4 + [self.alloc, self.free, self.derive, self.access,
                                     self.access, self.misc]
        if not self.funcs:
            actions = [self.alloc, self.derive, self.access, self.misc]
        for _ in range(steps):
            self.rng.choice(actions)()
        if not self.funcs:
            self.free(0)
        main = FuncDef("main", (), (), (I32,) * self.N_INTS + (HANDLE,) * self.N_HANDLES,
                       tuple(self.code), True)
        return AdversarialContext(ctx_id, ModuleDef(CONTEXT_ID, (main,), self.imports),
                                  frozenset(self.patterns))


def gen_contexts(interface: dict | ModuleDef, seed: int, n: int,
                 component: str | None = None) -> list[AdversarialContext]:
    """``n`` well-typed contexts for ``interface``; a pure function of its arguments."""
    if isinstance(interface, ModuleDef):
        component = component or interface.id
        interface = interface_of(interface)
    if component is None:
        raise ValueError("component id required with a bare interface")
    out = []
    for i in range(n):
        rng = random.Random(f"{seed}:{i}")
        b = _ContextBuilder(rng, component, interface)
        out.append(b.build(f"ctx-{i:04d}", template=i % 4 == 0))
    return out


# -- the check -------------------------------------------------------------------------

@dataclass(frozen=True)
class RobustnessSpec:
    """Bad prefix: a Full violation on component memory or in component code."""

    component: str

    def component_colors(self, trace) -> set[int]:
        return {e.color for e in trace if e.kind == ALLOC and e.owner == self.component}

    def judge(self, trace, trap=None, witnessed=frozenset()):
        """``(status, violation)`` for one run; status is one of ok, self-harm,
        blocked, unwitnessed or violation."""
        v = check(trace, Policy.FULL)
        if v.safe:
            return "ok", None
        e = trace[v.at]
        if v.color not in self.component_colors(trace) and e.owner != self.component:
            return "self-harm", v
        if trap is not None and trap.event_index == v.at:
            return ("blocked" if v.kind in witnessed else "unwitnessed"), v
        return "violation", v


FAILING = ("violation", "unwitnessed")


@dataclass
class ContextResult:
    context: str
    outcome: str
    trap: str | None
    status: str
    verdict: str
    leaks: list = field(default_factory=list)
    patterns: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.status in FAILING


@dataclass
class RobustnessReport:
    component: str
    seed: int
    n: int
    fuel: int
    mode: str
    results: list = field(default_factory=list)

    @property
    def violations(self) -> list[ContextResult]:
        return [r for r in self.results if r.failed]

    @property
    def leaks(self) -> list[ContextResult]:
        return [r for r in self.results if r.leaks]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.results:
            out[r.status] = out.get(r.status, 0) + 1
        return dict(sorted(out.items()))

    def lines(self) -> list[str]:
        return [json.dumps({"component": self.component, **asdict(r)}, separators=(",", ":"))
                for r in self.results]

    def summary(self) -> str:
        traps: dict[str, int] = {}
        for r in self.results:
            if r.trap:
                traps[r.trap] = traps.get(r.trap, 0) + 1
        rows = [f"component {self.component}: {len(self.results)} contexts "
                f"(seed {self.seed}, fuel {self.fuel}, mode {self.mode})",
                "  status  " + " ".join(f"{k}={v}" for k, v in self.counts().items()),
                "  traps   " + (" ".join(f"{k}={v}" for k, v in sorted(traps.items())) or "-"),
                f"  leaks   {len(self.leaks)} context(s) received component handles",
                f"  {len(self.violations)} violations"]
        return "\n".join(rows)


def audit_leaks(crossings, component: str, component_colors: set[int]) -> list[int]:
    """Colors of component-owned handles returned to a caller outside the component."""
    return sorted({c.color for c in crossings
                   if c.direction == "out" and c.callee == component and c.caller != component
                   and c.color in component_colors})


def run_context(component: ModuleDef, ctx: AdversarialContext, spec: RobustnessSpec,
                witnessed=frozenset(), fuel: int = DEFAULT_CONTEXT_FUEL,
                mode: str = ENFORCE) -> ContextResult:
    try:
        p = instantiate([component, ctx.module])
    except LinkError as e:
        return ContextResult(ctx.id, "link-error", None, "link-error", str(e))
    r = run(p, f"{CONTEXT_ID}.main", (), mode=mode, fuel=fuel, alloc_mode=FRESH)
    status, v = spec.judge(r.trace, r.trap, witnessed)
    if status == "ok" and r.trap is not None:
        status = "benign-trap"
    leaks = audit_leaks(r.crossings, spec.component, spec.component_colors(r.trace))
    return ContextResult(ctx.id, r.outcome, r.trap.kind if r.trap else None, status,
                         str(v) if v else "SAFE", leaks, sorted(ctx.patterns))


def rsp_run(component: ModuleDef, ctxs, spec: RobustnessSpec | None = None,
            fuel: int = DEFAULT_CONTEXT_FUEL, catalog: WitnessCatalog | None = None,
            mode: str = ENFORCE, seed: int = 0) -> RobustnessReport:
    spec = spec or RobustnessSpec(component.id)
    witnessed = frozenset(catalog.kinds(spec.component)) if catalog else frozenset()
    validate(component)
    report = RobustnessReport(spec.component, seed, len(ctxs), fuel, mode)
    for ctx in sorted(ctxs, key=lambda c: c.id):
        report.results.append(run_context(component, ctx, spec, witnessed, fuel, mode))
    return report


def robust_component(comp: Component, n: int = 200, seed: int = 0,
                     fuel: int = DEFAULT_CONTEXT_FUEL, mode: str = ENFORCE) -> RobustnessReport:
    ctxs = gen_contexts(comp.module, seed, n)
    return rsp_run(comp.module, ctxs, RobustnessSpec(comp.name), fuel, comp.catalog, mode, seed)


# -- witnesses ----------------------------------------------------------------------------

@dataclass
class WitnessResult:
    id: str
    component: str
    expected: str
    observed: str
    ok: bool

    def __str__(self) -> str:
        if self.ok:
            return f"PASS {self.component}/{self.id} {self.expected}"
        return f"FAIL {self.component}/{self.id} expected {self.expected} observed {self.observed}"


def witness_check(catalog: WitnessCatalog, components: dict,
                  fuel: int = DEFAULT_CONTEXT_FUEL) -> list[WitnessResult]:
    """Compile each entry's MiniC context with the safe backend, link it against its
    component and compare the Full violation kind it produces."""
    out = []
    for w in catalog.entries:
        try:
            comp = components[w.component]
            comp_module = comp.module if isinstance(comp, Component) else comp
            ctx = compile_src(w.source, SAFE, module_id=CONTEXT_ID)
            r = run(instantiate([comp_module, ctx]), f"{CONTEXT_ID}.main", (), fuel=fuel)
            v = check(r.trace, Policy.FULL)
            observed = "SAFE" if v.safe else v.kind
        except Exception as e:  # compile and link failures are reported per entry
            observed = f"error: {e}"
        out.append(WitnessResult(w.id, w.component, w.kind, observed, observed == w.kind))
    return out
