"""Bug corpus: ``corpus/<name>/{prog.minic, expected.toml}``.

``expected.toml`` holds top-level ``args``, ``alloc`` (fresh|reuse) and ``bug``
(a label, ``none`` for safe programs), then one table per run configuration
(``[safe.enforce]``, ``[safe.observe]``, ``[unsafe.observe]``). Each table has
an ``outcome`` token (``ok``, ``value:<n>``, ``trap:<Kind>``), an optional
``output`` list, and one verdict token (``safe`` or ``violation:<Kind>``) per
policy name. An optional ``[hyper]`` table marks the 2-hypersafety demos.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .interpreter import RunResult
from .minic import run_src
from .monitors import Policy, check

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

CONFIGS = (("safe", "enforce"), ("safe", "observe"), ("unsafe", "observe"))
TOP_KEYS = {"args", "alloc", "bug", "hyper", "safe", "unsafe"}
TABLE_KEYS = {"outcome", "output"} | {p.value for p in Policy}


@dataclass
class CorpusEntry:
    name: str
    path: Path
    source: str
    expected: dict
    args: tuple = ()
    alloc: str = "fresh"
    bug: str = "none"
    hyper: dict | None = None

    @property
    def is_bug(self) -> bool:
        return self.bug != "none"

    def run(self, backend: str, mode: str, args=None, **kw) -> RunResult:
        return run_src(self.source, backend, self.args if args is None else args, mode,
                       self.alloc, **kw)


def _check_keys(where: str, got, allowed):
    extra = set(got) - set(allowed)
    if extra:
        raise ValueError(f"{where}: unknown key(s) {sorted(extra)}")


def load_entry(path: str | Path) -> CorpusEntry:
    path = Path(path)
    data = tomllib.loads((path / "expected.toml").read_text())
    _check_keys(f"{path}/expected.toml", data, TOP_KEYS)
    expected = {}
    for backend, mode in CONFIGS:
        table = data.get(backend, {}).get(mode)
        if table is not None:
            _check_keys(f"{path}: [{backend}.{mode}]", table, TABLE_KEYS)
            expected[(backend, mode)] = table
    return CorpusEntry(path.name, path, (path / "prog.minic").read_text(), expected,
                       tuple(data.get("args", ())), data.get("alloc", "fresh"),
                       data.get("bug", "none"), data.get("hyper"))


def load_corpus(root: str | Path) -> list[CorpusEntry]:
    root = Path(root)
    return [load_entry(d) for d in sorted(root.iterdir()) if (d / "expected.toml").exists()]


def verdict_token(v) -> str:
    return "safe" if v.safe else f"violation:{v.kind}"


def observe(result: RunResult) -> dict:
    """The tokens an expected.toml table can mention, computed from one run."""
    obs = {"outcome": result.outcome, "output": list(result.output)}
    for p in Policy:
        obs[p.value] = verdict_token(check(result.trace, p))
    return obs


@dataclass
class EntryReport:
    name: str
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def __str__(self) -> str:
        if self.ok:
            return f"PASS {self.name}"
        return f"FAIL {self.name}: " + "; ".join(self.mismatches)


def check_entry(entry: CorpusEntry) -> EntryReport:
    rep = EntryReport(entry.name)
    for (backend, mode), table in entry.expected.items():
        obs = observe(entry.run(backend, mode))
        for key, want in table.items():
            if obs[key] != want:
                rep.mismatches.append(f"{backend}.{mode}.{key}: expected {want!r}, got {obs[key]!r}")
    return rep


def run_corpus(root: str | Path) -> list[EntryReport]:
    return [check_entry(e) for e in load_corpus(root)]
