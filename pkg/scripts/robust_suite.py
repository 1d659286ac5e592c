"""Robustness suite over the shipped components, for several seeds and both modes.

Enforce mode is the real check; Observe mode is the ablation showing what the
runtime checks are blocking.

    python3 scripts/robust_suite.py --seeds 0 1 2 --contexts 200
"""

from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from mswasm.interpreter import ENFORCE, OBSERVE
from mswasm.robustness import DEFAULT_CONTEXT_FUEL, load_components, robust_component, witness_check

ROOT = Path(__file__).resolve().parents[1]


@dataclass
class SuiteConfig:
    components: str = str(ROOT / "components")
    contexts: int = 200
    seeds: list = field(default_factory=lambda: [0])
    fuel: int = DEFAULT_CONTEXT_FUEL
    modes: list = field(default_factory=lambda: [ENFORCE, OBSERVE])


def main(argv=None) -> int:
    d = SuiteConfig()
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--components", default=d.components)
    ap.add_argument("--contexts", type=int, default=d.contexts)
    ap.add_argument("--seeds", type=int, nargs="+", default=d.seeds)
    ap.add_argument("--fuel", type=int, default=d.fuel)
    ap.add_argument("--modes", nargs="+", choices=(ENFORCE, OBSERVE), default=d.modes)
    args = ap.parse_args(argv)
    cfg = SuiteConfig(args.components, args.contexts, args.seeds, args.fuel, args.modes)
    print("# config " + json.dumps(asdict(cfg)))
    comps = load_components(cfg.components)
    table = {c.name: c for c in comps}
    enforce_violations = 0
    print(f"{'component':<14}{'mode':<9}{'seed':>5}{'violations':>12}{'leaks':>7}  status")
    for c in comps:
        for mode in cfg.modes:
            for seed in cfg.seeds:
                rep = robust_component(c, cfg.contexts, seed, cfg.fuel, mode)
                if mode == ENFORCE:
                    enforce_violations += len(rep.violations)
                counts = " ".join(f"{k}={v}" for k, v in rep.counts().items())
                print(f"{c.name:<14}{mode:<9}{seed:>5}{len(rep.violations):>12}"
                      f"{len(rep.leaks):>7}  {counts}")
    failures = [r for c in comps for r in witness_check(c.catalog, table) if not r.ok]
    for r in failures:
        print(r)
    print(f"enforce violations {enforce_violations}, catalog failures {len(failures)}")
    return 0 if enforce_violations == 0 and not failures else 1


if __name__ == "__main__":
    raise SystemExit(main())
