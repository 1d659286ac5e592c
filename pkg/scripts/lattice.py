"""Brute-force the policy lattice and time it.

    python3 scripts/lattice.py --max-len 5 --colors 2 --addrs 4 --sizes 2
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass

from mswasm.monitors import IMPLICATIONS, implication_name, lattice_check
from mswasm.trace import write_trace


@dataclass
class LatticeConfig:
    max_len: int = 5
    colors: int = 2
    addrs: int = 4
    sizes: int = 2


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    cfg = LatticeConfig()
    for k, v in asdict(cfg).items():
        ap.add_argument("--" + k.replace("_", "-"), type=int, default=v)
    ap.add_argument("--witness-traces", action="store_true", help="dump each witness trace")
    args = ap.parse_args(argv)
    cfg = LatticeConfig(args.max_len, args.colors, args.addrs, args.sizes)
    print("# config " + json.dumps(asdict(cfg)))
    t0 = time.perf_counter()
    rep = lattice_check(cfg.max_len, cfg.colors, cfg.addrs, cfg.sizes)
    elapsed = time.perf_counter() - t0
    print(f"traces {rep.traces} in {elapsed:.1f}s")
    for imp in IMPLICATIONS:
        name = implication_name(*imp)
        w = rep.witnesses.get(name)
        print(f"{name}: {len(rep.counterexamples[name])} counterexamples, "
              f"witness length {len(w) if w else '-'}")
        if w and args.witness_traces:
            print(write_trace(w), end="")
    return 0 if rep.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
