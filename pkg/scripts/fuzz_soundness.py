"""Safe-backend soundness over seeded fuzzer programs, with optional bug injection.

Without bugs every trace should be Full-safe. With ``--bugs`` each program ends in an
injected violation, which the Safe backend should trap on and the Full monitor should
flag on the Unsafe backend's shadow trace.

    python3 scripts/fuzz_soundness.py --programs 1000
    python3 scripts/fuzz_soundness.py --programs 200 --bugs oob uaf double_free
"""

from __future__ import annotations

import argparse
import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, field

from mswasm.interpreter import ENFORCE, FRESH, OBSERVE, REUSE
from mswasm.minic import SAFE, UNSAFE, run_src
from mswasm.minic.fuzz import BUGS, FuzzConfig, gen_program
from mswasm.monitors import Policy, check


@dataclass
class SoundnessConfig:
    programs: int = 1000
    first_seed: int = 0
    fuel: int = 10 ** 6
    bugs: list = field(default_factory=list)


def run(cfg: SoundnessConfig) -> Counter:
    tally: Counter = Counter()
    fuzz = FuzzConfig(bugs=tuple(cfg.bugs))
    for seed in range(cfg.first_seed, cfg.first_seed + cfg.programs):
        src = gen_program(seed, fuzz)
        alloc = FRESH if seed % 2 == 0 else REUSE
        if not cfg.bugs:
            r = run_src(src, SAFE, mode=OBSERVE, alloc=alloc, fuel=cfg.fuel)
            tally["full-safe" if check(r.trace, Policy.FULL).safe else "UNSOUND"] += 1
            continue
        s = run_src(src, SAFE, mode=ENFORCE, alloc=alloc, fuel=cfg.fuel)
        u = run_src(src, UNSAFE, mode=OBSERVE, alloc=alloc, fuel=cfg.fuel)
        v = check(u.trace, Policy.FULL)
        tally[f"safe trap {s.trap.kind if s.trap else 'none'}"] += 1
        tally[f"unsafe {'flagged ' + v.kind if not v.safe else 'unflagged'}"] += 1
    return tally


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--programs", type=int, default=SoundnessConfig.programs)
    ap.add_argument("--first-seed", type=int, default=SoundnessConfig.first_seed)
    ap.add_argument("--fuel", type=int, default=SoundnessConfig.fuel)
    ap.add_argument("--bugs", nargs="*", choices=BUGS, default=[])
    args = ap.parse_args(argv)
    cfg = SoundnessConfig(args.programs, args.first_seed, args.fuel, args.bugs)
    print("# config " + json.dumps(asdict(cfg)))
    t0 = time.perf_counter()
    tally = run(cfg)
    for k, n in sorted(tally.items()):
        print(f"{k}: {n}")
    print(f"{time.perf_counter() - t0:.1f}s")
    return 1 if tally["UNSOUND"] or tally["unsafe unflagged"] else 0


if __name__ == "__main__":
    raise SystemExit(main())
