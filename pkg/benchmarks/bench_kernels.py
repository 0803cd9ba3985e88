"""Compiled vs numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each case runs both backends on identical inputs, checks that the outputs
agree, and reports the best-of-``repeat`` wall time.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from softdetect import kernels
from softdetect.coding import RscCode
from softdetect.constellation import BitPriorSet, build_dsm_epa


def bcjr_case(steps: int, maxlog: bool):
    ns, par, _ = RscCode().trellis()
    llr = np.random.default_rng(0).normal(0, 2, (steps, 2))
    return f"bcjr steps={steps} {'maxlog' if maxlog else 'full'}", (ns, par, llr, maxlog), "bcjr"


def pattern_case(n_bits: int, n_obs: int, maxlog: bool):
    rng = np.random.default_rng(1)
    c = build_dsm_epa(n_bits)
    pri = BitPriorSet.from_llrs(rng.normal(0, 3, (n_obs, n_bits)))
    ll = -np.abs(rng.normal(size=(n_obs, c.size))) * 20
    name = f"pattern_llrs N={n_bits} obs={n_obs} {'maxlog' if maxlog else 'exact'}"
    return name, (pri.log_p0, pri.log_p1, ll, c.mapper, maxlog), "pattern_llrs"


CASES = [
    lambda: bcjr_case(10_004, False),
    lambda: bcjr_case(10_004, True),
    lambda: pattern_case(10, 500, False),
    lambda: pattern_case(10, 500, True),
    lambda: pattern_case(16, 20, False),
    lambda: pattern_case(16, 20, True),
]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="write results to this file")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available",
              file=sys.stderr)
    mods = {b: kernels.load_backend(b) for b in backends}

    results = []
    print(f"{'case':<44}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for make in CASES:
        name, fargs, fn = make()
        outs, times = {}, {}
        for b, mod in mods.items():
            f = getattr(mod, fn)
            outs[b] = f(*fargs)
            times[b] = min(timeit.repeat(lambda: f(*fargs), number=1, repeat=args.repeat))
        if len(outs) == 2 and np.max(np.abs(outs["cython"] - outs["python"])) > 1e-9:
            raise SystemExit(f"{name}: backends disagree")
        speedup = times["python"] / times["cython"] if len(times) == 2 else float("nan")
        print(f"{name:<44}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
              + f"{speedup:>9.1f}x")
        results.append({"case": name, "seconds": times, "speedup": speedup})

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
