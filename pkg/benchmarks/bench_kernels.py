"""Compare the compiled and pure-numpy cost kernels on genie and GA workloads.

Usage: python3 benchmarks/bench_kernels.py [--drops 3] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from xlmimo import kernels
from xlmimo.assignment import genie_search_space
from xlmimo.config import ScenarioConfig
from xlmimo.estimation import cost_weights
from xlmimo.harness import drop_statistics

WORKLOADS = {
    # name: (K, tau_p, L, candidates per call)
    "genie K=6 tau_p=3": (6, 3, 25, None),
    "GA generation K=6": (6, 3, 25, 12),
    "GA generation K=20 L=50": (20, 10, 50, 40),
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--drops", type=int, default=3)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    header = f"{'workload':<26}{'candidates':>11}" + "".join(f"{b + ' [ms]':>16}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for name, (K, tau_p, L, batch) in WORKLOADS.items():
        cfg = ScenarioConfig(K=K, tau_p=tau_p, L=L)
        times = {b: [] for b in backends}
        for drop in range(args.drops):
            stats = drop_statistics(cfg, drop)
            R = np.ascontiguousarray(stats.R)
            w = cost_weights(stats)
            rng = np.random.default_rng(drop)
            cands = genie_search_space(K, tau_p) if batch is None else rng.integers(0, tau_p, (batch, K))
            results = {}
            for b, mod in backends.items():
                call = lambda: mod.assignment_costs(R, cfg.ue_powers, tau_p, cfg.noise_power, w, cands)
                results[b] = call()
                times[b].append(min(timeit.repeat(call, number=1, repeat=args.repeat)))
            ref = results["python"]
            for b, out in results.items():
                if not np.allclose(out, ref, rtol=1e-12, atol=0):
                    raise SystemExit(f"{b} disagrees with the numpy backend on {name}")
        row = f"{name:<26}{len(cands):>11}"
        med = {b: 1e3 * float(np.median(t)) for b, t in times.items()}
        row += "".join(f"{med[b]:>16.2f}" for b in backends)
        if "cython" in med:
            row += f"{med['python'] / med['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
