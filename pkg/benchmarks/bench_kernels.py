"""Compare the numba and pure-numpy backends on the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Each backend runs in its own interpreter (the backend is fixed at import),
so the numpy numbers are not mixed with compiled inner kernels. Compilation
time is excluded by a warm-up call.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOADS = ("transforms_N32", "counter_normal_1e6", "ou_ensemble_N16", "integrate_N8_200", "pcn_N4_2000")


def _best(fn, repeat):
    fn()  # warm-up (and JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def measure(repeat: int) -> dict:
    import numpy as np

    from chslab import BACKEND
    from chslab.gibbs import GibbsModel, run_chain
    from chslab.ou import ou_ensemble
    from chslab.rng import counter_normal
    from chslab.shifted import SimConfig, integrate
    from chslab.spectral import coeffs_to_grid, grid_to_coeffs, single_mode
    from chslab.wick import renorm_constant

    rng = np.random.default_rng(0)
    coeffs = rng.normal(size=(65, 65)) + 1j * rng.normal(size=(65, 65))
    keys = np.arange(1_000_000, dtype=np.uint64)
    y0 = single_mode(8, (1, 0), 0.5) + single_mode(8, (0, 1), 0.3)
    cfg = SimConfig(cutoff=8, dt=1e-4, horizon=0.02)
    model = GibbsModel(4, 2.0, renorm_constant(4), 1.0)

    def transforms():
        for _ in range(20):
            grid_to_coeffs(coeffs_to_grid(coeffs, 128, 2.0), 32, 2.0)

    jobs = {
        "transforms_N32": transforms,
        "counter_normal_1e6": lambda: counter_normal(np.uint64(1), np.uint64(1), np.uint64(0),
                                                     np.uint64(0), keys),
        "ou_ensemble_N16": lambda: ou_ensemble(16, 0.1, 200, seed=0),
        "integrate_N8_200": lambda: integrate(cfg, y0, ledger=True),
        "pcn_N4_2000": lambda: run_chain(model, 0, 1000, n_burn=1000),
    }
    return {"backend": BACKEND, "times": {k: _best(f, repeat) for k, f in jobs.items()}}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.child:
        print(json.dumps(measure(args.repeat)))
        return 0
    results = {}
    for flag in ("1", "0"):
        env = {**os.environ, "CHSLAB_NUMBA": flag}
        out = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        data = json.loads(out.stdout.strip().splitlines()[-1])
        results[data["backend"]] = data["times"]
    if set(results) != {"numba", "numpy"}:
        print(f"numba backend unavailable; measured only {sorted(results)}")
    print(f"{'workload':22s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speed-up':>9s}")
    for w in WORKLOADS:
        a, b = results.get("numba", {}).get(w, float("nan")), results.get("numpy", {}).get(w, float("nan"))
        print(f"{w:22s} {a:11.4f} {b:11.4f} {b / a:9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
