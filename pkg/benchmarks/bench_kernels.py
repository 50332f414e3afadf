"""Compiled vs numpy kernels on full-size inputs (256 elements, 128 frequencies).

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time per kernel and backend, plus the largest
absolute difference between the two results.
"""
import argparse
import math
import time

import numpy as np

from thzsense import _kernels_py

try:
    from thzsense import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def best_of(fn, args, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    k = np.linspace(5030.0, 5240.0, 128)
    x = (np.arange(256) - 127.5) * 6.2457e-4
    phase = rng.uniform(-np.pi, np.pi, 256)
    cos_out = np.cos(np.deg2rad(np.arange(0.5, 180.0, 0.5)))
    r = rng.normal(size=128) + 1j * rng.normal(size=128)
    A = rng.normal(size=(128, 180)) + 1j * rng.normal(size=(128, 180))
    B = rng.normal(size=(128, 180)) + 1j * rng.normal(size=(128, 180))
    cases = {
        "gain_table (128 x 359 x 256)": ("gain_table", (k, x, phase, cos_out, 0.0)),
        "pair_loss_surface (180 x 180, K=128)": ("pair_loss_surface", (r, A, B)),
    }
    print(f"{'kernel':40s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for label, (name, a) in cases.items():
        t_py, out_py = best_of(getattr(_kernels_py, name), a, args.repeat)
        if _compiled is None:
            print(f"{label:40s} {t_py * 1e3:11.2f} {'n/a':>12s}")
            continue
        t_cy, out_cy = best_of(getattr(_compiled, name), a, args.repeat)
        diff = float(np.max(np.abs(out_py - out_cy)))
        print(f"{label:40s} {t_py * 1e3:11.2f} {t_cy * 1e3:12.2f} {t_py / t_cy:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
