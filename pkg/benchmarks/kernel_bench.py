"""Benchmark the compiled jet kernels against the numpy fallback.

Run:  python benchmarks/kernel_bench.py [--steps N]

Times one full forward-jet + parameter-gradient pass (the inner loop of
training) across batch sizes and dimensions, and reports the speedup of the
compiled extension.
"""

import argparse
import time

import numpy as np

from eigencurve._kernels import numpy_ref

try:
    from eigencurve._kernels import _core
except ImportError:
    _core = None

from eigencurve.geometry import Ball, sample_interior
from eigencurve.network import init_params


def time_backend(mod, args, X, wv, wg, wh, steps):
    v, g, h, tape = mod.forward(*args, X)
    mod.backward(*args, tape, wv, wg, wh)  # warm up
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(steps):
            v, g, h, tape = mod.forward(*args, X)
            mod.backward(*args, tape, wv, wg, wh)
        best = min(best, (time.perf_counter() - t0) / steps)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=50, help="timed steps per case")
    opts = parser.parse_args()

    cases = [(2, 24, 256), (2, 24, 1024), (2, 32, 1024), (3, 24, 1024), (4, 24, 512)]
    print(f"{'d':>2} {'width':>5} {'batch':>6} | {'python':>10} {'compiled':>10} {'speedup':>8}")
    for d, h, n in cases:
        p = init_params([d, h, h, 1], seed=1)
        X = np.ascontiguousarray(sample_interior(Ball(d, 1.0), n, seed=2).points)
        rng = np.random.default_rng(3)
        wv = rng.standard_normal(n)
        wg = rng.standard_normal((n, d))
        wh = rng.standard_normal((n, d, d))
        args = (p.weights[0], p.biases[0], p.weights[1], p.biases[1],
                p.weights[2], p.biases[2])
        t_py = time_backend(numpy_ref, args, X, wv, wg, wh, opts.steps)
        if _core is not None:
            t_cy = time_backend(_core, args, X, wv, wg, wh, opts.steps)
            print(f"{d:>2} {h:>5} {n:>6} | {t_py * 1e3:9.2f}ms {t_cy * 1e3:9.2f}ms "
                  f"{t_py / t_cy:7.2f}x")
        else:
            print(f"{d:>2} {h:>5} {n:>6} | {t_py * 1e3:9.2f}ms {'-':>10} {'-':>8}")
    if _core is None:
        print("compiled extension not available; showing fallback only")


if __name__ == "__main__":
    main()
