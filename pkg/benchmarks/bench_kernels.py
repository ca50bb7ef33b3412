#!/usr/bin/env python3
"""Compare the jit-compiled and pure-numpy paths of the hot kernels.

The package selects the path at import time from the LOBEXEC_NO_NUMBA
environment variable, so each path is timed in a subprocess. Run:

    python3 benchmarks/bench_kernels.py
"""

import json
import os
import subprocess
import sys

WORKER = r"""
import json
import sys
import time

import numpy as np

from lobexec._kernels import USE_NUMBA, mlp_backward, mlp_forward, ou_exact_steps

rng = np.random.default_rng(0)
batch = 64
x = rng.normal(size=(batch, 36))
w1 = rng.normal(size=(36, 50)) / 6.0
b1 = rng.normal(size=50) * 0.1
w2 = rng.normal(size=(50, 20)) / 7.0
b2 = rng.normal(size=20) * 0.1
w3 = rng.normal(size=(20, 5)) / 4.5
b3 = rng.normal(size=5) * 0.1
dq = rng.normal(size=(batch, 5))
normals = rng.normal(size=100_000)


def bench(fn, reps):
    fn()  # warmup (includes jit compilation when enabled)
    start = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - start) / reps


q, h1, h2 = mlp_forward(x, w1, b1, w2, b2, w3, b3)
results = {
    "path": "numba" if USE_NUMBA else "numpy",
    "mlp_forward_us": bench(
        lambda: mlp_forward(x, w1, b1, w2, b2, w3, b3), 5000) * 1e6,
    "mlp_backward_us": bench(
        lambda: mlp_backward(x, h1, h2, dq, w2, w3), 5000) * 1e6,
    "ou_100k_steps_ms": bench(
        lambda: ou_exact_steps(100.0, 100.0, 0.01, 0.5, 1.0, normals), 200) * 1e3,
}
json.dump(results, sys.stdout)
"""


def run_path(no_numba: bool) -> dict:
    env = dict(os.environ, LOBEXEC_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run([sys.executable, "-c", WORKER], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main() -> None:
    numba = run_path(no_numba=False)
    numpy_ = run_path(no_numba=True)
    print(f"{'kernel':<22}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for key, unit in (("mlp_forward_us", "us"), ("mlp_backward_us", "us"),
                      ("ou_100k_steps_ms", "ms")):
        a, b = numba[key], numpy_[key]
        name = key.rsplit("_", 1)[0]
        print(f"{name:<22}{a:>10.2f}{unit}{b:>10.2f}{unit}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
