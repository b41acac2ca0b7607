"""Compiled vs. numpy kernels, per call and for one end-to-end unlearning run.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gfoes.kernels import _fallback

try:
    from gfoes.kernels import _ckernels
except ImportError:
    _ckernels = None

E2E = """
import time
from gfoes.config import ExperimentConfig
from gfoes.experiment import prepare, run_gfoes
from gfoes import kernels
t = time.perf_counter()
run_gfoes(prepare(ExperimentConfig()))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def cases(rng):
    for n, k in [(32, 5), (256, 10), (4096, 10)]:
        x = rng.standard_normal((n, k))
        y = rng.integers(0, k, n)
        yield f"softmax_rows {n}x{k}", "softmax_rows", (x,)
        yield f"xent_rows {n}x{k}", "xent_rows", (x, y)
    for n in (64, 4160, 262144):
        p, g = rng.standard_normal(n), rng.standard_normal(n)
        yield f"sq_norm {n}", "sq_norm", (g,)
        yield f"sgd_update {n}", "sgd_update", (p, g, 0.01, 1e-4, 0.5)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for label, name, call_args in cases(rng):
        py = timeit.timeit(lambda: getattr(_fallback, name)(*call_args), number=args.repeat) / args.repeat
        if _ckernels is None:
            print(f"{label:28s} {py * 1e6:10.2f} {'n/a':>10s}")
            continue
        cy = timeit.timeit(lambda: getattr(_ckernels, name)(*call_args), number=args.repeat) / args.repeat
        print(f"{label:28s} {py * 1e6:10.2f} {cy * 1e6:10.2f} {py / cy:8.2f}")
    print("\nend-to-end GFOES run on the default blob task (seconds):")
    for flag in ("1", "0"):
        env = dict(os.environ, GFOES_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        print("  " + out.stdout.strip())


if __name__ == "__main__":
    main()
