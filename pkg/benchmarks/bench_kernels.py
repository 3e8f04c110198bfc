"""Time the compiled and numpy implementation of each kernel on MNIST-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

The compiled column is blank when numba is missing or INTERPCERT_NO_NUMBA is set.
"""
import argparse
import time
from pathlib import Path

import numpy as np

from interpcert import _accel, kernels
from interpcert.data import load_idx
from interpcert.procedures import median_heuristic, rbf_gram

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    ds = load_idx(DATA / "mnist5k-images-idx3-ubyte.gz", DATA / "mnist5k-labels-idx1-ubyte.gz")
    X = np.ascontiguousarray(ds.features[:1500])
    P = np.ascontiguousarray(ds.features[np.random.default_rng(0).permutation(5000)[:200]])
    T = np.ascontiguousarray(ds.features[1500:])
    tt, pp = np.einsum("ij,ij->i", T, T), np.einsum("ij,ij->i", P, P)
    yield ("nearest_prototype 3500x200", (T, P, tt, pp),
           kernels._nearest_prototype_jit, kernels._nearest_prototype_numpy)

    K = rbf_gram(X, median_heuristic(X))
    yield ("greedy_mmd n=1500 m=200", (K, K.sum(axis=1), 200),
           kernels._greedy_mmd_jit, kernels._greedy_mmd_numpy)

    y = (ds.targets[:1500] >= 5).astype(float)
    A = np.hstack([X[:, :50], np.ones((1500, 1))])
    L = 0.25 * np.linalg.eigvalsh(A.T @ A / 1500)[-1] + 1e-4
    yield ("logistic_gd 1500x51", (A, y, np.ones(1500), 1e-4, 1 / L, 1e-6, 2000),
           kernels._logistic_gd_jit, kernels._logistic_gd_numpy)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    compiled = _accel.BACKEND == "numba"
    print(f"backend: {_accel.BACKEND}")
    print(f"{'kernel':28} {'numba s':>10} {'numpy s':>10} {'speedup':>8}  same")
    for name, inputs, jit_fn, np_fn in cases():
        t_np, out_np = best_of(lambda: np_fn(*inputs), args.repeat)
        if compiled:
            jit_fn(*inputs)  # compile outside the timed region
            t_jit, out_jit = best_of(lambda: jit_fn(*inputs), args.repeat)
            a = out_jit[0] if isinstance(out_jit, tuple) else out_jit
            b = out_np[0] if isinstance(out_np, tuple) else out_np
            same = np.allclose(a, b, rtol=1e-8, atol=1e-10)
            print(f"{name:28} {t_jit:10.4f} {t_np:10.4f} {t_np / t_jit:8.2f}  {same}")
        else:
            print(f"{name:28} {'':>10} {t_np:10.4f} {'':>8}")


if __name__ == "__main__":
    main()
