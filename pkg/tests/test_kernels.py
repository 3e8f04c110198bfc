"""The compiled and numpy kernels must agree; both are exercised regardless of INTERPCERT_NO_NUMBA."""
import os
import subprocess
import sys

import numpy as np
import pytest

from interpcert import _accel, kernels
from interpcert.procedures import rbf_gram
from interpcert.rng import make_rng

def test_backend_flag():
    assert _accel.BACKEND == ("numba" if _accel.HAVE_NUMBA else "numpy")
    code = "from interpcert import _accel; print(_accel.BACKEND)"
    env = {**os.environ, "INTERPCERT_NO_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_nearest_prototype_agree(mnist):
    rng = make_rng(0, "kern")
    X = mnist.features[:1500]
    P = mnist.features[rng.permutation(5000)[:200]]
    xx = np.einsum("ij,ij->i", X, X)
    pp = np.einsum("ij,ij->i", P, P)
    a = kernels._nearest_prototype_jit(X, np.ascontiguousarray(P), xx, pp)
    b = kernels._nearest_prototype_numpy(X, np.ascontiguousarray(P), xx, pp)
    np.testing.assert_array_equal(a, b)


def test_nearest_prototype_ties_lowest_index():
    X = np.zeros((3, 2))
    P = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    assert kernels.nearest_prototype(X, P).tolist() == [0, 0, 0]


def test_nearest_prototype_brute_force():
    rng = make_rng(1, "kern")
    X = rng.normal(size=(700, 5))
    P = rng.normal(size=(9, 5))
    d = ((X[:, None, :] - P[None, :, :]) ** 2).sum(-1)
    np.testing.assert_array_equal(kernels.nearest_prototype(X, P), d.argmin(1))


@pytest.mark.parametrize("n,m", [(12, 12), (300, 40)])
def test_greedy_agree(n, m):
    X = make_rng(n, "kern").normal(size=(n, 4))
    K = rbf_gram(X, 2.0)
    rowsum = K.sum(axis=1)
    np.testing.assert_array_equal(kernels._greedy_mmd_jit(K, rowsum, m), kernels._greedy_mmd_numpy(K, rowsum, m))


def test_logistic_agree():
    rng = make_rng(2, "kern")
    A = np.hstack([rng.normal(size=(200, 3)), np.ones((200, 1))])
    y = (A[:, 0] + rng.normal(size=200) > 0).astype(float)
    sw = np.ones(200)
    args = (A, y, sw, 1e-4, 1.0, 1e-6, 10000)
    pa, ia = kernels._logistic_gd_jit(*args)
    pb, ib = kernels._logistic_gd_numpy(*args)
    np.testing.assert_allclose(pa, pb, rtol=1e-8, atol=1e-10)
    assert abs(ia - ib) <= 2


def test_sq_distances_nonnegative():
    X = make_rng(3, "kern").normal(size=(50, 3)) * 1e4
    d2 = kernels.sq_distances(X, X)
    assert d2.min() >= 0.0


def test_benchmark_runs(capsys):
    import importlib.util
    from pathlib import Path
    path = Path(__file__).parent.parent / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    bench.main(["--repeat", "1"])
    out = capsys.readouterr().out
    assert "greedy_mmd" in out and "False" not in out
