"""Hot numeric kernels.

Each kernel has a compiled implementation (``_*_jit``, numba when available)
and a vectorised numpy implementation (``_*_numpy``). The public names bind
to the compiled version under numba and to the numpy one otherwise; see
``_accel`` for the switch. ``benchmarks/bench_kernels.py`` times both.

Ties break towards the lowest index in both paths. ``nearest_prototype``
and ``greedy_mmd`` return identical results on either backend; the
logistic descent agrees to rounding (libm vs numpy transcendental
functions).
"""
import numpy as np

from ._accel import BACKEND, njit

BLOCK = 512


# ---------------------------------------------------------------- nearest prototype
#
# Squared distances use |x|^2 - 2 x.p + |p|^2 with the cross term from a
# blocked BLAS product; distance work is matmul-bound, so both paths keep
# BLAS and the compiled path only fuses the argmin.


@njit
def _nearest_prototype_jit(X, P, xx, pp):
    n = X.shape[0]
    k = P.shape[0]
    out = np.empty(n, dtype=np.int64)
    PT = np.ascontiguousarray(P.T)
    for start in range(0, n, BLOCK):
        stop = min(n, start + BLOCK)
        G = np.dot(X[start:stop], PT)
        for i in range(stop - start):
            best = np.inf
            arg = 0
            for j in range(k):
                v = xx[start + i] - 2.0 * G[i, j] + pp[j]
                if v < best:
                    best = v
                    arg = j
            out[start + i] = arg
    return out


def _nearest_prototype_numpy(X, P, xx, pp):
    out = np.empty(X.shape[0], dtype=np.int64)
    PT = np.ascontiguousarray(P.T)
    for start in range(0, X.shape[0], BLOCK):
        G = np.dot(X[start:start + BLOCK], PT)
        d2 = xx[start:start + BLOCK, None] - 2.0 * G + pp[None, :]
        out[start:start + BLOCK] = np.argmin(d2, axis=1)
    return out


def nearest_prototype(X, P):
    """Index of the Euclidean-nearest row of ``P`` for every row of ``X``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    P = np.ascontiguousarray(P, dtype=np.float64)
    xx = np.einsum("ij,ij->i", X, X)
    pp = np.einsum("ij,ij->i", P, P)
    if BACKEND == "numba":
        return _nearest_prototype_jit(X, P, xx, pp)
    return _nearest_prototype_numpy(X, P, xx, pp)


def sq_distances(X, Y):
    """Pairwise squared Euclidean distances, shape ``(len(X), len(Y))``, clipped at 0."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    xx = np.einsum("ij,ij->i", X, X)
    yy = np.einsum("ij,ij->i", Y, Y)
    d2 = xx[:, None] - 2.0 * (X @ Y.T) + yy[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


# ---------------------------------------------------------------- greedy MMD


@njit
def _greedy_mmd_jit(K, rowsum, m):
    n = K.shape[0]
    chosen = np.empty(m, dtype=np.int64)
    taken = np.zeros(n, dtype=np.bool_)
    cross = np.zeros(n)
    a = 0.0
    b = 0.0
    for t in range(m):
        c1 = 2.0 / (n * (t + 1.0))
        c2 = 1.0 / ((t + 1.0) * (t + 1.0))
        best = -np.inf
        arg = -1
        for i in range(n):
            if taken[i]:
                continue
            gain = c1 * (a + rowsum[i]) - c2 * (b + 2.0 * cross[i] + K[i, i])
            if gain > best:
                best = gain
                arg = i
        chosen[t] = arg
        taken[arg] = True
        a += rowsum[arg]
        b += 2.0 * cross[arg] + K[arg, arg]
        for i in range(n):
            cross[i] += K[i, arg]
    return chosen


def _greedy_mmd_numpy(K, rowsum, m):
    n = K.shape[0]
    chosen = np.empty(m, dtype=np.int64)
    cross = np.zeros(n)
    diag = np.ascontiguousarray(np.diag(K))
    a = 0.0
    b = 0.0
    for t in range(m):
        c1 = 2.0 / (n * (t + 1.0))
        c2 = 1.0 / ((t + 1.0) * (t + 1.0))
        gain = c1 * (a + rowsum) - c2 * (b + 2.0 * cross + diag)
        gain[chosen[:t]] = -np.inf
        arg = int(np.argmax(gain))
        chosen[t] = arg
        a += rowsum[arg]
        b += 2.0 * cross[arg] + K[arg, arg]
        cross += K[:, arg]
    return chosen


def greedy_mmd(K, m):
    """Greedy prototype indices minimising squared MMD under Gram matrix ``K``.

    At step t the candidate ``i`` maximising

        2/(n(t+1)) * sum_{j in S+i, l} K[j, l]  -  1/(t+1)^2 * sum_{j, l in S+i} K[j, l]

    is appended to ``S``. Running sums keep each step at O(n).
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    rowsum = K.sum(axis=1)
    if BACKEND == "numba":
        return _greedy_mmd_jit(K, rowsum, int(m))
    return _greedy_mmd_numpy(K, rowsum, int(m))


# ---------------------------------------------------------------- logistic descent


@njit
def _logistic_gd_jit(A, y01, sw, l2, step, gtol, maxiter):
    n, p = A.shape
    params = np.zeros(p)
    grad = np.zeros(p)
    r = np.empty(n)
    iters = 0
    for it in range(maxiter + 1):
        z = np.dot(A, params)
        for i in range(n):
            r[i] = sw[i] * (0.5 * (1.0 + np.tanh(0.5 * z[i])) - y01[i]) / n
        grad = np.dot(r, A)
        for j in range(p - 1):
            grad[j] += l2 * params[j]
        if np.sqrt(np.dot(grad, grad)) <= gtol or it == maxiter:
            break
        for j in range(p):
            params[j] -= step * grad[j]
        iters += 1
    return params, iters


def _logistic_gd_numpy(A, y01, sw, l2, step, gtol, maxiter):
    n, p = A.shape
    params = np.zeros(p)
    penalty = np.full(p, l2)
    penalty[-1] = 0.0
    iters = 0
    for it in range(maxiter + 1):
        z = A @ params
        r = sw * (0.5 * (1.0 + np.tanh(0.5 * z)) - y01) / n
        grad = r @ A + penalty * params
        if np.sqrt(grad @ grad) <= gtol or it == maxiter:
            break
        params -= step * grad
        iters += 1
    return params, iters


def logistic_gd(A, y01, sw, l2, step, gtol, maxiter):
    """Fixed-step gradient descent on weighted mean log-loss + ``l2/2 |w|^2``.

    ``A`` carries the intercept as its last column (unpenalised). Returns
    ``(params, iterations)``.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    y01 = np.ascontiguousarray(y01, dtype=np.float64)
    sw = np.ascontiguousarray(sw, dtype=np.float64)
    args = (A, y01, sw, float(l2), float(step), float(gtol), int(maxiter))
    if BACKEND == "numba":
        return _logistic_gd_jit(*args)
    return _logistic_gd_numpy(*args)
