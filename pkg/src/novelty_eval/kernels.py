"""Hot numeric kernels, each with a numba body and a pure-numpy twin.

The public names dispatch on :data:`novelty_eval._accel.USE_NUMBA`. Both twins
are importable (``*_numpy`` / ``*_numba``) so tests and the benchmark script can
compare them directly. Row loops only fan out across independent query rows, so
results do not depend on the thread count.
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit

if HAVE_NUMBA:
    from numba import prange
else:  # pragma: no cover - exercised only without numba installed
    prange = range

_LOG_2PI = math.log(2.0 * math.pi)
_CHUNK = 256


# --- pairwise squared distances ------------------------------------------

def sq_distances_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[0]))
    for s in range(0, a.shape[0], _CHUNK):
        diff = a[s : s + _CHUNK, None, :] - b[None, :, :]
        out[s : s + _CHUNK] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


@njit(parallel=True)
def sq_distances_numba(a, b):
    n, m = a.shape[0], b.shape[0]
    d = a.shape[1]
    out = np.empty((n, m))
    for i in prange(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                t = a[i, k] - b[j, k]
                acc += t * t
            out[i, j] = acc
    return out


# --- Gaussian KDE log density ---------------------------------------------

def kde_log_density_numpy(queries: np.ndarray, points: np.ndarray, bandwidth: float) -> np.ndarray:
    n, d = points.shape
    const = -math.log(n) - 0.5 * d * (_LOG_2PI + 2.0 * math.log(bandwidth))
    out = np.empty(queries.shape[0])
    for s in range(0, queries.shape[0], _CHUNK):
        e = -0.5 * sq_distances_numpy(queries[s : s + _CHUNK], points) / (bandwidth * bandwidth)
        top = e.max(axis=1)
        out[s : s + _CHUNK] = top + np.log(np.exp(e - top[:, None]).sum(axis=1)) + const
    return out


@njit(parallel=True)
def kde_log_density_numba(queries, points, bandwidth):
    n, d = points.shape
    const = -math.log(n) - 0.5 * d * (_LOG_2PI + 2.0 * math.log(bandwidth))
    inv = 1.0 / (bandwidth * bandwidth)
    q = queries.shape[0]
    out = np.empty(q)
    for i in prange(q):
        e = np.empty(n)
        top = -np.inf
        for j in range(n):
            acc = 0.0
            for k in range(d):
                t = queries[i, k] - points[j, k]
                acc += t * t
            e[j] = -0.5 * acc * inv
            if e[j] > top:
                top = e[j]
        s = 0.0
        for j in range(n):
            s += math.exp(e[j] - top)
        out[i] = top + math.log(s) + const
    return out


# --- k nearest neighbours --------------------------------------------------

def knn_numpy(queries: np.ndarray, points: np.ndarray, k: int, skip_self: bool = False):
    """Sorted distances/indices of the ``k`` nearest ``points`` per query.

    Ties are broken by the lower point index. With ``skip_self`` the query
    ``i`` must be point ``i`` and is excluded from its own neighbourhood.
    """
    nq = queries.shape[0]
    dist = np.empty((nq, k))
    idx = np.empty((nq, k), dtype=np.int64)
    for s in range(0, nq, _CHUNK):
        sq = sq_distances_numpy(queries[s : s + _CHUNK], points)
        if skip_self:
            rows = np.arange(sq.shape[0])
            sq[rows, rows + s] = np.inf
        order = np.argsort(sq, axis=1, kind="stable")[:, :k]
        idx[s : s + _CHUNK] = order
        dist[s : s + _CHUNK] = np.sqrt(np.take_along_axis(sq, order, axis=1))
    return dist, idx


@njit(parallel=True)
def knn_numba(queries, points, k, skip_self=False):
    nq, n = queries.shape[0], points.shape[0]
    d = points.shape[1]
    dist = np.empty((nq, k))
    idx = np.empty((nq, k), dtype=np.int64)
    for i in prange(nq):
        row = np.empty(n)
        for j in range(n):
            acc = 0.0
            for c in range(d):
                t = queries[i, c] - points[j, c]
                acc += t * t
            row[j] = acc
        if skip_self:
            row[i] = np.inf
        order = np.argsort(row, kind="mergesort")
        for c in range(k):
            idx[i, c] = order[c]
            dist[i, c] = math.sqrt(row[order[c]])
    return dist, idx


# --- isolation forest path lengths -----------------------------------------

def iforest_path_numpy(x, feature, threshold, left, right, leaf_value, roots):
    """Mean adjusted path length over all trees.

    Trees live in flat node arrays; ``feature < 0`` marks a leaf whose
    ``leaf_value`` already holds depth plus the unbuilt-subtree correction.
    """
    total = np.zeros(x.shape[0])
    rows = np.arange(x.shape[0])
    for root in roots:
        node = np.full(x.shape[0], root, dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            cur = node[active]
            go_left = x[rows[active], feature[cur]] < threshold[cur]
            node[active] = np.where(go_left, left[cur], right[cur])
            active = feature[node] >= 0
        total += leaf_value[node]
    return total / len(roots)


@njit(parallel=True)
def iforest_path_numba(x, feature, threshold, left, right, leaf_value, roots):
    n = x.shape[0]
    out = np.empty(n)
    for i in prange(n):
        acc = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if x[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += leaf_value[node]
        out[i] = acc / roots.shape[0]
    return out


if USE_NUMBA:
    sq_distances = sq_distances_numba
    kde_log_density = kde_log_density_numba
    knn = knn_numba
    iforest_path = iforest_path_numba
else:
    sq_distances = sq_distances_numpy
    kde_log_density = kde_log_density_numpy
    knn = knn_numpy
    iforest_path = iforest_path_numpy
