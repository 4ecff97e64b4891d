"""Novelty scorers fitted on training embeddings.

Every scorer standardises inputs with the training mean/std first (constant
dimensions are dropped), then applies its own rule. KDE reports a density
(higher = more normal); the others report anomaly scores (higher = more novel).
:func:`novelty_scores` maps either orientation onto weights in [0, 1].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels

KINDS = ("kde", "lof", "knn", "mahalanobis", "hbos", "iforest")
DEFAULTS = {
    "kde": {"bandwidth": None},
    "lof": {"k": 20},
    "knn": {"k": 5},
    "mahalanobis": {},
    "hbos": {"n_bins": 10},
    "iforest": {"n_trees": 100, "subsample": 256, "seed": 0},
}
LRD_FLOOR = 1e-12
HBOS_FLOOR = 1e-9


@dataclass
class ScorerModel:
    kind: str
    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray  # indices of retained (non-constant) input dims
    hyper: dict
    state: dict = field(default_factory=dict)

    @property
    def orientation(self) -> str:
        return "density" if self.kind == "kde" else "anomaly"

    def transform(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != self.mean.shape[0]:
            raise ValueError(f"expected {self.mean.shape[0]} columns, got {z.shape[1]}")
        return (z[:, self.keep] - self.mean[self.keep]) / self.std[self.keep]

    def raw_scores(self, z) -> np.ndarray:
        return _SCORE[self.kind](self, self.transform(z))

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, np.ndarray):
                return {"dtype": str(v.dtype), "shape": list(v.shape), "data": v.ravel().tolist()}
            return v

        return {
            "kind": self.kind,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "keep": self.keep.tolist(),
            "hyper": self.hyper,
            "state": {k: enc(v) for k, v in self.state.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScorerModel":
        def dec(v):
            if isinstance(v, dict) and "dtype" in v:
                return np.array(v["data"], dtype=v["dtype"]).reshape(v["shape"])
            return v

        return cls(
            doc["kind"],
            np.array(doc["mean"], dtype=np.float64),
            np.array(doc["std"], dtype=np.float64),
            np.array(doc["keep"], dtype=np.int64),
            dict(doc["hyper"]),
            {k: dec(v) for k, v in doc["state"].items()},
        )


@dataclass(frozen=True)
class NoveltyScores:
    ids: list
    raw: np.ndarray
    novelty: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.novelty.tolist()))


def fit(kind: str, z_train, hyper: dict | None = None) -> ScorerModel:
    if kind not in KINDS:
        raise ValueError(f"unknown scorer {kind!r}; choose from {KINDS}")
    hyper = {**DEFAULTS[kind], **(hyper or {})}
    z = np.asarray(z_train, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("z_train must be a 2-D matrix")
    n = z.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 training points, got {n}")
    if "k" in hyper and not 1 <= hyper["k"] < n:
        raise ValueError(f"k must be < N (k={hyper['k']}, N={n})")
    if not np.all(np.isfinite(z)):
        raise ValueError("z_train contains non-finite values")

    mean = z.mean(axis=0)
    std = z.std(axis=0)
    keep = np.flatnonzero(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
    if keep.size == 0:
        raise ValueError("all training dimensions are constant")
    if keep.size < z.shape[1]:
        dropped = sorted(set(range(z.shape[1])) - set(keep.tolist()))
        warnings.warn(f"dropping zero-variance dims {dropped}", stacklevel=2)
    model = ScorerModel(kind, mean, np.where(std > 0, std, 1.0), keep, hyper)
    _FIT[kind](model, model.transform(z))
    return model


def kde_from_points(points, bandwidth: float | None = None) -> ScorerModel:
    """KDE over points already in standardised coordinates (no rescaling)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, d = pts.shape
    model = ScorerModel("kde", np.zeros(d), np.ones(d), np.arange(d), {"bandwidth": bandwidth})
    _fit_kde(model, pts)
    return model


# --- KDE -----------------------------------------------------------------------

def scott_bandwidth(n: int, d: int) -> float:
    return n ** (-1.0 / (d + 4))


def _fit_kde(m: ScorerModel, x):
    h = m.hyper.get("bandwidth")
    m.state["points"] = x.copy()
    m.state["bandwidth"] = float(h) if h else scott_bandwidth(*x.shape)


def _score_kde(m: ScorerModel, x):
    # log-Jacobian of the standardisation keeps this a density in input units
    return kernels.kde_log_density(x, m.state["points"], m.state["bandwidth"]) - np.log(m.std[m.keep]).sum()


def kde_log_density(model: ScorerModel, z) -> float | np.ndarray:
    if model.kind != "kde":
        raise ValueError("model is not a KDE")
    out = model.raw_scores(z)
    return float(out[0]) if np.ndim(z) == 1 else out


# --- LOF -----------------------------------------------------------------------

def _fit_lof(m: ScorerModel, x):
    k = int(m.hyper["k"])
    dist, idx = kernels.knn(x, x, k, True)
    kdist = dist[:, -1]
    reach = np.maximum(kdist[idx], dist)
    m.state.update(points=x.copy(), kdist=kdist, lrd=1.0 / np.maximum(reach.mean(axis=1), LRD_FLOOR))


def _score_lof(m: ScorerModel, x, k: int | None = None):
    k = int(m.hyper["k"] if k is None else k)
    if k != m.hyper["k"]:
        sub = ScorerModel("lof", m.mean, m.std, m.keep, {**m.hyper, "k": k})
        _fit_lof(sub, m.state["points"])
        m = sub
    dist, idx = kernels.knn(x, m.state["points"], k, False)
    reach = np.maximum(m.state["kdist"][idx], dist)
    lrd = 1.0 / np.maximum(reach.mean(axis=1), LRD_FLOOR)
    return m.state["lrd"][idx].mean(axis=1) / lrd


def lof_factor(model: ScorerModel, z, k: int | None = None):
    if model.kind != "lof":
        raise ValueError("model is not a LOF scorer")
    out = _score_lof(model, model.transform(z), k)
    return float(out[0]) if np.ndim(z) == 1 else out


# --- kNN distance --------------------------------------------------------------

def _fit_knn(m: ScorerModel, x):
    m.state["points"] = x.copy()


def _score_knn(m: ScorerModel, x, k: int | None = None):
    k = int(m.hyper["k"] if k is None else k)
    if not 1 <= k <= m.state["points"].shape[0]:
        raise ValueError(f"k must be in [1, N], got {k}")
    dist, _ = kernels.knn(x, m.state["points"], k, False)
    return dist[:, -1]


def knn_distance(model: ScorerModel, z, k: int | None = None):
    if model.kind != "knn":
        raise ValueError("model is not a kNN scorer")
    out = _score_knn(model, model.transform(z), k)
    return float(out[0]) if np.ndim(z) == 1 else out


# --- Mahalanobis ---------------------------------------------------------------

def _fit_mahalanobis(m: ScorerModel, x):
    d = x.shape[1]
    center = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    cov = cov + (1e-6 * np.trace(cov) / d) * np.eye(d)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is singular even after ridge") from exc
    m.state.update(center=center, chol=chol)


def _score_mahalanobis(m: ScorerModel, x):
    import scipy.linalg

    diff = (x - m.state["center"]).T
    sol = scipy.linalg.solve_triangular(m.state["chol"], diff, lower=True)
    return np.sqrt((sol * sol).sum(axis=0))


def mahalanobis_distance(model: ScorerModel, z):
    if model.kind != "mahalanobis":
        raise ValueError("model is not a Mahalanobis scorer")
    out = _score_mahalanobis(model, model.transform(z))
    return float(out[0]) if np.ndim(z) == 1 else out


# --- HBOS ----------------------------------------------------------------------

def _fit_hbos(m: ScorerModel, x):
    nb = int(m.hyper["n_bins"])
    if nb < 2:
        raise ValueError("n_bins must be >= 2")
    lo, hi = x.min(axis=0), x.max(axis=0)
    heights = np.empty((x.shape[1], nb))
    for j in range(x.shape[1]):
        counts, _ = np.histogram(x[:, j], bins=nb, range=(lo[j], hi[j]))
        heights[j] = np.maximum(counts / counts.max(), HBOS_FLOOR)
    m.state.update(lo=lo, hi=hi, heights=heights)


def _score_hbos(m: ScorerModel, x):
    lo, hi, heights = m.state["lo"], m.state["hi"], m.state["heights"]
    nb = heights.shape[1]
    width = (hi - lo) / nb
    b = np.floor((x - lo) / width).astype(np.int64)
    b = np.where(x == hi, nb - 1, b)
    inside = (x >= lo) & (x <= hi)
    h = np.where(inside, heights[np.arange(x.shape[1]), np.clip(b, 0, nb - 1)], HBOS_FLOOR)
    return -np.log(h).sum(axis=1)


def hbos_score(model: ScorerModel, z):
    if model.kind != "hbos":
        raise ValueError("model is not an HBOS scorer")
    out = _score_hbos(model, model.transform(z))
    return float(out[0]) if np.ndim(z) == 1 else out


# --- Isolation forest ------------------------------------------------------------

def harmonic(n: int) -> float:
    return math.fsum(1.0 / i for i in range(1, n + 1))


def avg_path_length(n: int) -> float:
    """Average unsuccessful-search path length in a BST of n points."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


def _grow_tree(x, rng, limit, nodes):
    """Append one isolation tree to ``nodes`` (lists of columns); return root index."""
    feature, threshold, left, right, value = nodes
    stack = [(np.arange(x.shape[0]), 0, None, None)]
    root = len(feature)
    while stack:
        rows, depth, parent, side = stack.pop()
        me = len(feature)
        if parent is not None:
            (left if side == 0 else right)[parent] = me
        sub = x[rows]
        spread = np.flatnonzero(sub.max(axis=0) > sub.min(axis=0)) if rows.size > 1 else np.array([], dtype=np.int64)
        if depth >= limit or spread.size == 0:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(depth + avg_path_length(rows.size))
            continue
        f = int(spread[rng.integers(spread.size)])
        lo, hi = sub[:, f].min(), sub[:, f].max()
        t = float(rng.uniform(lo, hi))
        if t <= lo:
            t = float(np.nextafter(lo, hi))
        feature.append(f)
        threshold.append(t)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        go_left = sub[:, f] < t
        # right pushed first so the left subtree is laid out first
        stack.append((rows[~go_left], depth + 1, me, 1))
        stack.append((rows[go_left], depth + 1, me, 0))
    return root


def _fit_iforest(m: ScorerModel, x):
    n = x.shape[0]
    psi = min(int(m.hyper["subsample"]), n)
    limit = int(math.ceil(math.log2(max(psi, 2))))
    rng = np.random.default_rng(int(m.hyper["seed"]))
    nodes = ([], [], [], [], [])
    roots = []
    for _ in range(int(m.hyper["n_trees"])):
        rows = rng.choice(n, size=psi, replace=False)
        roots.append(_grow_tree(x[rows], rng, limit, nodes))
    m.state.update(
        feature=np.array(nodes[0], dtype=np.int64),
        threshold=np.array(nodes[1], dtype=np.float64),
        left=np.array(nodes[2], dtype=np.int64),
        right=np.array(nodes[3], dtype=np.int64),
        leaf_value=np.array(nodes[4], dtype=np.float64),
        roots=np.array(roots, dtype=np.int64),
        c_psi=avg_path_length(psi),
    )


def iforest_path_length(model: ScorerModel, z) -> np.ndarray:
    s = model.state
    x = np.ascontiguousarray(model.transform(z))
    return kernels.iforest_path(x, s["feature"], s["threshold"], s["left"], s["right"], s["leaf_value"], s["roots"])


def _score_iforest(m: ScorerModel, x):
    s = m.state
    e = kernels.iforest_path(np.ascontiguousarray(x), s["feature"], s["threshold"], s["left"], s["right"],
                             s["leaf_value"], s["roots"])
    return 2.0 ** (-e / s["c_psi"])


def iforest_score(model: ScorerModel, z):
    if model.kind != "iforest":
        raise ValueError("model is not an isolation forest")
    out = _score_iforest(model, model.transform(z))
    return float(out[0]) if np.ndim(z) == 1 else out


_FIT = {"kde": _fit_kde, "lof": _fit_lof, "knn": _fit_knn, "mahalanobis": _fit_mahalanobis,
        "hbos": _fit_hbos, "iforest": _fit_iforest}
_SCORE = {"kde": _score_kde, "lof": _score_lof, "knn": _score_knn, "mahalanobis": _score_mahalanobis,
          "hbos": _score_hbos, "iforest": _score_iforest}


# --- normalisation -------------------------------------------------------------

def normalize(raw, orientation: str) -> np.ndarray:
    """Min-max map raw scores onto [0, 1], 1 = most novel; all ties give 0.5."""
    raw = np.asarray(raw, dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        raise ValueError(f"non-finite raw score at row {int(bad[0])}")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.full(raw.shape, 0.5)
    if orientation == "density":
        out = (hi - raw) / (hi - lo)
    elif orientation == "anomaly":
        out = (raw - lo) / (hi - lo)
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    return np.clip(out, 0.0, 1.0)


def novelty_scores(model: ScorerModel, z_test, ids=None) -> NoveltyScores:
    z = np.atleast_2d(np.asarray(z_test, dtype=np.float64))
    if z.shape[0] == 0:
        raise ValueError("z_test is empty")
    ids = list(ids) if ids is not None else [str(i) for i in range(z.shape[0])]
    if len(ids) != z.shape[0]:
        raise ValueError("ids and z_test rows differ in length")
    raw = model.raw_scores(z)
    return NoveltyScores(ids, raw, normalize(raw, model.orientation))
