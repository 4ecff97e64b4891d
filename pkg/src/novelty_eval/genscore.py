"""Novelty-weighted generalization score and the novelty-bin analyses."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

BIN_NAMES = ("low", "medium", "high")


def generalization_score(novelty, losses) -> float:
    """G = sum(n_i * (1 - L_i)) / sum(n_i)."""
    w = np.asarray(novelty, dtype=np.float64)
    loss = np.asarray(losses, dtype=np.float64)
    if w.shape != loss.shape or w.ndim != 1 or w.size == 0:
        raise ValueError("novelty and losses must be aligned, non-empty vectors")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("novelty weights must be finite and non-negative")
    if np.any(loss < 0) or np.any(loss > 1):
        raise ValueError("losses must lie in [0, 1]")
    total = w.sum()
    if total <= 0:
        raise ValueError("degenerate novelty weights: sum is zero")
    g = float(np.dot(w, 1.0 - loss) / total)
    return min(max(g, 0.0), 1.0)


@dataclass(frozen=True)
class NoveltyBins:
    labels: list
    edges: tuple
    degenerate: bool = False

    def members(self, name: str) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab == name]


def bin_by_novelty(novelty, edges: tuple[float, float] | None = None) -> NoveltyBins:
    """Tertile bins; a value equal to an edge goes to the lower bin.

    ``edges`` overrides the tertiles with manual thresholds.
    """
    v = np.asarray(novelty, dtype=np.float64)
    if v.size < 3:
        raise ValueError("need at least 3 objects to bin")
    if edges is None:
        lo, hi = (float(e) for e in np.quantile(v, [1.0 / 3.0, 2.0 / 3.0]))
    else:
        lo, hi = float(edges[0]), float(edges[1])
        if lo > hi:
            raise ValueError("edges must be non-decreasing")
    idx = (v > lo).astype(int) + (v > hi).astype(int)
    labels = [BIN_NAMES[i] for i in idx]
    return NoveltyBins(labels, (lo, hi), degenerate=np.unique(v).size < 3)


def sample_balanced(bins: NoveltyBins, ids: Sequence[str], per_bin: int = 100, seed: int = 0) -> list[str]:
    """Up to ``per_bin`` ids per bin, drawn without replacement."""
    if per_bin < 1:
        raise ValueError("per_bin must be >= 1")
    if len(ids) != len(bins.labels):
        raise ValueError("ids and bins differ in length")
    rng = np.random.default_rng(seed)
    out = []
    for name in BIN_NAMES:
        members = bins.members(name)
        take = min(per_bin, len(members))
        chosen = sorted(rng.choice(len(members), size=take, replace=False).tolist()) if take else []
        out.extend(ids[members[c]] for c in chosen)
    return out


def loss_novelty_curve(novelty, losses, window_quantiles: int = 10) -> list[tuple[float, float]]:
    """Mean loss over equal-count novelty windows, lowest novelty first.

    Each point is (midpoint of the window's novelty range, mean loss).
    """
    v = np.asarray(novelty, dtype=np.float64)
    loss = np.asarray(losses, dtype=np.float64)
    if v.shape != loss.shape:
        raise ValueError("novelty and losses must be aligned")
    if v.size == 0:
        return []
    order = np.argsort(v, kind="stable")
    windows = np.array_split(order, min(window_quantiles, v.size))
    return [(float((v[w].min() + v[w].max()) / 2.0), float(loss[w].mean())) for w in windows]


@dataclass
class GeneralizationReport:
    g_score: float
    unweighted_complement: float
    accuracy: float
    n_objects: int
    per_bin: dict
    bin_edges: list
    degenerate_bins: bool
    n_false_positives: int = 0
    scorer: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def build_report(
    novelty: Mapping[str, float],
    losses: Mapping[str, float],
    accuracy: float,
    n_false_positives: int = 0,
    edges: tuple[float, float] | None = None,
    scorer: str | None = None,
) -> GeneralizationReport:
    """Assemble G, 1 - mean(L), and per-bin loss stats over objects in both maps."""
    missing = sorted(set(losses) ^ set(novelty))
    if missing:
        raise KeyError(missing[0])
    ids = sorted(losses)
    w = np.array([novelty[i] for i in ids])
    loss = np.array([losses[i] for i in ids])
    bins = bin_by_novelty(w, edges) if len(ids) >= 3 else None
    per_bin = {}
    for name in BIN_NAMES:
        members = bins.members(name) if bins else []
        per_bin[name] = {
            "count": len(members),
            "mean_loss": float(loss[members].mean()) if members else None,
        }
    return GeneralizationReport(
        g_score=generalization_score(w, loss),
        unweighted_complement=float(1.0 - loss.mean()),
        accuracy=float(accuracy),
        n_objects=len(ids),
        per_bin=per_bin,
        bin_edges=list(bins.edges) if bins else [],
        degenerate_bins=bool(bins.degenerate) if bins else True,
        n_false_positives=int(n_false_positives),
        scorer=scorer,
    )
