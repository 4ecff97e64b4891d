"""Contamination study: how well each scorer flags a held-out colour class.

One class is removed from training and injected into the test split at a fixed
fraction; each scorer is fitted on the cleaned training embeddings and rated by
ROC-AUC against the known labels, averaged over seeded repeats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from . import scorers


@dataclass(frozen=True)
class ContaminationSpec:
    contamination_class: str = "green"
    fractions: tuple = (0.10,)
    repeats: int = 3
    scorers: tuple = ("kde", "lof")
    seed: int = 0
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        for f in self.fractions:
            if not 0.0 < f <= 1.0:
                raise ValueError(f"fraction {f} outside (0, 1]")
        for s in self.scorers:
            if s not in scorers.KINDS:
                raise ValueError(f"unknown scorer {s!r}")


@dataclass(frozen=True)
class Split:
    train_idx: np.ndarray
    test_idx: np.ndarray
    labels: np.ndarray  # 1 = contamination class (novel)


def engineer_contamination(train_labels: Sequence[str], test_labels: Sequence[str], cls: str,
                           fraction: float, seed: int, test_size: int | None = None) -> Split:
    """Drop ``cls`` from train; build a test split with ceil(fraction * size) of it.

    Without ``test_size`` the split is the largest one the available samples
    allow. Indices refer to the input sequences.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside (0, 1]")
    tr = np.asarray(train_labels)
    te = np.asarray(test_labels)
    if not np.any(tr == cls) or not np.any(te == cls):
        raise ValueError(f"both splits must contain class {cls!r}")
    if np.all(tr == cls) or np.all(te == cls):
        raise ValueError("both splits need at least one other class")
    pos_pool = np.flatnonzero(te == cls)
    neg_pool = np.flatnonzero(te != cls)
    if test_size is None:
        test_size = 0
        n = 1
        while math.ceil(fraction * n) <= pos_pool.size and n - math.ceil(fraction * n) <= neg_pool.size:
            test_size = n
            n += 1
    n_pos = math.ceil(fraction * test_size)
    n_neg = test_size - n_pos
    if test_size < 1 or n_pos > pos_pool.size or n_neg > neg_pool.size:
        raise ValueError(f"not enough samples for test size {test_size} at fraction {fraction}")
    rng = np.random.default_rng(seed)
    pos = np.sort(rng.choice(pos_pool, size=n_pos, replace=False))
    neg = np.sort(rng.choice(neg_pool, size=n_neg, replace=False))
    test_idx = np.concatenate([neg, pos])
    labels = np.concatenate([np.zeros(n_neg, dtype=np.int64), np.ones(n_pos, dtype=np.int64)])
    return Split(np.flatnonzero(tr != cls), test_idx, labels)


def roc_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via the Mann-Whitney U statistic."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    ranks = rankdata(s)  # average ranks absorb ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class BenchmarkRow:
    scorer: str
    contamination_class: str
    fraction: float
    aucs: list

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def std_auc(self) -> float:
        return float(np.std(self.aucs, ddof=1)) if len(self.aucs) > 1 else 0.0


@dataclass
class BenchmarkTable:
    rows: list

    def csv_rows(self) -> list[list]:
        return [[r.scorer, r.contamination_class, r.fraction, r.mean_auc, r.std_auc, len(r.aucs)] for r in self.rows]

    header = ["scorer", "class", "fraction", "mean_auc", "std_auc", "repeats"]

    def pretty(self) -> str:
        lines = [f"{'scorer':<12} {'class':<8} {'fraction':>8} {'AUC':>16}"]
        for r in self.rows:
            lines.append(f"{r.scorer:<12} {r.contamination_class:<8} {r.fraction:>8.3f} "
                         f"{r.mean_auc:>8.3f} ± {r.std_auc:.3f}")
        return "\n".join(lines)


def run_contamination_benchmark(
    train_labels: Sequence[str],
    test_labels: Sequence[str],
    embed: Callable[[str, np.ndarray], np.ndarray],
    spec: ContaminationSpec,
    test_size: int | None = None,
) -> BenchmarkTable:
    """Run every (scorer, fraction) over ``spec.repeats`` seeded splits.

    ``embed(split, indices)`` returns latent rows for ``split`` in
    {"train", "test"}; the caller decides whether that means running an
    encoder or slicing precomputed embeddings.
    """
    rows = {(s, f): BenchmarkRow(s, spec.contamination_class, f, []) for f in spec.fractions for s in spec.scorers}
    for f in spec.fractions:
        for rep in range(spec.repeats):
            split = engineer_contamination(train_labels, test_labels, spec.contamination_class, f,
                                           spec.seed + rep, test_size)
            z_tr = embed("train", split.train_idx)
            z_te = embed("test", split.test_idx)
            for s in spec.scorers:
                try:
                    model = scorers.fit(s, z_tr, spec.hyper.get(s))
                    nov = scorers.novelty_scores(model, z_te)
                    rows[(s, f)].aucs.append(roc_auc(nov.novelty, split.labels))
                except Exception as exc:
                    raise RuntimeError(f"repeat {rep}, scorer {s}, fraction {f}: {exc}") from exc
    return BenchmarkTable([rows[(s, f)] for f in spec.fractions for s in spec.scorers])
