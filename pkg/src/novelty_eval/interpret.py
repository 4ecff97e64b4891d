"""Which latent dimensions separate high- from low-novelty objects.

Dimensions are ranked by plug-in mutual information between an
equal-frequency discretisation of each column and the binary high/low label;
the top ones are exported as decoded traversal strips and as a
parallel-coordinates table.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import formats, vae
from .genscore import NoveltyBins


@dataclass(frozen=True)
class MiRanking:
    mi: np.ndarray  # per dimension, nats
    order: np.ndarray  # dimension indices, most informative first
    top_k: int

    @property
    def top(self) -> list[int]:
        return self.order[: self.top_k].tolist()


def quantile_bins(column, n_bins: int) -> np.ndarray:
    """Equal-frequency bin index per value.

    Edges are order statistics, so the assignment only depends on the ranks of
    the values and ties always share a bin.
    """
    x = np.asarray(column, dtype=np.float64)
    ranks = (np.arange(1, n_bins) * (x.size - 1)) // n_bins
    edges = np.sort(x)[ranks]
    return np.searchsorted(edges, x, side="left")


def mutual_information(column, labels, n_bins: int = 10) -> float:
    x = np.asarray(column, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    if x.shape != y.shape:
        raise ValueError("column and labels must be aligned")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("mutual_information needs both label classes")
    if not np.all(np.isin(classes, (0, 1))):
        raise ValueError("labels must be binary 0/1")
    if x.size < 2 * n_bins:
        raise ValueError(f"need at least {2 * n_bins} samples for {n_bins} bins")
    b = quantile_bins(x, n_bins)
    joint = np.zeros((n_bins, 2))
    np.add.at(joint, (b, y), 1.0)
    p = joint / x.size
    pb = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(max((p[nz] * np.log(p[nz] / (pb @ py)[nz])).sum(), 0.0))


def select_informative_dims(z, bins: NoveltyBins, top_k: int, n_bins: int = 10) -> MiRanking:
    """Rank dims by MI against high (1) vs low (0) novelty; medium rows are ignored."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != len(bins.labels):
        raise ValueError("z rows and bin labels differ in length")
    high, low = bins.members("high"), bins.members("low")
    if not high or not low:
        raise ValueError("both the high and the low novelty bin must be non-empty")
    rows = np.array(low + high)
    y = np.concatenate([np.zeros(len(low), dtype=np.int64), np.ones(len(high), dtype=np.int64)])
    mi = np.array([mutual_information(z[rows, j], y, n_bins) for j in range(z.shape[1])])
    order = np.argsort(-mi, kind="stable")
    return MiRanking(mi, order, max(0, min(top_k, z.shape[1])))


def strip(images: Sequence, gap: int = 1) -> np.ndarray:
    """Tile equally sized images left to right with a black gap."""
    h, w, _ = images[0].pixels.shape
    out = np.zeros((h, len(images) * (w + gap) - gap, 3))
    for i, im in enumerate(images):
        out[:, i * (w + gap) : i * (w + gap) + w] = im.pixels
    return out


def export_traversal_grid(params: vae.VaeParams, ranking: MiRanking, z_train, out_dir,
                          n_dims: int = 3, steps: int = 9, range_sigmas: float = 2.0) -> dict:
    """Write one PPM strip per top dimension plus ``traversals.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    z = np.asarray(z_train, dtype=np.float64)
    base = z.mean(axis=0)
    spread = z.std(axis=0)
    entries = []
    for rank, dim in enumerate(ranking.order[:n_dims].tolist()):
        lo = float(base[dim] - range_sigmas * spread[dim])
        hi = float(base[dim] + range_sigmas * spread[dim])
        images = vae.traverse(params, base, dim, lo, hi, steps)
        name = f"traversal_rank{rank}_z{dim}.ppm"
        formats.write_ppm(out / name, strip(images))
        entries.append({
            "rank": rank,
            "dim": dim,
            "mi": float(ranking.mi[dim]),
            "values": np.linspace(lo, hi, steps).tolist(),
            "file": name,
        })
    manifest = {"base": "train_mean", "steps": steps, "range_sigmas": range_sigmas, "dims": entries}
    formats.write_json(out / "traversals.json", manifest)
    return manifest


def export_parallel_coordinates(path, ids: Sequence[str], z, novelty, ranking: MiRanking, n_dims: int) -> None:
    """CSV: id, novelty, then the top ``n_dims`` latent columns in rank order."""
    z = np.asarray(z, dtype=np.float64)
    dims = ranking.order[:n_dims].tolist()
    header = ["id", "novelty"] + [f"z{d}" for d in dims]
    rows = ([i, float(n)] + [float(z[r, d]) for d in dims] for r, (i, n) in enumerate(zip(ids, novelty)))
    formats.write_rows(path, header, rows)


def write_ranking(path, ranking: MiRanking) -> None:
    formats.write_rows(path, ["rank", "dim", "mi"],
                       ([r, int(d), float(ranking.mi[d])] for r, d in enumerate(ranking.order)))
