"""Match detector output to ground truth and turn it into per-object losses.

Boxes are normalised ``[x1, y1, x2, y2]``. Matching is greedy in descending
confidence; a GT object left unmatched counts as detected with confidence 0
and gets the maximal loss of 1. False positives carry no loss.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {self.as_list()}")

    @classmethod
    def from_list(cls, v: Sequence[float]) -> "BoundingBox":
        if len(v) != 4:
            raise ValueError(f"box needs 4 coordinates, got {len(v)}")
        return cls(*(float(c) for c in v))

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class Annotation:
    image_id: str
    object_id: str
    box: BoundingBox


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass
class MatchResult:
    tp: list = field(default_factory=list)  # (object_id, detection index, iou)
    fp: list = field(default_factory=list)  # detection indices
    fn: list = field(default_factory=list)  # object ids


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def match_detections(
    annotations: Sequence[Annotation],
    detections: Sequence[Detection],
    threshold: float = 0.5,
) -> MatchResult:
    """Greedy matching for a single image.

    Detection indices refer to positions in ``detections``. Equal confidences
    keep input order; equal IoUs go to the lower object id.
    """
    images = {a.image_id for a in annotations} | {d.image_id for d in detections}
    if len(images) > 1:
        raise ValueError(f"match_detections expects one image, got {sorted(images)}")
    ids = [a.object_id for a in annotations]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValueError(f"duplicate object_id {dup!r}")

    gts = sorted(annotations, key=lambda a: a.object_id)
    taken = [False] * len(gts)
    res = MatchResult()
    order = sorted(range(len(detections)), key=lambda i: -detections[i].confidence)
    for di in order:
        best, best_iou = -1, -1.0
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            v = iou(gt.box, detections[di].box)
            if v > best_iou:
                best, best_iou = gi, v
        if best >= 0 and best_iou >= threshold:
            taken[best] = True
            res.tp.append((gts[best].object_id, di, best_iou))
        else:
            res.fp.append(di)
    res.fn = [gt.object_id for gi, gt in enumerate(gts) if not taken[gi]]
    return res


def group_by_image(items: Iterable) -> dict[str, list]:
    out = defaultdict(list)
    for it in items:
        out[it.image_id].append(it)
    return dict(out)


def match_dataset(
    annotations: Sequence[Annotation],
    detections: Sequence[Detection],
    threshold: float = 0.5,
) -> dict[str, tuple[MatchResult, list[Annotation], list[Detection]]]:
    """Per-image matching, keyed and ordered by image id."""
    gt = group_by_image(annotations)
    det = group_by_image(detections)
    out = {}
    for img in sorted(set(gt) | set(det)):
        a, d = gt.get(img, []), det.get(img, [])
        out[img] = (match_detections(a, d, threshold), a, d)
    return out


def detection_loss(
    match: MatchResult,
    annotations: Sequence[Annotation],
    detections: Sequence[Detection],
) -> dict[str, float]:
    """Per-object MAE of the 4 box coordinates; 1 for missed objects."""
    gt = {a.object_id: a.box for a in annotations}
    losses = {}
    for oid, di, _ in match.tp:
        g, p = gt[oid].as_list(), detections[di].box.as_list()
        losses[oid] = sum(abs(x - y) for x, y in zip(g, p)) / 4.0
    for oid in match.fn:
        losses[oid] = 1.0
    return losses


def dataset_losses(matches: Mapping[str, tuple]) -> dict[str, float]:
    out = {}
    for m, a, d in matches.values():
        out.update(detection_loss(m, a, d))
    return out


def accuracy(matches: Iterable[MatchResult]) -> float:
    """Fraction of GT objects detected at the IoU threshold."""
    tp = fn = 0
    for m in matches:
        tp += len(m.tp)
        fn += len(m.fn)
    if tp + fn == 0:
        raise ValueError("accuracy needs at least one ground-truth object")
    return tp / (tp + fn)


# --- JSONL records ---------------------------------------------------------------

def annotations_to_records(annotations: Sequence[Annotation]) -> list[dict]:
    return [
        {"image_id": img, "objects": [{"object_id": a.object_id, "box": a.box.as_list()} for a in items]}
        for img, items in sorted(group_by_image(annotations).items())
    ]


def annotations_from_records(records: Iterable[dict]) -> list[Annotation]:
    return [
        Annotation(str(r["image_id"]), str(o["object_id"]), BoundingBox.from_list(o["box"]))
        for r in records
        for o in r["objects"]
    ]


def detections_to_records(detections: Sequence[Detection]) -> list[dict]:
    return [
        {"image_id": img, "detections": [{"box": d.box.as_list(), "confidence": d.confidence} for d in items]}
        for img, items in sorted(group_by_image(detections).items())
    ]


def detections_from_records(records: Iterable[dict]) -> list[Detection]:
    return [
        Detection(str(r["image_id"]), BoundingBox.from_list(d["box"]), float(d["confidence"]))
        for r in records
        for d in r["detections"]
    ]


# --- stub detector ---------------------------------------------------------------

@dataclass(frozen=True)
class StubDetector:
    """Stand-in for a real CNN: jitters GT boxes and drops some of them.

    ``planted_noise`` adds extra jitter to objects whose ``planted_key`` factor
    is at least ``planted_threshold``, which plants a known novelty/loss link.
    """

    noise: float = 0.01
    drop: float = 0.0
    planted_noise: float = 0.0
    planted_key: str = "bulb_radius"
    planted_threshold: float = 0.35
    seed: int = 0

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "StubDetector":
        """Parse ``stub:noise=0.02,drop=0.05,planted_noise=0.05``."""
        kind, _, rest = text.partition(":")
        if kind != "stub":
            raise ValueError(f"unknown detector {kind!r}; only 'stub' is available")
        kw = {"seed": seed}
        for part in filter(None, rest.split(",")):
            key, _, val = part.partition("=")
            key = key.strip()
            if key not in cls.__dataclass_fields__ or key == "seed":
                raise ValueError(f"unknown stub option {key!r}")
            kw[key] = val if key == "planted_key" else float(val)
        return cls(**kw)

    def __call__(self, annotations: Sequence[Annotation], factors: Mapping[str, Mapping] | None = None):
        out = []
        for idx, a in enumerate(sorted(annotations, key=lambda a: (a.image_id, a.object_id))):
            rng = np.random.default_rng([self.seed, idx])
            sigma = self.noise
            if factors is not None and self.planted_noise > 0:
                if float(factors[a.object_id][self.planted_key]) >= self.planted_threshold:
                    sigma = self.noise + self.planted_noise
            jitter = rng.normal(0.0, sigma, size=4) if sigma > 0 else np.zeros(4)
            dropped = rng.random() < self.drop
            conf = float(np.clip(rng.uniform(0.5, 1.0), 0.0, 1.0))
            if dropped:
                continue
            b = np.clip(np.array(a.box.as_list()) + jitter, 0.0, 1.0)
            x1, x2 = sorted(b[[0, 2]])
            y1, y2 = sorted(b[[1, 3]])
            if x2 - x1 < 1e-6 or y2 - y1 < 1e-6:
                continue
            out.append(Detection(a.image_id, BoundingBox(float(x1), float(y1), float(x2), float(y2)), conf))
        return out
