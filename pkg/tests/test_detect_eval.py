import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from novelty_eval.detect_eval import (Annotation, BoundingBox, Detection, StubDetector, accuracy, detection_loss,
                                      iou, match_dataset, match_detections)

B = BoundingBox


@st.composite
def boxes(draw):
    x1, x2 = sorted(draw(st.lists(st.floats(0, 1), min_size=2, max_size=2, unique=True)))
    y1, y2 = sorted(draw(st.lists(st.floats(0, 1), min_size=2, max_size=2, unique=True)))
    return B(x1, y1, x2, y2)


def test_iou_examples():
    a = B(0.1, 0.1, 0.4, 0.5)
    assert iou(a, a) == 1.0
    assert iou(a, B(0.5, 0.5, 0.6, 0.6)) == 0.0
    assert iou(B(0, 0, 0.2, 0.2), B(0.1, 0, 0.3, 0.2)) == pytest.approx(1 / 3, abs=1e-12)
    assert oracles.grid_iou((0, 0, 0.2, 0.2), (0.1, 0, 0.3, 0.2)) == pytest.approx(1 / 3, abs=1e-3)


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0
    assert iou(a, a) == 1.0


def lattice_box(r):
    x1, x2 = sorted(r.choice(1001, size=2, replace=False))
    y1, y2 = sorted(r.choice(1001, size=2, replace=False))
    return (x1 / 1000, y1 / 1000, x2 / 1000, y2 / 1000)


def test_iou_matches_pixel_grid_oracle():
    r = np.random.default_rng(0)
    for _ in range(1000):
        a, b = lattice_box(r), lattice_box(r)
        assert iou(B(*a), B(*b)) == pytest.approx(oracles.grid_iou(a, b), abs=1e-3)


def test_box_validation():
    with pytest.raises(ValueError):
        B(0.5, 0.1, 0.5, 0.2)
    with pytest.raises(ValueError):
        B(-0.1, 0.1, 0.5, 0.2)


GT = Annotation("img", "o1", B(0.1, 0.1, 0.5, 0.5))


def test_match_single_perfect():
    m = match_detections([GT], [Detection("img", GT.box, 0.9)])
    assert (len(m.tp), len(m.fp), len(m.fn)) == (1, 0, 0)


def test_match_missed():
    m = match_detections([GT], [])
    assert m.fn == ["o1"] and not m.tp and not m.fp


def test_match_confidence_order_wins():
    hi = Detection("img", B(0.1, 0.1, 0.5, 0.42), 0.9)  # IoU 0.8 * ... >= 0.5
    lo = Detection("img", B(0.1, 0.1, 0.5, 0.45), 0.8)
    assert iou(GT.box, hi.box) < iou(GT.box, lo.box)
    m = match_detections([GT], [lo, hi])
    assert m.tp[0][:2] == ("o1", 1) and m.fp == [0]


def test_match_spec_example_ious():
    d1 = Detection("img", B(0.1, 0.1, 0.5, 0.34), 0.9)  # IoU 0.6
    d2 = Detection("img", B(0.1, 0.1, 0.5, 0.38), 0.8)  # IoU 0.7
    assert iou(GT.box, d1.box) == pytest.approx(0.6)
    assert iou(GT.box, d2.box) == pytest.approx(0.7)
    m = match_detections([GT], [d1, d2])
    assert [t[1] for t in m.tp] == [0] and m.fp == [1]


def test_match_iou_tie_goes_to_lower_id():
    a = Annotation("img", "b", B(0.0, 0.0, 0.2, 0.2))
    b = Annotation("img", "a", B(0.0, 0.0, 0.2, 0.2))
    m = match_detections([a, b], [Detection("img", B(0.0, 0.0, 0.2, 0.2), 0.5)])
    assert m.tp[0][0] == "a" and m.fn == ["b"]


def test_match_below_threshold_is_fp_and_fn():
    m = match_detections([GT], [Detection("img", B(0.4, 0.4, 0.9, 0.9), 0.9)])
    assert m.fp == [0] and m.fn == ["o1"]


def test_match_duplicate_ids():
    with pytest.raises(ValueError, match="duplicate"):
        match_detections([GT, GT], [])


def test_match_conservation_random():
    r = np.random.default_rng(4)
    for trial in range(200):
        anns = [Annotation("i", f"o{k}", B(*lattice_box(r))) for k in range(r.integers(0, 6))]
        dets = [Detection("i", B(*lattice_box(r)), float(r.random())) for _ in range(r.integers(0, 6))]
        m = match_detections(anns, dets)
        assert len(m.tp) + len(m.fn) == len(anns)
        assert len(m.tp) + len(m.fp) == len(dets)
        assert all(t[2] >= 0.5 for t in m.tp)
        losses = detection_loss(m, anns, dets)
        assert all(0.0 <= v <= 1.0 for v in losses.values())


def test_losses_examples():
    gt = Annotation("img", "o1", B(0.1, 0.1, 0.5, 0.5))
    pred = Detection("img", B(0.2, 0.1, 0.5, 0.5), 0.7)
    m = match_detections([gt], [pred])
    assert detection_loss(m, [gt], [pred]) == {"o1": pytest.approx(0.025)}
    perfect = Detection("img", gt.box, 0.7)
    assert detection_loss(match_detections([gt], [perfect]), [gt], [perfect]) == {"o1": 0.0}
    assert detection_loss(match_detections([gt], []), [gt], []) == {"o1": 1.0}


def test_accuracy_counts():
    anns = [Annotation(f"i{k}", f"o{k}", B(0.1, 0.1, 0.3, 0.3)) for k in range(4)]
    dets = [Detection(f"i{k}", B(0.1, 0.1, 0.3, 0.3), 0.9) for k in range(3)]
    ms = [m for m, _, _ in match_dataset(anns, dets).values()]
    assert accuracy(ms) == 0.75
    assert accuracy([m for m, _, _ in match_dataset(anns, []).values()]) == 0.0
    assert accuracy([m for m, _, _ in match_dataset(anns[:3], dets).values()]) == 1.0
    with pytest.raises(ValueError):
        accuracy([])


def test_stub_detector_parse_and_determinism(small_dataset):
    _, factors, anns = small_dataset
    fmap = {a.object_id: f.as_row() for a, f in zip(anns, factors)}
    stub = StubDetector.parse("stub:noise=0.02,drop=0.2,planted_noise=0.05", seed=3)
    assert stub.drop == 0.2 and stub.planted_noise == 0.05
    d1, d2 = stub(anns, fmap), stub(anns, fmap)
    assert d1 == d2
    assert 0.6 * len(anns) < len(d1) < 0.95 * len(anns)
    with pytest.raises(ValueError):
        StubDetector.parse("yolo:x=1")
