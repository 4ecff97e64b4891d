import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from novelty_eval import genscore

weights = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=50)


def test_g_examples():
    assert genscore.generalization_score([0.2, 0.9], [0.0, 0.0]) == 1.0
    assert genscore.generalization_score([0.3, 0.3, 0.3], [0.1, 0.5, 0.9]) == pytest.approx(0.5, abs=1e-12)
    assert genscore.generalization_score([1.0, 0.5], [0.0, 1.0]) == 2 / 3


def test_g_degenerate_weights():
    with pytest.raises(ValueError, match="degenerate"):
        genscore.generalization_score([0.0, 0.0], [0.1, 0.2])


def test_zero_weight_objects_do_not_count():
    assert genscore.generalization_score([1.0, 0.0], [0.2, 1.0]) == pytest.approx(0.8)


@given(st.data())
def test_g_bounds_and_scaling(data):
    n = data.draw(st.integers(1, 40))
    w = np.array(data.draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)))
    loss = np.array(data.draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n)))
    c = data.draw(st.floats(1e-3, 1e3))
    g = genscore.generalization_score(w, loss)
    assert 0.0 <= g <= 1.0
    assert abs(genscore.generalization_score(w * c, loss) - g) < 1e-12


def test_weight_monotonicity(rng):
    for _ in range(200):
        w = rng.random(8) + 0.05
        loss = rng.random(8)
        g = genscore.generalization_score(w, loss)
        mean_loss = 1 - g
        i = int(rng.integers(8))
        w2 = w.copy()
        w2[i] += 0.5
        g2 = genscore.generalization_score(w2, loss)
        if loss[i] < mean_loss - 1e-9:
            assert g2 > g
        elif loss[i] > mean_loss + 1e-9:
            assert g2 < g


def test_bins_examples():
    b = genscore.bin_by_novelty([0.1, 0.5, 0.9])
    assert b.labels == ["low", "medium", "high"] and not b.degenerate
    flat = genscore.bin_by_novelty([0.4] * 6)
    assert set(flat.labels) == {"low"} and flat.degenerate


def test_bins_uniform_sizes(rng):
    v = rng.random(300)
    b = genscore.bin_by_novelty(v)
    for name in genscore.BIN_NAMES:
        assert abs(len(b.members(name)) - 100) <= 1
    lo, hi = b.edges
    assert lo <= hi


def test_bins_manual_edges():
    b = genscore.bin_by_novelty([0.1, 0.2, 0.3, 0.8], edges=(0.2, 0.5))
    assert b.labels == ["low", "low", "medium", "high"]


def test_sample_balanced(rng):
    v = np.concatenate([np.full(150, 0.1), np.full(150, 0.5), np.full(150, 0.9)]) + rng.random(450) * 1e-3
    ids = [f"o{i}" for i in range(450)]
    b = genscore.bin_by_novelty(v)
    s1 = genscore.sample_balanced(b, ids, 100, seed=3)
    assert len(s1) == len(set(s1)) == 300
    assert s1 == genscore.sample_balanced(b, ids, 100, seed=3)
    small = genscore.bin_by_novelty(np.linspace(0, 1, 120))
    assert len(genscore.sample_balanced(small, [str(i) for i in range(120)], 100)) == 120


def test_curve_examples(rng):
    v = rng.random(100)
    flat = genscore.loss_novelty_curve(v, np.full(100, 0.3))
    assert len(flat) == 10 and all(p[1] == pytest.approx(0.3) for p in flat)
    inc = [p[1] for p in genscore.loss_novelty_curve(v, v)]
    assert all(b > a for a, b in zip(inc, inc[1:]))
    assert len(genscore.loss_novelty_curve([0.1, 0.2], [0.0, 1.0], 10)) == 2


def test_curve_matches_chunk_oracle(rng):
    v, loss = rng.random(500), rng.random(500)
    got = genscore.loss_novelty_curve(v, loss, 10)
    want = oracles.chunk_curve(v.tolist(), loss.tolist(), 10)
    np.testing.assert_allclose(np.array(got), np.array(want), rtol=1e-12)


def test_report_bins_sum():
    nov = {f"o{i}": i / 9 for i in range(10)}
    loss = {f"o{i}": 0.1 for i in range(10)}
    rep = genscore.build_report(nov, loss, 0.9, n_false_positives=2)
    assert sum(b["count"] for b in rep.per_bin.values()) == 10
    assert rep.g_score == pytest.approx(0.9) and rep.n_false_positives == 2
    with pytest.raises(KeyError):
        genscore.build_report({"a": 1.0}, {"b": 0.0}, 1.0)
