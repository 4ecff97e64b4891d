import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from novelty_eval import formats, genscore, interpret, vae


def test_mi_constant_column_is_zero():
    assert interpret.mutual_information(np.ones(40), np.r_[np.zeros(20), np.ones(20)]) == 0.0


def test_mi_perfect_dependence_is_ln2():
    y = np.r_[np.zeros(30), np.ones(30)].astype(int)
    assert interpret.mutual_information(y.astype(float), y, n_bins=2) == pytest.approx(math.log(2), abs=1e-12)


def test_mi_errors():
    with pytest.raises(ValueError):
        interpret.mutual_information(np.arange(40.0), np.zeros(40))
    with pytest.raises(ValueError):
        interpret.mutual_information(np.arange(10.0), np.r_[np.zeros(5), np.ones(5)])


@pytest.mark.parametrize("seed", range(10))
def test_mi_matches_contingency_oracle(seed):
    r = np.random.default_rng(seed)
    y = (r.random(150) < 0.4).astype(int)
    x = r.normal(size=150) + y
    x[:20] = np.round(x[:20])  # some ties
    assert interpret.mutual_information(x, y, 10) == pytest.approx(oracles.contingency_mi(x.tolist(), y.tolist(), 10),
                                                                   abs=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 10_000))
def test_mi_invariant_under_monotone_map(seed):
    r = np.random.default_rng(seed)
    y = np.r_[0, 1, (r.random(60) < 0.5).astype(int)]
    x = r.normal(size=62)
    assert interpret.mutual_information(x, y) == interpret.mutual_information(np.exp(3 * x) + 1, y)
    assert interpret.mutual_information(x, y) >= 0


def planted(seed, n=120, d=6, dim=3):
    r = np.random.default_rng(seed)
    nov = r.random(n)
    bins = genscore.bin_by_novelty(nov)
    z = r.normal(size=(n, d))
    z[:, dim] = [1.0 if lab == "high" else 0.0 for lab in bins.labels]
    return z, bins


def test_planted_dimension_ranks_first():
    z, bins = planted(0)
    rk = interpret.select_informative_dims(z, bins, top_k=2)
    assert rk.order[0] == 3 and len(rk.top) == 2
    full = interpret.select_informative_dims(z, bins, top_k=6)
    assert sorted(full.top) == list(range(6))


def test_identical_columns_tie_to_lower_index(rng):
    z = rng.normal(size=(90, 4))
    z[:, 2] = z[:, 1]
    bins = genscore.bin_by_novelty(rng.random(90))
    rk = interpret.select_informative_dims(z, bins, top_k=4)
    assert rk.mi[1] == rk.mi[2]
    assert list(rk.order).index(1) < list(rk.order).index(2)


def test_select_requires_high_and_low():
    bins = genscore.NoveltyBins(["low"] * 30, (0.5, 0.5))
    with pytest.raises(ValueError):
        interpret.select_informative_dims(np.zeros((30, 2)), bins, 1)


@pytest.fixture
def tiny_vae():
    return vae.VaeParams.initialize((8, 8, 3), 4, 16, 0.1, seed=1)


def test_traversal_grid_export(tmp_path, tiny_vae, rng):
    z = rng.normal(size=(50, 4))
    rk = interpret.MiRanking(np.array([0.1, 0.5, 0.3, 0.2]), np.array([1, 2, 3, 0]), 3)
    man = interpret.export_traversal_grid(tiny_vae, rk, z, tmp_path, n_dims=3, steps=5, range_sigmas=2.0)
    assert [e["dim"] for e in man["dims"]] == [1, 2, 3]
    assert json.loads((tmp_path / "traversals.json").read_text()) == man
    for e in man["dims"]:
        img = formats.read_ppm(tmp_path / e["file"])
        assert img.shape == (8, 5 * 9 - 1, 3)


def test_traversal_zero_range_is_constant(tmp_path, tiny_vae, rng):
    z = rng.normal(size=(50, 4))
    rk = interpret.MiRanking(np.zeros(4), np.arange(4), 1)
    man = interpret.export_traversal_grid(tiny_vae, rk, z, tmp_path, n_dims=1, steps=4, range_sigmas=0.0)
    img = formats.read_ppm(tmp_path / man["dims"][0]["file"])
    tiles = [img[:, i * 9 : i * 9 + 8] for i in range(4)]
    assert all(np.array_equal(t, tiles[0]) for t in tiles)


def test_parallel_coordinates(tmp_path, rng):
    z = rng.normal(size=(12, 5))
    nov = rng.random(12)
    rk = interpret.MiRanking(np.zeros(5), np.array([4, 0, 1, 2, 3]), 2)
    ids = [f"o{i}" for i in range(12)]
    interpret.export_parallel_coordinates(tmp_path / "pc.csv", ids, z, nov, rk, 3)
    rows = formats.read_rows(tmp_path / "pc.csv")
    assert len(rows) == 12 and list(rows[0]) == ["id", "novelty", "z4", "z0", "z1"]
    assert [float(r["novelty"]) for r in rows] == nov.tolist()
