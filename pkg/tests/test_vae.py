import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from novelty_eval import genscore, interpret, scorers, synthgen, vae
from novelty_eval.synthgen import ImageCrop


def tiny_params(seed=0, shape=(4, 4, 3), d=2, hidden=8):
    p = vae.VaeParams.initialize(shape, d, hidden, beta=0.1, seed=seed)
    rng = np.random.default_rng(seed + 100)
    # non-zero biases so every gradient path is exercised
    w = {k: v + (0.1 * rng.normal(size=v.shape) if k.endswith("_b") else 0.0) for k, v in p.weights.items()}
    return vae.VaeParams(w, shape, 0.1)


def finite_difference_check(params, x, eps, h=1e-4):
    _, grads = vae.loss_and_grads(params, x, eps)
    worst = 0.0
    for name, arr in params.weights.items():
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = vae.loss_and_grads(params, x, eps)[0].total
            arr[idx] = orig - h
            down = vae.loss_and_grads(params, x, eps)[0].total
            arr[idx] = orig
            num = (up - down) / (2 * h)
            ana = grads[name][idx]
            rel = abs(num - ana) / max(abs(num), abs(ana), 1e-6)
            worst = max(worst, rel)
    return worst


def test_zero_params_encode_to_zero():
    p = vae.VaeParams.zeros((4, 4, 3), 3, 5)
    mu, lv = vae.encode(p, ImageCrop(np.full((4, 4, 3), 0.7)))
    np.testing.assert_array_equal(mu, 0.0)
    np.testing.assert_array_equal(lv, 0.0)


def test_encode_shape_and_determinism():
    p = tiny_params()
    img = ImageCrop(np.random.default_rng(0).random((4, 4, 3)))
    mu, lv = vae.encode(p, img)
    assert mu.shape == (2,) and lv.shape == (2,)
    mu2, lv2 = vae.encode(p, img)
    assert mu.tobytes() == mu2.tobytes() and lv.tobytes() == lv2.tobytes()


def test_encode_shape_mismatch():
    with pytest.raises(ValueError, match="does not match"):
        vae.encode(tiny_params(), ImageCrop(np.zeros((5, 4, 3))))


def test_kl_closed_form_values():
    assert vae.kl_divergence([0.0, 0.0], [0.0, 0.0]) == 0.0
    assert vae.kl_divergence([1.0], [0.0]) == 0.5


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(7)
    mu = rng.normal(size=3)
    lv = rng.normal(scale=0.5, size=3)
    sd = np.exp(0.5 * lv)
    z = mu + sd * rng.standard_normal((1_000_000, 3))
    log_q = (-0.5 * ((z - mu) / sd) ** 2 - np.log(sd) - 0.5 * math.log(2 * math.pi)).sum(axis=1)
    log_p = (-0.5 * z ** 2 - 0.5 * math.log(2 * math.pi)).sum(axis=1)
    mc = float((log_q - log_p).mean())
    assert vae.kl_divergence(mu, lv) == pytest.approx(mc, rel=0.02)


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-20, 20)), min_size=1, max_size=16))
def test_kl_nonnegative(pairs):
    mu, lv = zip(*pairs)
    assert vae.kl_divergence(mu, lv) >= 0.0


def test_elbo_examples():
    half = np.array([[[0.5, 0.5, 0.5]]])
    single = vae.elbo_loss(np.array([0.5]), np.array([0.5]), [0.0], [0.0], 1.0)
    assert single.reconstruction == pytest.approx(math.log(2), abs=1e-12)
    loss = vae.elbo_loss(half, half, [0.0, 0.0], [0.0, 0.0], 0.1)
    assert loss.kl == 0.0 and loss.total == loss.reconstruction == pytest.approx(3 * math.log(2))
    nob = vae.elbo_loss(half, half * 0.9, [1.0, 2.0], [0.3, 0.1], 0.0)
    assert nob.total == nob.reconstruction


def test_elbo_clamps_exact_zero_and_one(caplog):
    out = vae.elbo_loss(np.array([1.0, 0.0]), np.array([0.0, 1.0]), [0.0], [0.0], 0.1)
    assert math.isfinite(out.total)
    assert "clamped 2" in caplog.text


def test_gradients_match_finite_differences():
    p = tiny_params(seed=3)
    rng = np.random.default_rng(1)
    x = rng.random((2, 48))
    eps = rng.standard_normal((2, 2))
    assert finite_difference_check(p, x, eps) < 1e-3


def test_train_is_bitwise_deterministic(small_dataset):
    crops, _, _ = small_dataset
    cfg = vae.TrainConfig(epochs=3, seed=4, d=3, hidden_width=16)
    p1, h1 = vae.train(crops[:150], cfg)
    p2, h2 = vae.train(crops[:150], cfg)
    assert h1 == h2
    for k in p1.weights:
        assert p1.weights[k].tobytes() == p2.weights[k].tobytes()


def test_train_needs_two_batches(small_dataset):
    crops, _, _ = small_dataset
    with pytest.raises(ValueError, match="at least 128"):
        vae.train(crops[:100], vae.TrainConfig(epochs=1))


def test_loss_halves_within_200_epochs(trained_vae):
    _, history = trained_vae
    assert len(history) == 200
    assert all(math.isfinite(h.total) for h in history)
    assert history[-1].total < 0.5 * history[0].total


def test_embed_dataset_matches_encode(trained_vae, small_dataset):
    params, _ = trained_vae
    crops, _, _ = small_dataset
    sub = [crops[0], crops[5], crops[0]]
    z = vae.embed_dataset(params, sub)
    assert z.shape == (3, params.d)
    np.testing.assert_array_equal(z[0], z[2])
    for row, c in zip(z, sub):
        np.testing.assert_allclose(row, vae.encode(params, c)[0], rtol=1e-12, atol=1e-14)


def test_decode_shape_roundtrip(trained_vae, small_dataset):
    params, _ = trained_vae
    crops, _, _ = small_dataset
    assert vae.decode(params, vae.encode(params, crops[3])[0]).pixels.shape == crops[3].pixels.shape


def test_params_json_roundtrip(trained_vae):
    import json

    params, _ = trained_vae
    back = vae.VaeParams.from_dict(json.loads(json.dumps(params.to_dict())))
    for k in params.weights:
        np.testing.assert_array_equal(back.weights[k], params.weights[k])


def test_traverse_contract():
    p = tiny_params()
    z = np.array([0.3, -0.2])
    two = vae.traverse(p, z, 1, -1.0, 2.0, 2)
    np.testing.assert_array_equal(two[0].pixels, vae.decode(p, [0.3, -1.0]).pixels)
    np.testing.assert_array_equal(two[1].pixels, vae.decode(p, [0.3, 2.0]).pixels)
    flat = vae.traverse(p, z, 0, 0.5, 0.5, 4)
    assert all(np.array_equal(f.pixels, flat[0].pixels) for f in flat)
    with pytest.raises(ValueError):
        vae.traverse(p, z, 2, 0, 1, 3)


@pytest.mark.slow
def test_brightness_traversal_is_monotone():
    spec = synthgen.DatasetSpec(
        n_per_class=300, seed=21, arrow_prob=0.0, exclude_classes=("yellow", "green"),
        factor_ranges={"bulb_radius": (0.25, 0.25), "background_brightness": (0.0, 1.0),
                       "blur_sigma": (0.0, 0.0), "hue_shift": (0.0, 0.0)},
    )
    crops, _, _ = synthgen.generate_dataset(spec)
    params, _ = vae.train(crops, vae.TrainConfig(epochs=100, seed=2))
    z = vae.embed_dataset(params, crops)
    model = scorers.fit("kde", z)
    nov = scorers.novelty_scores(model, z)
    ranking = interpret.select_informative_dims(z, genscore.bin_by_novelty(nov.novelty), top_k=1)
    dim = ranking.top[0]
    base, sd = z.mean(axis=0), z.std(axis=0)
    images = vae.traverse(params, base, dim, base[dim] - 2 * sd[dim], base[dim] + 2 * sd[dim], 9)
    rho = spearmanr(np.arange(9), [im.pixels.mean() for im in images])[0]
    assert abs(rho) > 0.8
