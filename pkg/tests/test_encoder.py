import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import special_ortho_group

from scgan import nncore
from scgan.datasets import Batch2D, augment, sample_dataset
from scgan.encoder import (
    ContrastiveConfig,
    embed,
    make_encoder,
    nt_xent_loss,
    project,
    train_encoder,
)
from scgan.errors import ConfigError, NumericError, UsageError
from scgan.latent import kmeans


def nt_xent_reference(z, tau):
    """Loop-by-loop evaluation of the softmax expression."""
    two_n = len(z)
    n = two_n // 2
    total = 0.0
    for a in range(two_n):
        p = (a + n) % two_n
        cos = lambda i, j: z[i] @ z[j] / (np.linalg.norm(z[i]) * np.linalg.norm(z[j]))
        denom = sum(math.exp(cos(a, b) / tau) for b in range(two_n) if b != a)
        total += -math.log(math.exp(cos(a, p) / tau) / denom)
    return total / two_n


def test_identical_projections_give_ln7():
    z = np.tile([[0.3, -1.2, 0.5]], (8, 1))
    assert abs(nt_xent_loss(z, 0.5).value - math.log(7)) < 1e-6


def test_orthogonal_pairs():
    z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    expected = math.log((math.e + 2) / math.e)
    assert abs(nt_xent_loss(z, 1.0).value - expected) < 1e-6


@pytest.mark.parametrize("n", [2, 3, 5])
def test_all_identical_is_ln_2n_minus_1(n):
    z = np.ones((2 * n, 4))
    assert nt_xent_loss(z, 0.1).value == pytest.approx(math.log(2 * n - 1), abs=1e-12)


def test_matches_reference():
    z = np.random.default_rng(0).normal(size=(10, 3))
    assert nt_xent_loss(z, 0.7).value == pytest.approx(nt_xent_reference(z, 0.7), abs=1e-12)


def test_scale_invariance():
    z = np.random.default_rng(1).normal(size=(12, 5))
    assert abs(nt_xent_loss(10 * z, 0.5).value - nt_xent_loss(z, 0.5).value) < 1e-12


def test_rotation_invariance():
    z = np.random.default_rng(2).normal(size=(12, 4))
    q = special_ortho_group.rvs(4, random_state=3)
    assert nt_xent_loss(z @ q, 0.5).value == pytest.approx(nt_xent_loss(z, 0.5).value, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (8, 3), elements=st.floats(-5, 5)).filter(
        lambda z: np.all(np.linalg.norm(z, axis=1) > 1e-3)
    ),
    st.floats(0.05, 2.0),
)
def test_loss_nonnegative(z, tau):
    assert nt_xent_loss(z, tau).value >= 0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    z = rng.normal(size=(8, 3))
    loss = nt_xent_loss(z, 0.5)
    h = 1e-6
    num = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        num[idx] = (nt_xent_loss(zp, 0.5).value - nt_xent_loss(zm, 0.5).value) / (2 * h)
    assert np.max(np.abs(num - loss.grad)) / np.max(np.abs(num)) < 1e-6


def test_zero_norm_is_numeric_error():
    z = np.ones((4, 2))
    z[2] = 0
    with pytest.raises(NumericError):
        nt_xent_loss(z, 0.5)


@pytest.mark.parametrize("rows", [2, 5])
def test_bad_row_count(rows):
    with pytest.raises(UsageError):
        nt_xent_loss(np.ones((rows, 2)), 0.5)


@pytest.mark.parametrize("kw", [{"temperature": 0}, {"batch_size": 1}, {"sigma_aug": -1}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ContrastiveConfig(**kw)


def test_embed_shapes_and_determinism():
    enc = make_encoder(np.random.default_rng(0), latent_dim=3)
    x = np.random.default_rng(1).normal(size=(17, 2))
    e1, e2 = embed(enc, x), embed(enc, Batch2D(x))
    assert e1.shape == (17, 3)
    np.testing.assert_array_equal(e1, e2)
    assert project(enc, x).shape == (17, enc.proj_dim)


def test_zero_backbone_embeds_to_zero():
    enc = make_encoder(np.random.default_rng(0))
    for name in enc.params:
        if name.startswith("backbone."):
            enc.params[name][...] = 0.0
    assert np.all(embed(enc, np.random.default_rng(1).normal(size=(5, 2))) == 0)


def _short_cfg(**kw):
    return ContrastiveConfig(**{"iterations": 30, "batch_size": 64, **kw})


def test_training_is_deterministic(tmp_path):
    data = sample_dataset("eight_gaussians", 500, 0)
    paths = []
    for i in range(2):
        enc = make_encoder(np.random.default_rng(0))
        enc, hist = train_encoder(data, _short_cfg(), enc, seed=7)
        paths.append(tmp_path / f"enc{i}.scg")
        nncore.save_params(enc.params, paths[-1])
        assert len(hist) == 30
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_zero_sigma_views_are_identical():
    data = sample_dataset("two_spirals", 200, 0)
    rng = np.random.default_rng(0)
    v1, v2 = augment(data, 0.0, rng), augment(data, 0.0, rng)
    np.testing.assert_array_equal(v1.points, v2.points)
    enc = make_encoder(np.random.default_rng(0))
    p1, p2 = project(enc, v1.points), project(enc, v2.points)
    cos = np.sum(p1 * p2, axis=1) / (np.linalg.norm(p1, axis=1) * np.linalg.norm(p2, axis=1))
    np.testing.assert_allclose(cos, 1.0, atol=1e-12)
    _, hist = train_encoder(data, _short_cfg(sigma_aug=0.0), enc, seed=0)
    assert np.all(np.isfinite(hist))


def test_empty_data_rejected():
    enc = make_encoder(np.random.default_rng(0))
    with pytest.raises(UsageError):
        train_encoder(Batch2D(np.zeros((0, 2))), _short_cfg(), enc, 0)


def test_two_blobs_separate():
    rng = np.random.default_rng(0)
    pts = np.concatenate([rng.normal((-2, 0), 0.2, (200, 2)), rng.normal((2, 0), 0.2, (200, 2))])
    enc = make_encoder(np.random.default_rng(1), latent_dim=2)
    enc, _ = train_encoder(Batch2D(pts), ContrastiveConfig(iterations=300, batch_size=128), enc, 2)
    e = embed(enc, pts)
    a, b = e[:200], e[200:]

    def mean_dist(p, q):
        return np.mean(np.linalg.norm(p[:, None] - q[None], axis=2))

    assert mean_dist(a, b) > max(mean_dist(a, a), mean_dist(b, b))


@pytest.mark.slow
def test_eight_gaussians_cluster_purity():
    data = sample_dataset("eight_gaussians", 4096, 0)
    enc = make_encoder(np.random.default_rng(0))
    enc, _ = train_encoder(data, ContrastiveConfig(iterations=1000), enc, 1)
    model = kmeans(embed(enc, data), 8, seed=0)
    purity = sum(
        np.bincount(data.labels[model.assignments == k]).max()
        for k in range(8)
        if np.any(model.assignments == k)
    ) / len(data)
    assert purity >= 0.9
