import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ausekit.errors import InputError
from ausekit.uncertainty import (
    LogitGaussianField,
    MCSampleSet,
    aleatoric_uncertainty,
    class_weights,
    logit_loss,
    logit_loss_grad,
    mean_softmax,
    mutual_information,
    normalize_uncertainty,
    predictive_entropy,
    sample_logits,
)

LN2 = math.log(2)


def samples(*rows):
    """Build a sample set for one point from T probability rows."""
    return MCSampleSet(np.array(rows, dtype=float)[:, None, :])


def test_mean_softmax_examples():
    pbar, pred = mean_softmax(samples([0, 1], [0, 1]))
    assert pbar.tolist() == [[0, 1]] and pred.tolist() == [1]
    pbar, pred = mean_softmax(samples([1, 0], [0, 1]))
    assert pbar.tolist() == [[0.5, 0.5]] and pred.tolist() == [0]
    pbar, pred = mean_softmax(samples([0.2, 0.8], [0.4, 0.6], [0.9, 0.1]))
    np.testing.assert_allclose(pbar, [[0.5, 0.5]], atol=1e-15)
    assert pred.tolist() == [0]


def test_sample_set_validation():
    with pytest.raises(InputError):
        MCSampleSet(np.zeros((0, 2, 2)))
    with pytest.raises(InputError, match="sum to 1"):
        samples([0.5, 0.4])
    with pytest.raises(InputError):
        MCSampleSet(np.ones((2, 3)))


def test_entropy_examples():
    assert predictive_entropy(np.array([[0, 1, 0, 0.0]]))[0] == 0.0
    assert predictive_entropy(np.full((1, 4), 0.25))[0] == pytest.approx(math.log(4), abs=1e-12)
    assert predictive_entropy(np.array([[0.5, 0.5, 0, 0]]))[0] == pytest.approx(LN2, abs=1e-12)
    with pytest.raises(InputError):
        predictive_entropy(np.array([[-0.1, 1.1]]))


def test_mutual_information_examples():
    assert mutual_information(samples([0.3, 0.7], [0.3, 0.7], [0.3, 0.7]))[0] == pytest.approx(0.0, abs=1e-12)
    assert mutual_information(samples([1, 0], [0, 1]))[0] == pytest.approx(LN2, abs=1e-12)
    assert mutual_information(samples([0.5, 0.5], [0.5, 0.5]))[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InputError):
        mutual_information(samples([1, 0]))


def test_normalize_examples():
    np.testing.assert_allclose(normalize_uncertainty(np.array([math.log(4), 0.0, LN2]), 4), [1.0, 0.0, 0.5])
    with pytest.raises(InputError):
        normalize_uncertainty(np.array([0.1]), 1)
    with pytest.raises(InputError):
        normalize_uncertainty(np.array([-0.1]), 3)


@st.composite
def sample_sets(draw):
    T = draw(st.integers(2, 5))
    n = draw(st.integers(1, 6))
    C = draw(st.integers(2, 5))
    raw = draw(arrays(np.float64, (T, n, C), elements=st.floats(0, 1)))
    raw = raw + 1e-12 * (raw.sum(axis=-1, keepdims=True) == 0)
    return MCSampleSet(raw / raw.sum(axis=-1, keepdims=True))


@given(sample_sets())
def test_information_ordering(s):
    h = predictive_entropy(mean_softmax(s)[0])
    mi = mutual_information(s)
    assert (mi >= 0).all() and (mi <= h).all() and (h <= math.log(s.num_classes)).all()


@given(sample_sets(), st.randoms())
def test_class_permutation_invariance(s, rnd):
    perm = list(range(s.num_classes))
    rnd.shuffle(perm)
    t = MCSampleSet(s.probs[..., perm])
    np.testing.assert_allclose(mutual_information(t), mutual_information(s), atol=1e-12)
    np.testing.assert_allclose(predictive_entropy(mean_softmax(t)[0]),
                               predictive_entropy(mean_softmax(s)[0]), atol=1e-12)


@given(arrays(np.float64, 20, elements=st.floats(0, 10)), st.integers(2, 30))
def test_normalisation_preserves_order(u, C):
    v = normalize_uncertainty(u, C)
    # order-preserving: strict order never flips (clamping can only merge at 1.0)
    i, j = np.triu_indices(u.size, 1)
    assert not ((u[i] < u[j]) & (v[i] > v[j])).any()
    assert not ((u[i] > u[j]) & (v[i] < v[j])).any()


def test_sample_logits_degenerate_and_deterministic():
    mu = np.array([[1.0, -0.5, 0.2], [0.0, 3.0, 0.0]])
    s = sample_logits(LogitGaussianField(mu, np.zeros_like(mu), S=5), seed=3)
    expected = np.exp(mu) / np.exp(mu).sum(axis=1, keepdims=True)
    for t in range(5):
        np.testing.assert_allclose(s.probs[t], expected, atol=1e-15)
    f = LogitGaussianField(mu, np.ones_like(mu), S=7)
    assert np.array_equal(sample_logits(f, 11).probs, sample_logits(f, 11).probs)
    assert not np.array_equal(sample_logits(f, 11).probs, sample_logits(f, 12).probs)


def test_sample_logits_symmetry():
    f = LogitGaussianField(np.zeros((1, 2)), np.ones((1, 2)), S=10_000)
    pbar, _ = mean_softmax(sample_logits(f, seed=0))
    np.testing.assert_allclose(pbar[0], [0.5, 0.5], atol=0.02)


def test_aleatoric_matches_sampled_mean():
    rng = np.random.default_rng(1)
    f = LogitGaussianField(rng.normal(size=(40, 5)), rng.uniform(0, 2, size=(40, 5)), S=6)
    h, pred = aleatoric_uncertainty(f, seed=9)
    pbar, pred2 = mean_softmax(sample_logits(f, seed=9))
    np.testing.assert_allclose(h, predictive_entropy(pbar), atol=1e-12)
    assert np.array_equal(pred, pred2)


def test_field_validation():
    with pytest.raises(InputError):
        LogitGaussianField(np.zeros((2, 3)), -np.ones((2, 3)))
    with pytest.raises(InputError):
        LogitGaussianField(np.array([[np.inf, 0.0]]), np.zeros((1, 2)))
    with pytest.raises(InputError):
        LogitGaussianField(np.zeros((2, 3)), np.zeros((2, 3)), S=0)


def cross_entropy(mu, labels):
    z = mu - mu.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(len(labels)), labels].sum()


def test_loss_collapses_to_cross_entropy():
    mu = np.array([[4.0, 0.0, -1.0], [0.5, 2.5, 0.0]])
    labels = np.array([0, 1])
    f = LogitGaussianField(mu, np.zeros_like(mu), S=13)
    assert logit_loss(f, labels, seed=2) == pytest.approx(cross_entropy(mu, labels), abs=1e-10)


def test_loss_single_point_ln2():
    f = LogitGaussianField(np.zeros((1, 2)), np.zeros((1, 2)), S=3)
    assert logit_loss(f, [0]) == pytest.approx(LN2, abs=1e-15)


def test_loss_is_additive_over_points():
    rng = np.random.default_rng(0)
    mu, sd = rng.normal(size=(4, 3)), rng.uniform(0, 1, (4, 3))
    labels = np.array([0, 2, 1, 1])
    eps = rng.standard_normal((5, 4, 3))
    one = logit_loss(LogitGaussianField(mu, sd, 5), labels, eps=eps)
    two = logit_loss(LogitGaussianField(np.vstack([mu, mu]), np.vstack([sd, sd]), 5),
                     np.concatenate([labels, labels]), eps=np.concatenate([eps, eps], axis=1))
    assert two == pytest.approx(2 * one, rel=1e-13)


def test_loss_skips_ignored():
    mu = np.array([[1.0, 0.0], [0.0, 1.0]])
    f = LogitGaussianField(mu, np.zeros_like(mu), S=2)
    full = logit_loss(f, [0, 1])
    assert logit_loss(f, [0, 255], ignore_ids={255}) == pytest.approx(full / 2, rel=1e-13)
    gmu, gsd = logit_loss_grad(f, [0, 255], ignore_ids={255})
    assert (gmu[1] == 0).all() and (gsd[1] == 0).all()


def test_grad_sigma_zero_is_cross_entropy_gradient():
    mu = np.array([[1.0, -1.0, 0.3], [0.0, 0.0, 2.0]])
    labels = np.array([1, 2])
    gmu, _ = logit_loss_grad(LogitGaussianField(mu, np.zeros_like(mu), S=4), labels, seed=5)
    p = np.exp(mu) / np.exp(mu).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(gmu, p - np.eye(3)[labels], atol=1e-14)


def test_grad_sigma_symmetric_draws_vanish():
    mu = np.array([[0.2, -0.4, 1.0]])
    a = np.array([[[0.7, -1.3, 0.4]]])
    eps = np.concatenate([a, -a])
    _, gsd = logit_loss_grad(LogitGaussianField(mu, np.zeros_like(mu), S=2), [0], eps=eps)
    np.testing.assert_allclose(gsd, 0.0, atol=1e-15)


def finite_difference(fun, x, h=1e-4):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (fun(xp) - fun(xm)) / (2 * h)
    return g


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(7)
    mu = rng.normal(size=(3, 4))
    sd = rng.uniform(0.2, 1.5, size=(3, 4))
    labels = rng.integers(0, 4, 3)
    eps = rng.standard_normal((6, 3, 4))
    gmu, gsd = logit_loss_grad(LogitGaussianField(mu, sd, 6), labels, eps=eps)
    fd_mu = finite_difference(lambda m: logit_loss(LogitGaussianField(m, sd, 6), labels, eps=eps), mu)
    fd_sd = finite_difference(lambda s: logit_loss(LogitGaussianField(mu, s, 6), labels, eps=eps), sd)
    assert np.abs(gmu - fd_mu).max() <= 1e-4 * np.abs(fd_mu).max()
    assert np.abs(gsd - fd_sd).max() <= 1e-4 * np.abs(fd_sd).max()


def test_class_weight_examples():
    w = class_weights([0.0, 1.0])
    assert w[0] == pytest.approx(1 / math.log(1.02)) and w[0] == pytest.approx(50.50, abs=5e-3)
    assert w[1] == pytest.approx(1.422, abs=1e-3)
    assert (np.diff(class_weights(np.linspace(0, 1, 50))) < 0).all()
    with pytest.raises(InputError):
        class_weights([1.2])


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_seeded_draws_reproducible(seed):
    f = LogitGaussianField(np.zeros((3, 2)), np.ones((3, 2)), S=2)
    assert np.array_equal(sample_logits(f, seed).probs, sample_logits(f, seed).probs)
