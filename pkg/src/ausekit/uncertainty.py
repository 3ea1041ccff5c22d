"""Per-point uncertainty from MC-dropout samples and Gaussian logit fields.

All logarithms are natural. The logit loss is returned as a quantity to
minimise: the negative log of the sample-averaged softmax likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.special import entr, logsumexp, softmax

from .errors import InputError

DEFAULT_MC_SAMPLES = 30
DEFAULT_LOGIT_SAMPLES = 10
# Points per random substream; fixed so draws never depend on worker count.
EPS_BLOCK = 65536
MI_NEGATIVE_TOLERANCE = 1e-9


@dataclass
class MCSampleSet:
    """``probs[t, i, c]`` is the softmax probability of class c at point i in pass t."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 3:
            raise InputError(f"MC samples must be T x N x C, got shape {probs.shape}")
        if probs.shape[0] == 0:
            raise InputError("MC sample set has no samples (T = 0)")
        if probs.size and (probs.min() < 0.0 or probs.max() > 1.0 + 1e-5):
            raise InputError("MC sample probabilities must lie in [0, 1]")
        sums = probs.sum(axis=-1)
        bad = np.argwhere(np.abs(sums - 1.0) > 1e-5)
        if bad.size:
            t, i = bad[0]
            raise InputError(f"MC sample {t} does not sum to 1 at point {i} (sum={sums[t, i]:.6g})")
        self.probs = probs

    @property
    def T(self) -> int:
        return self.probs.shape[0]

    @property
    def num_points(self) -> int:
        return self.probs.shape[1]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[2]


@dataclass
class LogitGaussianField:
    """Per-point logit means ``mu`` and spreads ``sigma`` (both N x C)."""

    mu: np.ndarray
    sigma: np.ndarray
    S: int = DEFAULT_LOGIT_SAMPLES

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.ndim != 2 or mu.shape != sigma.shape:
            raise InputError(f"logit mean {mu.shape} and spread {sigma.shape} must both be N x C")
        if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
            raise InputError("logit mean and spread must be finite")
        if (sigma < 0).any():
            raise InputError("logit spread must be non-negative")
        if self.S < 1:
            raise InputError(f"logit sample count must be >= 1, got {self.S}")
        self.mu, self.sigma = mu, sigma

    @property
    def num_points(self) -> int:
        return self.mu.shape[0]

    @property
    def num_classes(self) -> int:
        return self.mu.shape[1]


def mean_softmax(samples: MCSampleSet) -> tuple[np.ndarray, np.ndarray]:
    """Average the T passes; argmax ties go to the lowest class id."""
    if samples.T == 0:
        raise InputError("cannot average an empty sample set")
    pbar = samples.probs.mean(axis=0)
    return pbar, np.argmax(pbar, axis=-1)


def predictive_entropy(pbar: np.ndarray) -> np.ndarray:
    """Shannon entropy of each row, clipped to ``[0, ln C]``."""
    pbar = np.asarray(pbar, dtype=np.float64)
    if (pbar < 0).any():
        raise InputError("probabilities must be non-negative")
    h = entr(pbar).sum(axis=-1)
    return np.clip(h, 0.0, np.log(pbar.shape[-1]))


def _expected_entropy(probs: np.ndarray) -> np.ndarray:
    return np.maximum(entr(probs).sum(axis=-1).mean(axis=0), 0.0)


def mutual_information(samples: MCSampleSet) -> np.ndarray:
    """Entropy of the mean minus the mean per-pass entropy."""
    if samples.T < 2:
        raise InputError("mutual information needs at least two MC samples")
    pbar, _ = mean_softmax(samples)
    mi = predictive_entropy(pbar) - _expected_entropy(samples.probs)
    worst = mi.min(initial=0.0)
    if worst < -MI_NEGATIVE_TOLERANCE:
        raise ArithmeticError(
            f"mutual information {worst:.3e} at point {int(np.argmin(mi))} is below roundoff"
        )
    return np.maximum(mi, 0.0)


def normalize_uncertainty(u: np.ndarray, num_classes: int) -> np.ndarray:
    """Divide by ``ln C``, the shared upper bound of entropy and mutual information."""
    if num_classes < 2:
        raise InputError("normalisation needs at least two classes")
    u = np.asarray(u, dtype=np.float64)
    if (u < 0).any():
        raise InputError("uncertainty values must be non-negative before normalisation")
    return np.clip(u / np.log(num_classes), 0.0, 1.0)


def _substream(seed, block_index: int) -> np.random.Generator:
    key = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    return np.random.default_rng([int(k) for k in key] + [block_index])


def _blocks(n: int, block: int = EPS_BLOCK) -> Iterable[tuple[int, int, int]]:
    for b, start in enumerate(range(0, n, block)):
        yield b, start, min(start + block, n)


def draw_epsilon(seed, num_points: int, S: int, C: int) -> np.ndarray:
    """Standard normal draws of shape (S, N, C), one substream per block of points."""
    out = np.empty((S, num_points, C), dtype=np.float64)
    for b, lo, hi in _blocks(num_points):
        rng = _substream(seed, b)
        out[:, lo:hi, :] = rng.standard_normal((S, hi - lo, C))
    return out


def _sampled_logits(field: LogitGaussianField, seed: int, eps: Optional[np.ndarray]):
    if eps is None:
        eps = draw_epsilon(seed, field.num_points, field.S, field.num_classes)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.ndim != 3 or eps.shape[1:] != field.mu.shape:
        raise InputError(f"epsilon draws must be S x {field.mu.shape}, got {eps.shape}")
    return field.mu[None] + field.sigma[None] * eps, eps


def sample_logits(field: LogitGaussianField, seed: int = 0) -> MCSampleSet:
    """Draw ``S`` Gaussian logit vectors per point and softmax each one."""
    x, _ = _sampled_logits(field, seed, None)
    return MCSampleSet(softmax(x, axis=-1))


def aleatoric_uncertainty(field: LogitGaussianField, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Entropy of the mean sampled softmax and its argmax, computed block-wise."""
    n, C = field.mu.shape
    h = np.empty(n)
    pred = np.empty(n, dtype=np.int64)
    for b, lo, hi in _blocks(n):
        rng = _substream(seed, b)
        eps = rng.standard_normal((field.S, hi - lo, C))
        x = field.mu[None, lo:hi] + field.sigma[None, lo:hi] * eps
        pbar = softmax(x, axis=-1).mean(axis=0)
        h[lo:hi] = predictive_entropy(pbar)
        pred[lo:hi] = np.argmax(pbar, axis=-1)
    return h, pred


def _kept_points(labels: np.ndarray, C: int, ignore_ids) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    keep = ~np.isin(labels, list(ignore_ids)) if ignore_ids else np.ones(labels.size, bool)
    bad = np.flatnonzero(keep & ((labels < 0) | (labels >= C)))
    if bad.size:
        raise InputError(f"label {labels[bad[0]]} out of range at index {bad[0]}")
    return keep


def logit_loss(
    field: LogitGaussianField,
    labels: np.ndarray,
    seed: int = 0,
    ignore_ids=(),
    eps: Optional[np.ndarray] = None,
) -> float:
    """``-sum_i log((1/S) sum_s softmax(x_is)[y_i])``; ignored labels are skipped."""
    labels = np.asarray(labels).reshape(-1)
    keep = _kept_points(labels, field.num_classes, ignore_ids)
    x, _ = _sampled_logits(field, seed, eps)
    idx = np.flatnonzero(keep)
    y = labels[idx]
    xk = x[:, idx, :]
    logp = xk[:, np.arange(idx.size), y] - logsumexp(xk, axis=-1)
    per_point = logsumexp(logp, axis=0) - np.log(x.shape[0])
    return float(-per_point.sum())


def logit_loss_grad(
    field: LogitGaussianField,
    labels: np.ndarray,
    seed: int = 0,
    ignore_ids=(),
    eps: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`logit_loss` w.r.t. ``mu`` and ``sigma`` for fixed draws."""
    labels = np.asarray(labels).reshape(-1)
    keep = _kept_points(labels, field.num_classes, ignore_ids)
    x, eps = _sampled_logits(field, seed, eps)
    S, n, C = x.shape
    logp = x - logsumexp(x, axis=-1, keepdims=True)
    p = np.exp(logp)
    onehot = np.zeros((n, C))
    idx = np.flatnonzero(keep)
    onehot[idx, labels[idx]] = 1.0
    logp_y = logp[:, np.arange(n), np.where(keep, labels, 0)]
    # posterior weight of each logit sample in the per-point mixture
    w = softmax(logp_y, axis=0)
    dx = w[..., None] * (p - onehot[None])
    dx[:, ~keep, :] = 0.0
    return dx.sum(axis=0), (dx * eps).sum(axis=0)


def class_weights(frequencies) -> np.ndarray:
    """Inverse log-frequency weights ``1 / ln(1.02 + f_c)``."""
    f = np.asarray(frequencies, dtype=np.float64)
    if ((f < 0) | (f > 1) | ~np.isfinite(f)).any():
        raise InputError("class frequencies must lie in [0, 1]")
    return 1.0 / np.log(1.02 + f)
