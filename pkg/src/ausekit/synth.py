"""Synthetic classifier outputs with known errors and controllable calibration.

In ``calibrated`` mode every misclassified point gets a strictly higher
predictive entropy than every correct one, so the uncertainty ranking is
rank-perfect. ``anticalibrated`` swaps the two ranges and ``constant``
gives every point the same uncertainty.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import entr

from .errors import InputError
from .metrics import FrameRecord
from .uncertainty import MCSampleSet

CALIBRATION_MODES = ("calibrated", "anticalibrated", "constant")
LAYOUTS = ("striped", "blobs")

# Mixing weight towards the uniform distribution: low for confident points,
# high for uncertain ones. Entropy is strictly increasing in this weight.
_CONFIDENT_MIX = (0.0, 0.02)
_UNCERTAIN_MIX = (0.5, 0.9)
_CONSTANT_MIX = 0.3


@dataclass
class ScenarioSpec:
    num_classes: int = 8
    shape: tuple[int, int] = (64, 64)
    num_frames: int = 1
    layout: str = "striped"
    class_fractions: Optional[Sequence[float]] = None
    accuracy: Union[float, Sequence[float]] = 0.8
    calibration_mode: str = "calibrated"
    mc_samples: int = 4
    store_samples: bool = False
    seed: int = 0

    def __post_init__(self):
        C = self.num_classes
        if C < 2:
            raise InputError("a scenario needs at least two classes")
        if self.mc_samples < 2:
            raise InputError("a scenario needs at least two MC samples")
        if self.layout not in LAYOUTS:
            raise InputError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.calibration_mode not in CALIBRATION_MODES:
            raise InputError(f"calibration_mode must be one of {CALIBRATION_MODES}")
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise InputError(f"shape must be (H, W) with positive sides, got {self.shape}")
        self.shape = (int(self.shape[0]), int(self.shape[1]))
        acc = np.broadcast_to(np.asarray(self.accuracy, dtype=np.float64), (C,))
        if ((acc < 0) | (acc > 1)).any():
            raise InputError("per-class accuracy must lie in [0, 1]")
        if self.class_fractions is not None:
            fr = np.asarray(self.class_fractions, dtype=np.float64)
            if fr.shape != (C,) or (fr < 0).any() or not np.isclose(fr.sum(), 1.0):
                raise InputError("class_fractions must be C non-negative values summing to 1")

    @property
    def accuracies(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.accuracy, dtype=np.float64), (self.num_classes,)).copy()


def _striped(n: int, C: int) -> np.ndarray:
    return (np.arange(n, dtype=np.int64) * C) // n


def _blobs(shape, fractions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Grow one compact blob per class from a random seed pixel, rarest class first."""
    H, W = shape
    n = H * W
    rr, cc = np.divmod(np.arange(n), W)
    out = np.full(n, -1, dtype=np.int64)
    quotas = np.floor(fractions * n).astype(np.int64)
    order = np.argsort(fractions, kind="stable")
    for c in order[:-1]:
        free = np.flatnonzero(out < 0)
        q = min(int(quotas[c]), free.size)
        if q == 0:
            continue
        s = free[rng.integers(free.size)]
        d = (rr[free] - rr[s]) ** 2 + (cc[free] - cc[s]) ** 2
        out[free[np.argsort(d, kind="stable")[:q]]] = c
    out[out < 0] = order[-1]
    return out


def _mix_entropy(alpha: np.ndarray, C: int) -> np.ndarray:
    """Entropy of ``(1 - a) * onehot + a / C`` in closed form."""
    return entr(1.0 - alpha + alpha / C) + (C - 1) * entr(alpha / C)


def _samples(pred: np.ndarray, alpha: np.ndarray, C: int, T: int, rng) -> np.ndarray:
    n = pred.size
    pbar = np.repeat((alpha / C)[:, None], C, axis=1)
    pbar[np.arange(n), pred] += 1.0 - alpha
    r = rng.dirichlet(np.ones(C), size=(T, n))
    d = r - r.mean(axis=0, keepdims=True)
    # largest step keeping every sample non-negative, then back off
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(d < 0, -d / pbar[None], 0.0).max(axis=(0, 2))
    lam = np.where(need > 0, 0.9 / np.where(need > 0, need, 1.0), 0.0)
    lam[~np.isfinite(lam)] = 0.0
    probs = np.clip(pbar[None] + lam[None, :, None] * d, 0.0, 1.0)
    return probs / probs.sum(axis=-1, keepdims=True)


def _frame(spec: ScenarioSpec, index: int) -> FrameRecord:
    C = spec.num_classes
    H, W = spec.shape
    n = H * W
    rng = np.random.default_rng([spec.seed, index])
    if spec.layout == "striped":
        label = _striped(n, C)
    else:
        fr = (np.full(C, 1.0 / C) if spec.class_fractions is None
              else np.asarray(spec.class_fractions, dtype=np.float64))
        label = _blobs(spec.shape, fr, rng)
    correct = rng.random(n) < spec.accuracies[label]
    pred = np.where(correct, label, (label + rng.integers(1, C, size=n)) % C)

    lo_c, hi_c = _CONFIDENT_MIX
    lo_u, hi_u = _UNCERTAIN_MIX
    confident = rng.uniform(lo_c, hi_c, size=n)
    uncertain = rng.uniform(lo_u, hi_u, size=n)
    if spec.calibration_mode == "calibrated":
        alpha = np.where(correct, confident, uncertain)
    elif spec.calibration_mode == "anticalibrated":
        alpha = np.where(correct, uncertain, confident)
    else:
        alpha = np.full(n, _CONSTANT_MIX)
    u = np.clip(_mix_entropy(alpha, C) / np.log(C), 0.0, 1.0)
    samples = None
    if spec.store_samples:
        samples = MCSampleSet(_samples(pred, alpha, C, spec.mc_samples, rng))
    return FrameRecord(
        frame_id=f"frame_{index:04d}",
        pred=pred.reshape(H, W),
        label=label.reshape(H, W),
        uncertainty=u,
        samples=samples,
    )


def generate_scenario(spec: ScenarioSpec) -> list[FrameRecord]:
    """Deterministic frames for ``spec``; the error indicator of each is ``pred != label``.

    ``uncertainty`` holds the normalised predictive entropy of the mean
    distribution the MC samples (when stored) are built around.
    """
    return [_frame(spec, i) for i in range(spec.num_frames)]


@dataclass(frozen=True)
class CorruptedRegion:
    frame_id: str
    row: int
    col: int
    height: int
    width: int
    shift: int

    def pixels(self, W: int) -> np.ndarray:
        rows = np.arange(self.row, self.row + self.height)
        cols = np.arange(self.col, self.col + self.width)
        return (rows[:, None] * W + cols[None, :]).reshape(-1)


def corrupt_labels(
    frames: Sequence[FrameRecord],
    rate: float,
    seed: int = 0,
    num_classes: Optional[int] = None,
    region_size: tuple[int, int] = (3, 6),
    max_attempts: int = 200,
) -> tuple[list[FrameRecord], list[CorruptedRegion]]:
    """Relabel disjoint rectangles covering about ``rate`` of each frame's pixels.

    Regions keep a one-pixel gap so no two of them touch, even diagonally.
    Model outputs are untouched. Returns new frames and the region ledger.
    """
    if not 0.0 < rate < 1.0:
        raise InputError(f"corruption rate must lie in (0, 1), got {rate}")
    lo, hi = region_size
    mean_area = ((lo + hi) / 2) ** 2
    out, ledger = [], []
    for k, frame in enumerate(frames):
        if len(frame.shape) != 2:
            raise InputError(f"frame {frame.frame_id!r} has no 2D shape to place regions on")
        C = num_classes or int(max(frame.label.max(), frame.pred.max())) + 1
        H, W = frame.shape
        rng = np.random.default_rng([seed, k])
        wanted = int(round(rate * H * W / mean_area))
        taken = np.zeros((H + 2, W + 2), dtype=bool)
        label = frame.label.copy()
        placed = 0
        attempts = 0
        while placed < wanted:
            attempts += 1
            if attempts > max_attempts * max(wanted, 1):
                raise InputError(
                    f"frame {frame.frame_id!r}: cannot place {wanted} disjoint regions at rate {rate}"
                )
            h, w = rng.integers(lo, hi + 1, size=2)
            if h > H or w > W:
                continue
            r, c = int(rng.integers(0, H - h + 1)), int(rng.integers(0, W - w + 1))
            # padded occupancy grid: region plus its one-pixel ring must be free
            if taken[r:r + h + 2, c:c + w + 2].any():
                continue
            taken[r + 1:r + h + 1, c + 1:c + w + 1] = True
            region = CorruptedRegion(frame.frame_id, r, c, int(h), int(w), int(rng.integers(1, C)))
            px = region.pixels(W)
            label[px] = (label[px] + region.shift) % C
            ledger.append(region)
            placed += 1
        out.append(replace(frame, label=label.reshape(frame.shape), pred=frame.pred.reshape(frame.shape)))
    return out, ledger
