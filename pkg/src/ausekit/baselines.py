"""Reference calibration metrics: expected calibration error and PAvPU."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import InputError

DEFAULT_ECE_BINS = 10


def ece(confidence, correct, bins: int = DEFAULT_ECE_BINS) -> float:
    """Expected calibration error over ``bins`` equal-width confidence bins.

    Confidence 1.0 lands in the top bin; empty bins contribute nothing.
    """
    conf = np.asarray(confidence, dtype=np.float64).reshape(-1)
    correct = np.asarray(correct, dtype=bool).reshape(-1)
    if conf.size == 0:
        raise InputError("ECE of an empty set is undefined")
    if conf.size != correct.size:
        raise InputError(f"{conf.size} confidences but {correct.size} correctness flags")
    if bins < 1:
        raise InputError(f"bins must be >= 1, got {bins}")
    if ((conf < 0) | (conf > 1)).any():
        raise InputError("confidence values must lie in [0, 1]")
    b = np.minimum((conf * bins).astype(np.int64), bins - 1)
    n = np.bincount(b, minlength=bins)
    acc = np.bincount(b, weights=correct.astype(np.float64), minlength=bins)
    cs = np.bincount(b, weights=conf, minlength=bins)
    # sum_b (n_b/N) |acc_b - conf_b| with the 1/n_b factors cancelled
    return float(np.abs(acc - cs).sum() / conf.size)


@dataclass(frozen=True)
class PatchSpec:
    height: int = 4
    width: int = 4
    accuracy_threshold: float = 0.5
    # a number in [0, 1], or "mean" for the mean uncertainty of the evaluated pixels
    uncertainty_threshold: Union[float, str] = "mean"

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise InputError("patch dimensions must be >= 1")
        if not 0.0 <= self.accuracy_threshold <= 1.0:
            raise InputError("accuracy threshold must lie in [0, 1]")
        t = self.uncertainty_threshold
        if isinstance(t, str):
            if t != "mean":
                raise InputError(f"uncertainty threshold must be a number or 'mean', got {t!r}")
        elif not 0.0 <= float(t) <= 1.0:
            raise InputError("uncertainty threshold must lie in [0, 1]")


@dataclass
class PatchCounts:
    accurate_certain: int = 0
    accurate_uncertain: int = 0
    inaccurate_certain: int = 0
    inaccurate_uncertain: int = 0

    def __add__(self, o: "PatchCounts") -> "PatchCounts":
        return PatchCounts(
            self.accurate_certain + o.accurate_certain,
            self.accurate_uncertain + o.accurate_uncertain,
            self.inaccurate_certain + o.inaccurate_certain,
            self.inaccurate_uncertain + o.inaccurate_uncertain,
        )

    @property
    def total(self) -> int:
        return (self.accurate_certain + self.accurate_uncertain
                + self.inaccurate_certain + self.inaccurate_uncertain)

    def metrics(self) -> dict[str, Optional[float]]:
        """Conditional probabilities; a zero denominator gives ``None``."""
        ac, au = self.accurate_certain, self.accurate_uncertain
        ic, iu = self.inaccurate_certain, self.inaccurate_uncertain

        def ratio(a, b):
            return a / b if b else None

        return {
            "p_accurate_given_certain": ratio(ac, ac + ic),
            "p_uncertain_given_inaccurate": ratio(iu, ic + iu),
            "pavpu": ratio(ac + iu, self.total),
        }


def _patch_sums(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    H, W = x.shape
    rows = np.arange(0, H, ph)
    cols = np.arange(0, W, pw)
    return np.add.reduceat(np.add.reduceat(x, rows, axis=0), cols, axis=1)


def patch_counts(pred, label, uncertainty, shape, spec: PatchSpec, threshold: float,
                 valid: Optional[np.ndarray] = None) -> PatchCounts:
    """Tile one frame and classify each patch; partial edge patches are kept."""
    if shape is None or len(shape) != 2:
        raise InputError(f"PAvPU needs a 2D frame shape, got {shape!r}")
    pred = np.asarray(pred).reshape(shape)
    label = np.asarray(label).reshape(shape)
    u = np.asarray(uncertainty, dtype=np.float64).reshape(shape)
    valid = np.ones(shape, bool) if valid is None else np.asarray(valid, bool).reshape(shape)
    n = _patch_sums(valid.astype(np.int64), spec.height, spec.width)
    hits = _patch_sums((valid & (pred == label)).astype(np.int64), spec.height, spec.width)
    usum = _patch_sums(np.where(valid, u, 0.0), spec.height, spec.width)
    used = n > 0
    n, hits, usum = n[used], hits[used], usum[used]
    accurate = hits / n > spec.accuracy_threshold
    certain = usum / n <= threshold
    return PatchCounts(
        int((accurate & certain).sum()),
        int((accurate & ~certain).sum()),
        int((~accurate & certain).sum()),
        int((~accurate & ~certain).sum()),
    )


def pavpu(pred, label, uncertainty, shape, spec: Optional[PatchSpec] = None,
          valid: Optional[np.ndarray] = None) -> dict[str, Optional[float]]:
    """Patch accuracy versus patch uncertainty for one frame.

    A patch is accurate when its pixel accuracy exceeds the accuracy threshold
    and certain when its mean uncertainty is at most the uncertainty threshold.
    """
    spec = spec or PatchSpec()
    u = np.asarray(uncertainty, dtype=np.float64)
    threshold = resolve_threshold(spec, [u], None if valid is None else [valid])
    return patch_counts(pred, label, u, shape, spec, threshold, valid).metrics()


def resolve_threshold(spec: PatchSpec, uncertainties, valid=None) -> float:
    if spec.uncertainty_threshold != "mean":
        return float(spec.uncertainty_threshold)
    total, count = 0.0, 0
    for i, u in enumerate(uncertainties):
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        if valid is not None:
            u = u[np.asarray(valid[i], bool).reshape(-1)]
        total += float(u.sum())
        count += u.size
    if count == 0:
        raise InputError("no evaluated pixels to take the mean uncertainty over")
    return total / count
