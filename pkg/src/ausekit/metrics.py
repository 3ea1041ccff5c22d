"""Confusion matrices, per-class IoU and mIoU."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .errors import InputError

if TYPE_CHECKING:
    from .uncertainty import LogitGaussianField, MCSampleSet

# Reported in every report header so the absent-class convention is never implicit.
EMPTY_IOU_CONVENTION = (
    "IoU is 1.0 with present=false when a class has TP+FP+FN = 0; "
    "absent classes are excluded from all means"
)


@dataclass
class ClassConfig:
    num_classes: int
    names: list[str] = field(default_factory=list)
    ignore_ids: frozenset[int] = frozenset()
    frequencies: Optional[list[float]] = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise InputError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.names:
            self.names = [f"class_{c}" for c in range(self.num_classes)]
        self.names = [str(n) for n in self.names]
        if len(self.names) != self.num_classes:
            raise InputError(
                f"expected {self.num_classes} class names, got {len(self.names)}"
            )
        self.ignore_ids = frozenset(int(i) for i in self.ignore_ids)
        if any(i < 0 for i in self.ignore_ids):
            raise InputError("ignore ids must be non-negative")
        if self.frequencies is not None:
            freqs = [float(f) for f in self.frequencies]
            if len(freqs) != self.num_classes:
                raise InputError(
                    f"expected {self.num_classes} frequencies, got {len(freqs)}"
                )
            if any(not 0.0 <= f <= 1.0 for f in freqs):
                raise InputError("class frequencies must lie in [0, 1]")
            self.frequencies = freqs

    @property
    def evaluated_classes(self) -> list[int]:
        return [c for c in range(self.num_classes) if c not in self.ignore_ids]

    def ignore_mask(self, label: np.ndarray) -> np.ndarray:
        """Boolean mask of points whose label is in ``ignore_ids``."""
        if not self.ignore_ids:
            return np.zeros(label.shape, dtype=bool)
        return np.isin(label, np.fromiter(self.ignore_ids, dtype=np.int64))


@dataclass
class FrameRecord:
    """One evaluation frame. Arrays are stored flat; ``shape`` keeps the 2D layout."""

    frame_id: str
    pred: np.ndarray
    label: np.ndarray
    shape: tuple[int, ...] = ()
    uncertainty: Optional[np.ndarray] = None
    samples: Optional["MCSampleSet"] = None
    logit_field: Optional["LogitGaussianField"] = None

    def __post_init__(self):
        pred = np.asarray(self.pred)
        label = np.asarray(self.label)
        if not self.shape:
            self.shape = tuple(label.shape)
        self.shape = tuple(int(s) for s in self.shape)
        self.pred = pred.reshape(-1)
        self.label = label.reshape(-1)
        n = self.label.size
        if self.pred.size != n:
            raise InputError(
                f"frame {self.frame_id!r}: pred has {self.pred.size} points, label has {n}"
            )
        if int(np.prod(self.shape)) != n:
            raise InputError(f"frame {self.frame_id!r}: shape {self.shape} does not hold {n} points")
        if self.uncertainty is not None:
            u = np.asarray(self.uncertainty, dtype=np.float64).reshape(-1)
            if u.size != n:
                raise InputError(
                    f"frame {self.frame_id!r}: uncertainty has {u.size} points, expected {n}"
                )
            bad = np.flatnonzero(~np.isfinite(u))
            if bad.size:
                raise InputError(
                    f"frame {self.frame_id!r}: non-finite uncertainty at index {bad[0]}"
                )
            self.uncertainty = u
        if self.samples is not None and self.samples.num_points != n:
            raise InputError(
                f"frame {self.frame_id!r}: samples cover {self.samples.num_points} points, expected {n}"
            )
        if self.logit_field is not None and self.logit_field.num_points != n:
            raise InputError(
                f"frame {self.frame_id!r}: logit field covers {self.logit_field.num_points} points, expected {n}"
            )

    @property
    def num_points(self) -> int:
        return self.label.size


def check_ids(pred: np.ndarray, label: np.ndarray, config: ClassConfig, frame_id: str = "<frame>"):
    """Raise InputError naming the first point with an id outside the class table."""
    C = config.num_classes
    ignored = config.ignore_mask(label)
    bad_label = np.flatnonzero(((label < 0) | (label >= C)) & ~ignored)
    if bad_label.size:
        i = bad_label[0]
        raise InputError(f"frame {frame_id!r}: label id {label[i]} out of range at index {i}")
    bad_pred = np.flatnonzero((pred < 0) | (pred >= C))
    if bad_pred.size:
        i = bad_pred[0]
        raise InputError(f"frame {frame_id!r}: predicted id {pred[i]} out of range at index {i}")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    ignored: int = 0

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64), 0)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.ignored

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise ValueError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts, self.ignored + other.ignored)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.ignored == other.ignored and np.array_equal(self.counts, other.counts)

    def tp_fp_fn(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        tp = np.diag(self.counts).copy()
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        return tp, fp, fn


def confusion_matrix(
    pred: Sequence[int] | np.ndarray,
    label: Sequence[int] | np.ndarray,
    config: ClassConfig,
    frame_id: str = "<frame>",
) -> ConfusionMatrix:
    """Tally ``counts[g, p]`` over points whose label is not ignored."""
    pred = np.asarray(pred).reshape(-1)
    label = np.asarray(label).reshape(-1)
    if pred.size != label.size:
        raise InputError(
            f"frame {frame_id!r}: pred has {pred.size} points, label has {label.size}"
        )
    check_ids(pred, label, config, frame_id)
    C = config.num_classes
    keep = ~config.ignore_mask(label)
    flat = label[keep].astype(np.int64) * C + pred[keep].astype(np.int64)
    counts = np.bincount(flat, minlength=C * C).reshape(C, C)
    return ConfusionMatrix(counts, int(label.size - keep.sum()))


def iou_per_class(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(iou, present)``; absent classes get IoU 1.0 and present False."""
    tp, fp, fn = cm.tp_fp_fn()
    denom = tp + fp + fn
    present = denom > 0
    iou = np.ones(cm.num_classes, dtype=np.float64)
    iou[present] = tp[present] / denom[present]
    return iou, present


def miou(ious: Sequence[float] | np.ndarray, present: Sequence[bool] | np.ndarray) -> float:
    ious = np.asarray(ious, dtype=np.float64)
    present = np.asarray(present, dtype=bool)
    if ious.shape != present.shape:
        raise ValueError("ious and present flags differ in length")
    if not present.any():
        return 1.0
    return float(ious[present].mean())
