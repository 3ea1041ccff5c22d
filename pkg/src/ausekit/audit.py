"""Label-problem candidates: connected clusters of confident misclassifications."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import InputError

DEFAULT_TAU = 0.1
DEFAULT_MIN_SIZE = 5
_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass
class AuditFinding:
    frame_id: str
    pixel_indices: list[tuple[int, int]]
    size: int
    label_class: int
    predicted_class: int
    mean_uncertainty: float
    max_uncertainty: float
    score: float = 0.0

    @property
    def first_pixel(self) -> tuple[int, int]:
        return self.pixel_indices[0]

    def to_json(self, names: Optional[Sequence[str]] = None) -> str:
        d = asdict(self)
        d["pixel_indices"] = [list(p) for p in self.pixel_indices]
        rows = [p[0] for p in self.pixel_indices]
        cols = [p[1] for p in self.pixel_indices]
        d["bbox"] = [min(rows), min(cols), max(rows), max(cols)]
        if names is not None:
            d["label_name"] = names[self.label_class]
            d["predicted_name"] = names[self.predicted_class]
        d["type"] = "finding"
        return json.dumps(d)


def confident_error_mask(pred, label, uncertainty, tau: float = DEFAULT_TAU,
                         ignore_ids: Iterable[int] = ()) -> np.ndarray:
    """Misclassified, non-ignored points whose normalised uncertainty is at most ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise InputError(f"tau must lie in [0, 1], got {tau}")
    pred = np.asarray(pred)
    label = np.asarray(label)
    u = np.asarray(uncertainty, dtype=np.float64)
    ignore = list(ignore_ids)
    mask = (pred != label) & (u <= tau)
    if ignore:
        mask &= ~np.isin(label, ignore)
    return mask


def _majority(values: np.ndarray) -> int:
    return int(np.argmax(np.bincount(values)))


def _finding(frame_id, rows, cols, pred, label, u) -> AuditFinding:
    p = pred.astype(np.int64)
    predicted = _majority(p)
    # every pixel is an error, so pixels predicted as `predicted` carry another label
    other = label[label != predicted].astype(np.int64)
    return AuditFinding(
        frame_id=frame_id,
        pixel_indices=[(int(r), int(c)) for r, c in zip(rows, cols)],
        size=int(rows.size),
        label_class=_majority(other),
        predicted_class=predicted,
        mean_uncertainty=float(u.mean()),
        max_uncertainty=float(u.max()),
    )


def cluster_findings(mask, shape, pred, label, uncertainty, min_size: int = DEFAULT_MIN_SIZE,
                     frame_id: str = "<frame>") -> list[AuditFinding]:
    """8-connected components of ``mask`` with at least ``min_size`` points.

    Components come out ordered by their first pixel in raster order. A flat
    frame (``shape`` of length 1 or None) is split into runs of consecutive
    indices instead, reported as row 0.
    """
    mask = np.asarray(mask, dtype=bool)
    pred = np.asarray(pred).reshape(-1)
    label = np.asarray(label).reshape(-1)
    u = np.asarray(uncertainty, dtype=np.float64).reshape(-1)
    flat = shape is None or len(shape) == 1
    if flat:
        grid = mask.reshape(1, -1)
        structure = np.array([[0, 0, 0], [1, 1, 1], [0, 0, 0]], dtype=bool)
    else:
        if len(shape) != 2:
            raise InputError(f"audit needs a 1D or 2D frame, got shape {shape!r}")
        grid = mask.reshape(shape)
        structure = _EIGHT
    labels, count = ndimage.label(grid, structure=structure)
    if count == 0:
        return []
    flat_lab = labels.reshape(-1)
    idx = np.flatnonzero(flat_lab)
    comp = flat_lab[idx]
    order = np.argsort(comp, kind="stable")
    idx, comp = idx[order], comp[order]
    bounds = np.flatnonzero(np.diff(comp)) + 1
    W = grid.shape[1]
    groups = [g for g in np.split(idx, bounds) if g.size >= min_size]
    groups.sort(key=lambda g: g[0])
    out = []
    for members in groups:
        rows, cols = np.divmod(members, W)
        out.append(_finding(frame_id, rows, cols, pred[members], label[members], u[members]))
    return out


def finding_score(f: AuditFinding) -> float:
    return f.size * (1.0 - f.mean_uncertainty)


def rank_findings(findings: Iterable[AuditFinding]) -> list[AuditFinding]:
    """Sort by ``size * (1 - mean_uncertainty)`` descending, then frame id and first pixel."""
    findings = list(findings)
    for f in findings:
        f.score = finding_score(f)
    return sorted(findings, key=lambda f: (-f.score, f.frame_id, f.first_pixel))
