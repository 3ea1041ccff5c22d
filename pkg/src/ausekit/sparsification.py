"""Per-class sparsification curves, oracle curves and AUSE.

Class ``c`` is evaluated over its own population: the pooled points that
are labelled ``c`` or predicted as ``c``. Other points cannot change
IoU_c, so leaving them out keeps the removal-fraction axis meaningful for
rare classes. A class whose points are all errors then has IoU 0 at every
step, and its AUSE is exactly zero.
"""
from __future__ import annotations

import logging
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import InputError
from .metrics import (
    EMPTY_IOU_CONVENTION,
    ClassConfig,
    ConfusionMatrix,
    FrameRecord,
    check_ids,
    confusion_matrix,
    iou_per_class,
    miou,
)
from .uncertainty import (
    aleatoric_uncertainty,
    mean_softmax,
    mutual_information,
    normalize_uncertainty,
    predictive_entropy,
)

log = logging.getLogger(__name__)

DEFAULT_STEPS = 100
DEFAULT_BINS = 4096
UNCERTAINTY_KINDS = ("entropy", "mutual_information", "aleatoric", "precomputed")
REPORT_SCHEMA = 1


@dataclass(frozen=True)
class FractionGrid:
    """Removal fractions ``k / K`` for ``k = 0 .. K-1``."""

    K: int = DEFAULT_STEPS

    def __post_init__(self):
        if self.K < 2:
            raise InputError(f"need at least 2 sparsification steps, got {self.K}")

    @property
    def fractions(self) -> np.ndarray:
        return np.arange(self.K, dtype=np.float64) / self.K

    def removal_counts(self, n: int) -> np.ndarray:
        """Points removed at each step, ``floor(k * n / K)`` in exact integer arithmetic."""
        return (np.arange(self.K, dtype=np.int64) * int(n)) // self.K


def _as_grid(grid) -> FractionGrid:
    if grid is None:
        return FractionGrid()
    if isinstance(grid, FractionGrid):
        return grid
    return FractionGrid(int(grid))


def uncertainty_ranking(u: np.ndarray) -> np.ndarray:
    """Indices by descending uncertainty; ties keep ascending index order."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    bad = np.flatnonzero(~np.isfinite(u))
    if bad.size:
        raise InputError(f"non-finite uncertainty at index {bad[0]}")
    return np.argsort(-u, kind="stable")


def oracle_ranking(pred: np.ndarray, label: np.ndarray, c: int) -> np.ndarray:
    """Best removal order for IoU_c: class-c errors, then bystanders, then TPs of c."""
    pred = np.asarray(pred).reshape(-1)
    label = np.asarray(label).reshape(-1)
    is_pred = pred == c
    is_label = label == c
    err = is_pred != is_label
    tp = is_pred & is_label
    return np.concatenate(
        [np.flatnonzero(err), np.flatnonzero(~err & ~tp), np.flatnonzero(tp)]
    )


def _check_permutation(ranking: np.ndarray, n: int):
    if ranking.size != n:
        raise InputError(f"ranking has {ranking.size} entries for {n} points")
    if n and (ranking.min() < 0 or ranking.max() >= n or
              np.bincount(ranking, minlength=n).max() != 1):
        raise InputError("ranking is not a permutation of the evaluated points")


def _removed_before(flags: np.ndarray, m: np.ndarray) -> np.ndarray:
    prefix = np.concatenate([[0], np.cumsum(flags, dtype=np.int64)])
    return prefix[m]


def _iou(tp, fp, fn) -> np.ndarray:
    tp = np.asarray(tp, dtype=np.float64)
    denom = tp + fp + fn
    out = np.ones_like(tp)
    nz = denom > 0
    out[nz] = tp[nz] / denom[nz]
    return out


def sparsification_curve(
    pred: np.ndarray,
    label: np.ndarray,
    ranking: np.ndarray,
    c: int,
    grid: FractionGrid | int | None = None,
    validate: bool = True,
) -> np.ndarray:
    """IoU_c after removing the first ``floor(f_k * N)`` ranked points, for every step."""
    grid = _as_grid(grid)
    pred = np.asarray(pred).reshape(-1)
    label = np.asarray(label).reshape(-1)
    ranking = np.asarray(ranking, dtype=np.int64).reshape(-1)
    n = label.size
    if validate:
        _check_permutation(ranking, n)
    p = pred[ranking] == c
    g = label[ranking] == c
    tp_f, fp_f, fn_f = p & g, p & ~g, ~p & g
    m = grid.removal_counts(n)
    tp = tp_f.sum() - _removed_before(tp_f, m)
    fp = fp_f.sum() - _removed_before(fp_f, m)
    fn = fn_f.sum() - _removed_before(fn_f, m)
    return _iou(tp, fp, fn)


def oracle_curve_from_counts(tp: int, errors: int, grid: FractionGrid | int | None = None) -> np.ndarray:
    """Closed-form oracle curve of a class population with ``tp`` hits and ``errors`` misses."""
    grid = _as_grid(grid)
    m = grid.removal_counts(tp + errors)
    err_left = np.maximum(errors - m, 0)
    tp_left = tp - np.maximum(m - errors, 0)
    return _iou(tp_left, err_left, 0)


def ause(oracle, sparse, grid: FractionGrid | int | None = None) -> dict[str, float]:
    """Area between oracle and sparsification curves.

    ``ause_normalized`` is the trapezoidal area over ``[0, f_{K-1}]`` divided by
    the domain length. ``ause_paper_scale`` is the plain sum of the error over
    the steps.
    """
    grid = _as_grid(grid)
    oracle = np.asarray(oracle, dtype=np.float64)
    sparse = np.asarray(sparse, dtype=np.float64)
    if oracle.shape != (grid.K,) or sparse.shape != (grid.K,):
        raise InputError(
            f"curves of shape {oracle.shape} and {sparse.shape} do not match a {grid.K}-step grid"
        )
    err = oracle - sparse
    f = grid.fractions
    area = float(np.sum((err[1:] + err[:-1]) * 0.5 * np.diff(f)))
    return {"ause_normalized": float(area / f[-1]), "ause_paper_scale": float(err.sum())}


@dataclass
class ClassCurves:
    class_id: int
    name: str
    present: bool
    ignored: bool
    iou: float
    num_points: int
    ause_normalized: float
    ause_paper_scale: float
    oracle: list[float]
    sparsification: list[float]
    error: list[float]
    mean_uncertainty: list[Optional[float]]
    std_uncertainty: list[Optional[float]]


@dataclass
class SparsificationReport:
    uncertainty_kind: str
    mode: str
    steps: int
    fractions: list[float]
    num_points: int
    num_ignored: int
    miou: float
    mean_ause_normalized: float
    mean_ause_paper_scale: float
    mean_oracle: list[float]
    mean_sparsification: list[float]
    mean_error: list[float]
    mean_uncertainty: list[Optional[float]]
    std_uncertainty: list[Optional[float]]
    classes: list[ClassCurves] = field(default_factory=list)
    bins: Optional[int] = None
    iou_convention: str = EMPTY_IOU_CONVENTION
    schema: int = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SparsificationReport":
        d = dict(d)
        if d.get("schema") != REPORT_SCHEMA:
            raise InputError(f"unsupported report schema {d.get('schema')!r}")
        d["classes"] = [ClassCurves(**c) for c in d.get("classes", [])]
        return cls(**d)

    def class_by_name(self, name: str) -> ClassCurves:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)


def _floats(a) -> list[float]:
    return [float(x) for x in np.asarray(a, dtype=np.float64)]


def _band(sum_left: np.ndarray, sq_left: np.ndarray, n_left: np.ndarray):
    mean = sum_left / n_left
    var = np.maximum(sq_left / n_left - mean * mean, 0.0)
    return _floats(mean), _floats(np.sqrt(var))


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def frame_seed(seed: int, frame_id: str) -> list[int]:
    return [int(seed), zlib.crc32(frame_id.encode())]


def frame_uncertainty(
    frame: FrameRecord, kind: str, config: ClassConfig, seed: int = 0
) -> np.ndarray:
    """Per-point uncertainty of one frame; entropy-like kinds are normalised by ``ln C``."""
    C = config.num_classes
    if kind == "precomputed":
        if frame.uncertainty is None:
            raise InputError(f"frame {frame.frame_id!r} has no precomputed uncertainty")
        return frame.uncertainty
    if kind in ("entropy", "mutual_information"):
        if frame.samples is None:
            raise InputError(f"frame {frame.frame_id!r} has no MC samples for {kind}")
        if frame.samples.num_classes != C:
            raise InputError(
                f"frame {frame.frame_id!r}: samples have {frame.samples.num_classes} classes, config has {C}"
            )
        if kind == "entropy":
            u = predictive_entropy(mean_softmax(frame.samples)[0])
        else:
            u = mutual_information(frame.samples)
        return normalize_uncertainty(u, C)
    if kind == "aleatoric":
        if frame.logit_field is None:
            raise InputError(f"frame {frame.frame_id!r} has no logit mean/spread for aleatoric")
        if frame.logit_field.num_classes != C:
            raise InputError(
                f"frame {frame.frame_id!r}: logit field has {frame.logit_field.num_classes} classes, config has {C}"
            )
        h, _ = aleatoric_uncertainty(frame.logit_field, frame_seed(seed, frame.frame_id))
        return normalize_uncertainty(h, C)
    raise InputError(f"unknown uncertainty kind {kind!r}; choose from {', '.join(UNCERTAINTY_KINDS)}")


@dataclass
class _FramePart:
    pred: np.ndarray
    label: np.ndarray
    u: np.ndarray
    cm: ConfusionMatrix


def _prepare(frame: FrameRecord, kind: str, config: ClassConfig, seed: int) -> _FramePart:
    check_ids(frame.pred, frame.label, config, frame.frame_id)
    u = frame_uncertainty(frame, kind, config, seed)
    cm = confusion_matrix(frame.pred, frame.label, config, frame.frame_id)
    keep = ~config.ignore_mask(frame.label)
    if keep.all():
        return _FramePart(frame.pred, frame.label, u, cm)
    return _FramePart(frame.pred[keep], frame.label[keep], u[keep], cm)


def _sorted_frames(frames: Iterable[FrameRecord]) -> list[FrameRecord]:
    frames = list(frames)
    if not frames:
        raise InputError("no frames to evaluate")
    return sorted(frames, key=lambda f: f.frame_id)


def _assemble(
    kind, mode, grid, config, cm, per_class, band, bins=None
) -> SparsificationReport:
    ious, present = iou_per_class(cm)
    evaluated = np.array([c not in config.ignore_ids for c in range(config.num_classes)])
    present = present & evaluated
    classes = []
    for c in range(config.num_classes):
        oracle, sparse, mean_u, std_u, n_c = per_class[c]
        a = ause(oracle, sparse, grid)
        classes.append(ClassCurves(
            class_id=c,
            name=config.names[c],
            present=bool(present[c]),
            ignored=c in config.ignore_ids,
            iou=float(ious[c]),
            num_points=int(n_c),
            ause_normalized=a["ause_normalized"],
            ause_paper_scale=a["ause_paper_scale"],
            oracle=_floats(oracle),
            sparsification=_floats(sparse),
            error=_floats(np.asarray(oracle) - np.asarray(sparse)),
            mean_uncertainty=mean_u,
            std_uncertainty=std_u,
        ))
    used = [cc for cc in classes if cc.present]
    if used:
        mean_o = np.mean([cc.oracle for cc in used], axis=0)
        mean_s = np.mean([cc.sparsification for cc in used], axis=0)
        mean_an = float(np.mean([cc.ause_normalized for cc in used]))
        mean_ap = float(np.mean([cc.ause_paper_scale for cc in used]))
    else:
        mean_o = mean_s = np.ones(grid.K)
        mean_an = mean_ap = 0.0
    return SparsificationReport(
        uncertainty_kind=kind,
        mode=mode,
        steps=grid.K,
        fractions=_floats(grid.fractions),
        num_points=int(cm.counts.sum()),
        num_ignored=int(cm.ignored),
        miou=miou(ious, present),
        mean_ause_normalized=mean_an,
        mean_ause_paper_scale=mean_ap,
        mean_oracle=_floats(mean_o),
        mean_sparsification=_floats(mean_s),
        mean_error=_floats(mean_o - mean_s),
        mean_uncertainty=band[0],
        std_uncertainty=band[1],
        classes=classes,
        bins=bins,
    )


def _empty_class(grid: FractionGrid):
    ones = np.ones(grid.K)
    return ones, ones, [None] * grid.K, [None] * grid.K, 0


def _exact_band(u_ranked: np.ndarray, grid: FractionGrid):
    n = u_ranked.size
    if n == 0:
        return [None] * grid.K, [None] * grid.K
    m = grid.removal_counts(n)
    s = np.concatenate([np.cumsum(u_ranked[::-1])[::-1], [0.0]])
    q = np.concatenate([np.cumsum((u_ranked * u_ranked)[::-1])[::-1], [0.0]])
    return _band(s[m], q[m], (n - m).astype(np.float64))


def evaluate_dataset(
    frames: Iterable[FrameRecord],
    uncertainty_kind: str,
    config: ClassConfig,
    grid: FractionGrid | int | None = None,
    workers: int = 1,
    seed: int = 0,
) -> SparsificationReport:
    """Pool every evaluated point of every frame and build the full report by exact sorting.

    Frames are pooled in ``frame_id`` order so the result does not depend on
    the order they are passed in or on ``workers``.
    """
    grid = _as_grid(grid)
    frames = _sorted_frames(frames)
    parts = _map(lambda f: _prepare(f, uncertainty_kind, config, seed), frames, workers)
    cm = parts[0].cm
    for p in parts[1:]:
        cm = cm + p.cm
    pred = np.concatenate([p.pred for p in parts])
    label = np.concatenate([p.label for p in parts])
    u = np.concatenate([p.u for p in parts])
    del parts

    order = uncertainty_ranking(u)
    pr, lr, ur = pred[order], label[order], u[order]
    del order, pred, label, u
    band = _exact_band(ur, grid)

    def one_class(c: int):
        if c in config.ignore_ids:
            return _empty_class(grid)
        pos = np.flatnonzero((pr == c) | (lr == c))
        n_c = pos.size
        if n_c == 0:
            return _empty_class(grid)
        p_c, l_c = pr[pos], lr[pos]
        identity = np.arange(n_c)
        sparse = sparsification_curve(p_c, l_c, identity, c, grid, validate=False)
        oracle = sparsification_curve(p_c, l_c, oracle_ranking(p_c, l_c, c), c, grid, validate=False)
        mean_u, std_u = _exact_band(ur[pos], grid)
        return oracle, sparse, mean_u, std_u, n_c

    per_class = _map(one_class, list(range(config.num_classes)), workers)
    return _assemble(uncertainty_kind, "exact", grid, config, cm, per_class, band)


@dataclass
class _Histograms:
    tp: np.ndarray
    err: np.ndarray
    su: np.ndarray
    sq: np.ndarray
    all_n: np.ndarray
    all_su: np.ndarray
    all_sq: np.ndarray
    cm: ConfusionMatrix

    def __add__(self, o: "_Histograms") -> "_Histograms":
        return _Histograms(*(a + b for a, b in zip(
            (self.tp, self.err, self.su, self.sq, self.all_n, self.all_su, self.all_sq, self.cm),
            (o.tp, o.err, o.su, o.sq, o.all_n, o.all_su, o.all_sq, o.cm),
        )))


def _frame_histograms(frame, kind, config, bins, seed) -> _Histograms:
    part = _prepare(frame, kind, config, seed)
    u = part.u
    bad = np.flatnonzero((u < 0) | (u > 1))
    if bad.size:
        raise InputError(
            f"frame {frame.frame_id!r}: binned evaluation needs uncertainty in [0, 1]; "
            f"got {u[bad[0]]} at index {bad[0]}"
        )
    C, B = config.num_classes, bins
    b = np.minimum((u * B).astype(np.int64), B - 1)
    pred = part.pred.astype(np.int64)
    label = part.label.astype(np.int64)
    hit = pred == label
    # each error belongs to two class populations: its label and its prediction
    lab_key = label * B + b
    err_key = np.concatenate([lab_key[~hit], (pred * B + b)[~hit]])
    u_err = np.concatenate([u[~hit], u[~hit]])
    size = C * B

    def hist(keys, w=None):
        return np.bincount(keys, weights=w, minlength=size).reshape(C, B)

    tp = hist(lab_key[hit]).astype(np.float64)
    err = hist(err_key).astype(np.float64)
    su = hist(lab_key[hit], u[hit]) + hist(err_key, u_err)
    sq = hist(lab_key[hit], u[hit] ** 2) + hist(err_key, u_err ** 2)
    all_n = np.bincount(b, minlength=B).astype(np.float64)
    all_su = np.bincount(b, weights=u, minlength=B)
    all_sq = np.bincount(b, weights=u * u, minlength=B)
    return _Histograms(tp, err, su, sq, all_n, all_su, all_sq, part.cm)


def _binned_removed(n_bins: np.ndarray, values: list[np.ndarray], m: np.ndarray) -> list[np.ndarray]:
    """Amount of each per-bin quantity removed after ``m`` points, highest bin first.

    Within the bin straddling the cut, removal is proportional to bin content.
    """
    n_desc = n_bins[::-1]
    cum_n = np.concatenate([[0.0], np.cumsum(n_desc)])
    j = np.searchsorted(cum_n, m, side="right") - 1  # whole bins removed
    j = np.minimum(j, n_desc.size - 1)
    r = m - cum_n[j]
    out = []
    for v in values:
        v_desc = v[::-1]
        cum_v = np.concatenate([[0.0], np.cumsum(v_desc)])
        part = np.zeros_like(r)
        nz = r > 0
        part[nz] = r[nz] * v_desc[j[nz]] / n_desc[j[nz]]
        out.append(cum_v[j] + part)
    return out


def binned_evaluate(
    frames: Iterable[FrameRecord],
    uncertainty_kind: str,
    config: ClassConfig,
    grid: FractionGrid | int | None = None,
    bins: int = DEFAULT_BINS,
    workers: int = 1,
    seed: int = 0,
) -> SparsificationReport:
    """Streaming approximation of :func:`evaluate_dataset` from equal-width histograms.

    Memory is ``O(bins * C)`` regardless of the number of points. Uncertainty
    must already lie in ``[0, 1]``.
    """
    grid = _as_grid(grid)
    if bins < 1:
        raise InputError(f"bins must be >= 1, got {bins}")
    if bins < 256:
        warnings.warn(f"{bins} bins is too coarse for a faithful ranking; use >= 256", stacklevel=2)
    frames = _sorted_frames(frames)
    hists = _map(lambda f: _frame_histograms(f, uncertainty_kind, config, bins, seed), frames, workers)
    h = hists[0]
    for other in hists[1:]:
        h = h + other
    del hists

    n_all = int(h.all_n.sum())
    if n_all:
        m = grid.removal_counts(n_all).astype(np.float64)
        su, sq = _binned_removed(h.all_n, [h.all_su, h.all_sq], m)
        band = _band(h.all_su.sum() - su, h.all_sq.sum() - sq, n_all - m)
    else:
        band = ([None] * grid.K, [None] * grid.K)

    def one_class(c: int):
        n_bins = h.tp[c] + h.err[c]
        n_c = int(n_bins.sum())
        if c in config.ignore_ids or n_c == 0:
            return _empty_class(grid)
        T = int(h.tp[c].sum())
        m = grid.removal_counts(n_c).astype(np.float64)
        tp_out, su, sq = _binned_removed(n_bins, [h.tp[c], h.su[c], h.sq[c]], m)
        left = n_c - m
        sparse = (T - tp_out) / left
        oracle = oracle_curve_from_counts(T, n_c - T, grid)
        mean_u, std_u = _band(h.su[c].sum() - su, h.sq[c].sum() - sq, left)
        return oracle, sparse, mean_u, std_u, n_c

    per_class = _map(one_class, list(range(config.num_classes)), workers)
    return _assemble(uncertainty_kind, "binned", grid, config, h.cm, per_class, band, bins=bins)
