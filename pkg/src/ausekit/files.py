"""Class configs, dataset manifests, frame loading and report/curve emission.

Class config JSON::

    {"num_classes": 3, "names": ["road", "car", "person"],
     "ignore_ids": [255], "frequencies": [0.6, 0.3, 0.1]}

Manifest JSON (paths relative to the manifest's directory)::

    {"schema": 1, "root": ".", "classes": "classes.json",
     "frames": ["seq08_000000", ...],
     "suffixes": {"label": "_label.npy", "pred": "_pred.npy",
                  "uncertainty": "_uncertainty.npy", "samples": "_samples.npy",
                  "logit_mean": "_logit_mean.npy", "logit_std": "_logit_std.npy"}}

``label`` is required. Labels may be (N,) or (H, W); samples (T, N, C) or
(T, H, W, C); logit mean and spread (N, C) or (H, W, C).
"""
from __future__ import annotations

import csv
import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .metrics import ClassConfig, FrameRecord
from .npyio import load_array, save_array
from .sparsification import SparsificationReport
from .synth import CorruptedRegion
from .uncertainty import DEFAULT_LOGIT_SAMPLES, LogitGaussianField, MCSampleSet, mean_softmax

MANIFEST_SCHEMA = 1
SUFFIX_KEYS = ("label", "pred", "uncertainty", "samples", "logit_mean", "logit_std")
DEFAULT_SUFFIXES = {
    "label": "_label.npy",
    "pred": "_pred.npy",
    "uncertainty": "_uncertainty.npy",
    "samples": "_samples.npy",
    "logit_mean": "_logit_mean.npy",
    "logit_std": "_logit_std.npy",
}
CSV_COLUMNS = ("fraction", "oracle", "sparsification", "error", "mean_uncertainty", "std_uncertainty")


def _read_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON: {e}") from None


def load_class_config(path) -> ClassConfig:
    d = _read_json(path)
    try:
        return ClassConfig(
            num_classes=int(d["num_classes"]),
            names=list(d.get("names") or []),
            ignore_ids=frozenset(d.get("ignore_ids") or []),
            frequencies=d.get("frequencies"),
        )
    except KeyError as e:
        raise InputError(f"{path}: missing field {e}") from None


def class_config_dict(config: ClassConfig) -> dict:
    d = {
        "num_classes": config.num_classes,
        "names": list(config.names),
        "ignore_ids": sorted(config.ignore_ids),
    }
    if config.frequencies is not None:
        d["frequencies"] = list(config.frequencies)
    return d


def save_class_config(path, config: ClassConfig) -> None:
    with open(path, "w") as f:
        json.dump(class_config_dict(config), f, indent=2)
        f.write("\n")


@dataclass
class DatasetManifest:
    root: Path
    frames: list[str]
    suffixes: dict[str, str]
    classes: Optional[Path] = None

    def path(self, stem: str, key: str) -> Path:
        return self.root / (stem + self.suffixes[key])

    def has(self, key: str) -> bool:
        return key in self.suffixes


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    d = _read_json(path)
    if d.get("schema", MANIFEST_SCHEMA) != MANIFEST_SCHEMA:
        raise InputError(f"{path}: unsupported manifest schema {d.get('schema')!r}")
    base = path.parent
    frames = d.get("frames")
    if not isinstance(frames, list) or not frames:
        raise InputError(f"{path}: 'frames' must be a non-empty list of stems")
    suffixes = dict(d.get("suffixes") or {})
    unknown = set(suffixes) - set(SUFFIX_KEYS)
    if unknown:
        raise InputError(f"{path}: unknown suffix keys {sorted(unknown)}")
    if "label" not in suffixes:
        raise InputError(f"{path}: a 'label' suffix is required")
    if not ({"pred", "samples", "logit_mean"} & set(suffixes)):
        raise InputError(f"{path}: need a 'pred', 'samples' or 'logit_mean' suffix to get predictions")
    if ("logit_mean" in suffixes) != ("logit_std" in suffixes):
        raise InputError(f"{path}: 'logit_mean' and 'logit_std' must be given together")
    classes = d.get("classes")
    return DatasetManifest(
        root=(base / d.get("root", ".")),
        frames=[str(s) for s in frames],
        suffixes=suffixes,
        classes=(base / classes) if classes else None,
    )


def save_manifest(path, manifest: DatasetManifest) -> None:
    path = Path(path)
    d = {
        "schema": MANIFEST_SCHEMA,
        "root": os.path.relpath(manifest.root, path.parent),
        "frames": manifest.frames,
        "suffixes": manifest.suffixes,
    }
    if manifest.classes is not None:
        d["classes"] = os.path.relpath(manifest.classes, path.parent)
    with open(path, "w") as f:
        json.dump(d, f, indent=2)
        f.write("\n")


def _load(manifest: DatasetManifest, stem: str, key: str) -> np.ndarray:
    p = manifest.path(stem, key)
    if not p.exists():
        raise InputError(f"frame {stem!r}: missing {key} file {p}")
    return load_array(p)


def _points_by_class(arr: np.ndarray, n: int, what: str, stem: str) -> np.ndarray:
    if arr.ndim < 2 or int(np.prod(arr.shape[:-1])) != n:
        raise InputError(f"frame {stem!r}: {what} of shape {arr.shape} does not match {n} points")
    return arr.reshape(n, arr.shape[-1])


def load_frame(manifest: DatasetManifest, stem: str, logit_samples: int = DEFAULT_LOGIT_SAMPLES) -> FrameRecord:
    label = _load(manifest, stem, "label")
    if label.dtype.kind != "i":
        raise InputError(f"frame {stem!r}: labels must be integers, got {label.dtype}")
    shape = label.shape
    if len(shape) > 2:
        raise InputError(f"frame {stem!r}: labels must be 1D or 2D, got shape {shape}")
    n = label.size
    samples = field_ = unc = pred = None
    if manifest.has("samples"):
        probs = _load(manifest, stem, "samples")
        if probs.ndim < 3 or int(np.prod(probs.shape[1:-1])) != n:
            raise InputError(f"frame {stem!r}: samples of shape {probs.shape} do not match {n} points")
        samples = MCSampleSet(probs.reshape(probs.shape[0], n, probs.shape[-1]))
    if manifest.has("logit_mean"):
        mu = _points_by_class(_load(manifest, stem, "logit_mean"), n, "logit mean", stem)
        sd = _points_by_class(_load(manifest, stem, "logit_std"), n, "logit spread", stem)
        field_ = LogitGaussianField(mu, sd, logit_samples)
    if manifest.has("uncertainty"):
        unc = _load(manifest, stem, "uncertainty").reshape(-1)
    if manifest.has("pred"):
        pred = _load(manifest, stem, "pred")
        if pred.dtype.kind != "i":
            raise InputError(f"frame {stem!r}: predictions must be integers, got {pred.dtype}")
        if pred.size != n:
            raise InputError(f"frame {stem!r}: {pred.size} predictions for {n} labels")
    elif samples is not None:
        pred = mean_softmax(samples)[1]
    else:
        pred = np.argmax(field_.mu, axis=-1)
    return FrameRecord(stem, pred.reshape(-1), label.reshape(-1), shape, unc, samples, field_)


def load_frames(manifest: DatasetManifest, workers: int = 1, logit_samples: int = DEFAULT_LOGIT_SAMPLES) -> list[FrameRecord]:
    if workers <= 1:
        return [load_frame(manifest, s, logit_samples) for s in manifest.frames]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: load_frame(manifest, s, logit_samples), manifest.frames))


def write_frames(out_dir, frames: Sequence[FrameRecord], config: ClassConfig,
                 suffixes: Optional[dict[str, str]] = None) -> Path:
    """Write frames as NPY files plus ``classes.json`` and ``manifest.json``; return the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffixes = dict(suffixes or DEFAULT_SUFFIXES)
    used = {"label", "pred"}
    for fr in frames:
        shape = fr.shape
        save_array(out / (fr.frame_id + suffixes["label"]), fr.label.reshape(shape).astype(np.int32))
        save_array(out / (fr.frame_id + suffixes["pred"]), fr.pred.reshape(shape).astype(np.int32))
        if fr.uncertainty is not None:
            save_array(out / (fr.frame_id + suffixes["uncertainty"]), fr.uncertainty.reshape(shape))
            used.add("uncertainty")
        if fr.samples is not None:
            save_array(out / (fr.frame_id + suffixes["samples"]), fr.samples.probs.astype(np.float32))
            used.add("samples")
        if fr.logit_field is not None:
            save_array(out / (fr.frame_id + suffixes["logit_mean"]), fr.logit_field.mu)
            save_array(out / (fr.frame_id + suffixes["logit_std"]), fr.logit_field.sigma)
            used.update({"logit_mean", "logit_std"})
    for key in used:
        missing = [fr.frame_id for fr in frames if _lacks(fr, key)]
        if missing:
            raise InputError(f"frames {missing[:3]} lack {key}; every frame must carry the same fields")
    save_class_config(out / "classes.json", config)
    manifest = DatasetManifest(out, [f.frame_id for f in frames],
                               {k: suffixes[k] for k in SUFFIX_KEYS if k in used},
                               out / "classes.json")
    save_manifest(out / "manifest.json", manifest)
    return out / "manifest.json"


def _lacks(fr: FrameRecord, key: str) -> bool:
    return {
        "uncertainty": fr.uncertainty is None,
        "samples": fr.samples is None,
        "logit_mean": fr.logit_field is None,
        "logit_std": fr.logit_field is None,
    }.get(key, False)


def report_json(report: SparsificationReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def write_report(path, report: SparsificationReport) -> None:
    with open(path, "w") as f:
        f.write(report_json(report))


def read_report(path) -> SparsificationReport:
    return SparsificationReport.from_dict(_read_json(path))


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def write_curves_csv(out_dir, report: SparsificationReport) -> list[Path]:
    """One CSV per class plus ``mean.csv``; each holds one row per grid step."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def dump(path, oracle, sparse, error, mu, sd):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_COLUMNS)
            for row in zip(report.fractions, oracle, sparse, error, mu, sd):
                w.writerow(["" if v is None else repr(float(v)) for v in row])
        written.append(path)

    for c in report.classes:
        dump(out / f"class_{c.class_id:02d}_{_safe(c.name)}.csv",
             c.oracle, c.sparsification, c.error, c.mean_uncertainty, c.std_uncertainty)
    dump(out / "mean.csv", report.mean_oracle, report.mean_sparsification, report.mean_error,
         report.mean_uncertainty, report.std_uncertainty)
    return written


def write_ledger(path, ledger: Sequence[CorruptedRegion]) -> None:
    with open(path, "w") as f:
        json.dump([r.__dict__ for r in ledger], f, indent=2)
        f.write("\n")


def read_ledger(path) -> list[CorruptedRegion]:
    return [CorruptedRegion(**d) for d in _read_json(path)]
