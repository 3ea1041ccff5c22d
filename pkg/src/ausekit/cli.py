"""Command-line entry point: ``ausekit <command> [flags]``.

Exit codes: 0 success, 1 internal error, 2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import audit as audit_mod
from . import baselines as base_mod
from .errors import InputError
from .files import (
    load_class_config,
    load_frames,
    load_manifest,
    write_curves_csv,
    write_frames,
    write_ledger,
    write_report,
)
from .metrics import ClassConfig, FrameRecord
from .npyio import load_array, save_array
from .sparsification import (
    DEFAULT_STEPS,
    UNCERTAINTY_KINDS,
    binned_evaluate,
    evaluate_dataset,
    frame_seed,
    frame_uncertainty,
)
from .synth import CALIBRATION_MODES, LAYOUTS, ScenarioSpec, corrupt_labels, generate_scenario
from .uncertainty import (
    aleatoric_uncertainty,
    class_weights,
    mean_softmax,
    mutual_information,
    normalize_uncertainty,
    predictive_entropy,
)

log = logging.getLogger("ausekit")


def _shape(text: str) -> tuple[int, int]:
    try:
        h, w = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    return h, w


def _ids(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ids, got {text!r}") from None


def _shared(p: argparse.ArgumentParser, manifest: bool = True):
    if manifest:
        p.add_argument("--manifest", required=True, help="dataset manifest JSON")
        p.add_argument("--classes", help="class config JSON (overrides the manifest's)")
        p.add_argument("--uncertainty", choices=UNCERTAINTY_KINDS,
                       help="uncertainty source; inferred when the manifest offers exactly one")
        p.add_argument("--ignore-ids", type=_ids, default=None,
                       help="comma-separated label ids to exclude (added to the class config)")
        p.add_argument("--logit-samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="output path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ausekit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ause", help="per-class sparsification curves and AUSE")
    _shared(p)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--binned", type=int, metavar="B", help="histogram approximation with B bins")
    p.add_argument("--csv-dir", help="write one curve CSV per class here")

    p = sub.add_parser("uncertainty", help="derive entropy / MI / mean-softmax fields")
    _shared(p)
    p.add_argument("--normalize", action="store_true", help="divide entropies by ln C")

    p = sub.add_parser("baselines", help="ECE and PAvPU")
    _shared(p)
    p.add_argument("--ece-bins", type=int, default=base_mod.DEFAULT_ECE_BINS)
    p.add_argument("--patch", type=_shape, default=(4, 4), metavar="HxW")
    p.add_argument("--accuracy-threshold", type=float, default=0.5)
    p.add_argument("--uncertainty-threshold", default="mean",
                   help="normalised threshold in [0, 1] or 'mean'")

    p = sub.add_parser("audit", help="confident-error clusters as JSON lines")
    _shared(p)
    p.add_argument("--tau", type=float, default=audit_mod.DEFAULT_TAU)
    p.add_argument("--min-size", type=int, default=audit_mod.DEFAULT_MIN_SIZE)

    p = sub.add_parser("synth", help="write a synthetic scenario")
    _shared(p, manifest=False)
    p.add_argument("--num-classes", type=int, default=8)
    p.add_argument("--shape", type=_shape, default=(64, 64), metavar="HxW")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--layout", choices=LAYOUTS, default="striped")
    p.add_argument("--accuracy", type=float, default=0.8)
    p.add_argument("--calibration", choices=CALIBRATION_MODES, default="calibrated")
    p.add_argument("--mc-samples", type=int, default=4)
    p.add_argument("--with-samples", action="store_true", help="also write MC sample tensors")
    p.add_argument("--corrupt", type=float, metavar="RATE", help="inject label corruption")

    p = sub.add_parser("weights", help="inverse log-frequency class weights")
    p.add_argument("--frequencies", help="NPY file with C class frequencies")
    p.add_argument("--classes", help="class config JSON carrying 'frequencies'")
    p.add_argument("--out", help="write weights as .npy or .json")
    return ap


def _config(args, manifest) -> ClassConfig:
    path = args.classes or manifest.classes
    if path is None:
        raise InputError("no class config: pass --classes or set 'classes' in the manifest")
    config = load_class_config(path)
    if args.ignore_ids:
        config = ClassConfig(config.num_classes, config.names,
                             config.ignore_ids | set(args.ignore_ids), config.frequencies)
    return config


def _kind(args, frames: Sequence[FrameRecord]) -> str:
    if args.uncertainty:
        return args.uncertainty
    f = frames[0]
    sources = []
    if f.uncertainty is not None:
        sources.append("precomputed")
    if f.samples is not None:
        sources.append("entropy")
    if f.logit_field is not None:
        sources.append("aleatoric")
    if not sources:
        raise InputError("frames carry no uncertainty source")
    if len(sources) > 1:
        raise InputError(
            f"conflicting uncertainty sources ({', '.join(sources)}); choose one with --uncertainty"
        )
    return sources[0]


def _load(args):
    manifest = load_manifest(args.manifest)
    config = _config(args, manifest)
    frames = load_frames(manifest, args.threads, args.logit_samples)
    return manifest, config, frames


def cmd_ause(args) -> int:
    _, config, frames = _load(args)
    kind = _kind(args, frames)
    if args.binned is not None:
        report = binned_evaluate(frames, kind, config, args.steps, args.binned, args.threads, args.seed)
    else:
        report = evaluate_dataset(frames, kind, config, args.steps, args.threads, args.seed)
    out = Path(args.out or "report.json")
    write_report(out, report)
    if args.csv_dir:
        write_curves_csv(args.csv_dir, report)
    print(f"{'class':<20} {'present':>7} {'IoU':>6} {'AUSE':>8} {'AUSE(sum)':>10}")
    for c in report.classes:
        print(f"{c.name:<20} {str(c.present):>7} {c.iou:6.3f} {c.ause_normalized:8.4f} {c.ause_paper_scale:10.3f}")
    print(f"{'mean':<20} {'':>7} {report.miou:6.3f} {report.mean_ause_normalized:8.4f} "
          f"{report.mean_ause_paper_scale:10.3f}")
    log.info("wrote %s", out)
    return 0


def cmd_uncertainty(args) -> int:
    _, config, frames = _load(args)
    out = Path(args.out or "uncertainty")
    out.mkdir(parents=True, exist_ok=True)
    C = config.num_classes
    scale = (lambda u: normalize_uncertainty(u, C)) if args.normalize else (lambda u: u)
    for fr in frames:
        shape = fr.shape
        if fr.samples is None and fr.logit_field is None:
            raise InputError(f"frame {fr.frame_id!r} has neither MC samples nor logit fields")
        if fr.samples is not None:
            pbar, pred = mean_softmax(fr.samples)
            save_array(out / f"{fr.frame_id}_mean_softmax.npy", pbar.reshape(*shape, C))
            save_array(out / f"{fr.frame_id}_pred.npy", pred.reshape(shape).astype(np.int32))
            save_array(out / f"{fr.frame_id}_entropy.npy", scale(predictive_entropy(pbar)).reshape(shape))
            if fr.samples.T >= 2:
                save_array(out / f"{fr.frame_id}_mutual_information.npy",
                           scale(mutual_information(fr.samples)).reshape(shape))
        if fr.logit_field is not None:
            h, pred = aleatoric_uncertainty(fr.logit_field, frame_seed(args.seed, fr.frame_id))
            save_array(out / f"{fr.frame_id}_aleatoric.npy", scale(h).reshape(shape))
            if fr.samples is None:
                save_array(out / f"{fr.frame_id}_pred.npy", pred.reshape(shape).astype(np.int32))
    log.info("wrote %d frames to %s", len(frames), out)
    return 0


def cmd_baselines(args) -> int:
    _, config, frames = _load(args)
    kind = _kind(args, frames)
    t = args.uncertainty_threshold
    spec = base_mod.PatchSpec(args.patch[0], args.patch[1], args.accuracy_threshold,
                              t if t == "mean" else float(t))
    unc, conf, correct, valid = [], [], [], []
    for fr in frames:
        u = frame_uncertainty(fr, kind, config, args.seed)
        if ((u < 0) | (u > 1)).any():
            raise InputError(f"frame {fr.frame_id!r}: baselines need uncertainty normalised to [0, 1]")
        keep = ~config.ignore_mask(fr.label)
        # confidence: top mean-softmax score when samples exist, else 1 - uncertainty
        c = mean_softmax(fr.samples)[0].max(axis=-1) if fr.samples is not None else 1.0 - u
        unc.append(u)
        valid.append(keep)
        conf.append(c[keep])
        correct.append((fr.pred == fr.label)[keep])
    threshold = base_mod.resolve_threshold(spec, unc, valid)
    counts = base_mod.PatchCounts()
    for fr, u, keep in zip(frames, unc, valid):
        counts = counts + base_mod.patch_counts(fr.pred, fr.label, u, fr.shape, spec, threshold, keep)
    result = {
        "uncertainty_kind": kind,
        "ece": base_mod.ece(np.concatenate(conf), np.concatenate(correct), args.ece_bins),
        "ece_bins": args.ece_bins,
        "patch": list(args.patch),
        "accuracy_threshold": spec.accuracy_threshold,
        "uncertainty_threshold": threshold,
        "patch_counts": counts.__dict__,
        **counts.metrics(),
    }
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_audit(args) -> int:
    _, config, frames = _load(args)
    kind = _kind(args, frames)
    findings = []
    for fr in frames:
        u = frame_uncertainty(fr, kind, config, args.seed)
        if ((u < 0) | (u > 1)).any():
            raise InputError(f"frame {fr.frame_id!r}: audit needs uncertainty normalised to [0, 1]")
        mask = audit_mod.confident_error_mask(fr.pred, fr.label, u, args.tau, config.ignore_ids)
        findings += audit_mod.cluster_findings(mask, fr.shape, fr.pred, fr.label, u,
                                               args.min_size, fr.frame_id)
    findings = audit_mod.rank_findings(findings)
    header = {"type": "header", "tau": args.tau, "min_size": args.min_size,
              "uncertainty_kind": kind, "num_findings": len(findings)}
    lines = [json.dumps(header)] + [f.to_json(config.names) for f in findings]
    out = Path(args.out or "findings.jsonl")
    out.write_text("\n".join(lines) + "\n")
    print(f"{len(findings)} findings written to {out}")
    return 0


def cmd_synth(args) -> int:
    spec = ScenarioSpec(
        num_classes=args.num_classes, shape=args.shape, num_frames=args.frames,
        layout=args.layout, accuracy=args.accuracy, calibration_mode=args.calibration,
        mc_samples=args.mc_samples, store_samples=args.with_samples, seed=args.seed,
    )
    frames = generate_scenario(spec)
    ledger = None
    if args.corrupt is not None:
        frames, ledger = corrupt_labels(frames, args.corrupt, args.seed, spec.num_classes)
    out = Path(args.out or "synth")
    config = ClassConfig(spec.num_classes)
    manifest = write_frames(out, frames, config)
    if ledger is not None:
        write_ledger(out / "ledger.json", ledger)
    print(f"wrote {len(frames)} frames, manifest {manifest}")
    return 0


def cmd_weights(args) -> int:
    if bool(args.frequencies) == bool(args.classes):
        raise InputError("pass exactly one of --frequencies or --classes")
    if args.frequencies:
        freqs = load_array(args.frequencies).reshape(-1)
    else:
        config = load_class_config(args.classes)
        if config.frequencies is None:
            raise InputError(f"{args.classes}: class config has no 'frequencies'")
        freqs = np.asarray(config.frequencies)
    w = class_weights(freqs)
    if args.out:
        if str(args.out).endswith(".npy"):
            save_array(args.out, w)
        else:
            Path(args.out).write_text(json.dumps([float(x) for x in w]) + "\n")
    print(json.dumps([float(x) for x in w]))
    return 0


COMMANDS = {
    "ause": cmd_ause,
    "uncertainty": cmd_uncertainty,
    "baselines": cmd_baselines,
    "audit": cmd_audit,
    "synth": cmd_synth,
    "weights": cmd_weights,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
