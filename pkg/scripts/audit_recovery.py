"""Inject label corruption into synthetic frames and measure audit recovery.

A region counts as recovered when some finding lies entirely inside it.

    python3 scripts/audit_recovery.py --rate 0.02 --seeds 10 --accuracy 0.9
"""
import argparse

import numpy as np

from ausekit import ScenarioSpec, cluster_findings, confident_error_mask, corrupt_labels, generate_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rate", type=float, default=0.02)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--accuracy", type=float, default=0.9)
    ap.add_argument("--tau", type=float, default=0.1)
    ap.add_argument("--min-size", type=int, default=5)
    ap.add_argument("--shape", default="128x128")
    args = ap.parse_args()
    shape = tuple(int(x) for x in args.shape.split("x"))

    for seed in range(args.seeds):
        spec = ScenarioSpec(num_classes=8, shape=shape, layout="blobs", accuracy=args.accuracy, seed=seed)
        frames, ledger = corrupt_labels(generate_scenario(spec), args.rate, seed=seed, num_classes=8)
        f = frames[0]
        W = shape[1]
        owner = np.full(f.num_points, -1)
        for k, r in enumerate(ledger):
            owner[r.pixels(W)] = k
        mask = confident_error_mask(f.pred, f.label, f.uncertainty, args.tau)
        found = cluster_findings(mask, f.shape, f.pred, f.label, f.uncertainty, args.min_size, f.frame_id)
        hit, stray = set(), 0
        for finding in found:
            ks = {int(owner[r * W + c]) for r, c in finding.pixel_indices}
            if len(ks) == 1 and -1 not in ks:
                hit |= ks
            else:
                stray += 1
        print(f"seed {seed:2d}: {len(hit):3d}/{len(ledger):3d} regions recovered, {stray} stray findings")


if __name__ == "__main__":
    main()
