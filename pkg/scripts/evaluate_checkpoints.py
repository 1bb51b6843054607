"""Desk-scale metrics for every checkpoint of a run directory (learning curve).

    python3 scripts/evaluate_checkpoints.py runs/desk_scale --samples 300
"""

import argparse
import csv
import sys
from pathlib import Path

from edmgan.experiments import desk_scale_data, desk_scale_metrics
from edmgan.training import load_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run", type=Path)
    ap.add_argument("--samples", type=int, default=300)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()

    paths = sorted(args.run.glob("checkpoint_*.npz"))
    if not paths:
        sys.exit(f"no numbered checkpoints in {args.run}")
    writer = csv.writer(sys.stdout)
    writer.writerow(["checkpoint", "edm_fraction", "histogram_w1", "w1_limit", "template_fraction"])
    test = None
    for p in paths:
        params, cfg, _ = load_run(p)
        if test is None:
            test = desk_scale_data(cfg)[1]
        r = desk_scale_metrics(params, cfg, test, count=args.samples, seed=args.seed)
        writer.writerow([p.name, r.edm_fraction, f"{r.histogram_w1:.4f}", f"{r.w1_limit:.4f}",
                         f"{r.template_fraction:.3f}"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
