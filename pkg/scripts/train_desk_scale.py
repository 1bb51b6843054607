"""Train on the synthetic two-template set and report the desk-scale metrics.

    python3 scripts/train_desk_scale.py --out runs/desk_scale
"""

import argparse
import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

from edmgan.experiments import desk_scale_config, desk_scale_data, desk_scale_metrics
from edmgan.training import train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk_scale")
    ap.add_argument("--steps", type=int, default=None, help="override the desk-scale step budget")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=1000, help="samples drawn for the report")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = desk_scale_config(seed=args.seed, out_dir=args.out)
    if args.steps is not None:
        cfg.steps = args.steps
    train_set, test_set = desk_scale_data(cfg)
    start = time.perf_counter()
    res = train(cfg, train_set, args.out)
    minutes = (time.perf_counter() - start) / 60
    rep = desk_scale_metrics(res.params, cfg, test_set, count=args.samples)
    doc = {**asdict(rep), "passed": rep.passed, "steps": cfg.steps, "train_minutes": minutes}
    Path(args.out, "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main()
