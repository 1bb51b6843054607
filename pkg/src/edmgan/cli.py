"""Command-line entry point: ``edmgan {validate,embed,train,sample,evaluate}``.

Exit codes: 0 success, 1 domain failure (invalid EDM, infeasible match),
2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .autodiff import CheckpointError
from .config import ConfigError, TrainConfig, config_to_dict, load_config
from .data import Dataset, load_dataset, split, synthetic_dataset, write_manifest
from .edm import EIG_TOL, DimensionError, NotAnEDMError, PointSet, embed, embedding_dimension, is_edm
from .evaluation import (
    TYPE_PAIRS,
    InfeasibleAssignmentError,
    UnsupportedElementError,
    distance_histogram,
    try_match,
    uniqueness_count,
    validity_check,
)
from .io import ParseError, load_structures, write_xyz, write_xyz_frames, read_matrix_csv
from .training import TrainingDivergedError, load_run, sample, to_structure, train

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("edmgan")


class UsageError(Exception):
    """Bad flags or unreadable inputs; maps to exit code 2."""


class DomainError(Exception):
    """Well-formed input that fails a mathematical check; maps to exit code 1."""


# -- validate / embed ---------------------------------------------------------


def _read_matrix(path) -> np.ndarray:
    try:
        return read_matrix_csv(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except ParseError as exc:
        raise UsageError(str(exc)) from exc


def cmd_validate(args) -> int:
    D = _read_matrix(args.matrix)
    ok, mu = is_edm(D, args.tol)
    print(f"is_edm: {'yes' if ok else 'no'}")
    print(f"min_schoenberg_eigenvalue: {mu:.12g}")
    if ok:
        print(f"embedding_dimension: {embedding_dimension(D, args.tol)}")
        return EXIT_OK
    print("embedding_dimension: n/a")
    return EXIT_DOMAIN


def cmd_embed(args) -> int:
    D = _read_matrix(args.matrix)
    try:
        P = embed(D, args.dim, args.tol)
    except (NotAnEDMError, DimensionError) as exc:
        raise DomainError(str(exc)) from exc
    P = PointSet(P.coords, [args.label] * P.n)
    write_xyz(args.out, P, f"embedded from {Path(args.matrix).name}")
    print(f"wrote {P.n} points in {args.dim}D to {args.out}")
    return EXIT_OK


# -- train --------------------------------------------------------------------


def _training_data(cfg: TrainConfig) -> tuple[Dataset, str]:
    data = cfg.data
    if data.path is not None and data.synthetic is not None:
        raise UsageError("data.path and data.synthetic are mutually exclusive")
    if data.synthetic is not None:
        s = data.synthetic
        return synthetic_dataset(s.template_count, s.n, s.noise, s.size, s.seed), "synthetic"
    if data.path is None:
        raise UsageError("config sets neither data.path nor data.synthetic")
    if not Path(data.path).exists():
        raise UsageError(f"dataset path {data.path} does not exist")
    try:
        ds = load_dataset(data.path, data.formula)
    except ParseError as exc:
        raise UsageError(str(exc)) from exc
    if len(ds) < 2:
        raise UsageError(f"{data.path}: fewer than two structures with the requested formula")
    return ds, str(data.path)


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read {args.config}: {exc.strerror}") from exc
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    if args.out is not None:
        cfg.out_dir = args.out
    if args.steps is not None:
        cfg.steps = args.steps
    ds, source = _training_data(cfg)
    train_set, test_set = split(ds, cfg.data.split_fraction, cfg.data.split_seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_xyz_frames(out / "train.xyz", train_set.samples)
    write_xyz_frames(out / "test.xyz", test_set.samples)
    write_manifest(out / "manifest.json", formula=ds.formula, r_min=ds.r_min,
                   split_seed=cfg.data.split_seed, train="train.xyz", test="test.xyz", source=source)
    try:
        res = train(cfg, train_set, out)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    last = res.metrics[-1] if res.metrics else None
    print(f"trained {cfg.steps} steps; checkpoint {res.checkpoint}")
    if last is not None:
        print(f"final wasserstein_estimate {last['wasserstein_estimate']:.6g}")
    return EXIT_OK


# -- sample -------------------------------------------------------------------


def cmd_sample(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    try:
        params, cfg, elements = load_run(args.checkpoint)
    except CheckpointError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = sample((params, cfg.generator), args.count, args.seed)
    width = max(6, len(str(args.count)))
    valid = checked = 0
    for k, s in enumerate(samples):
        P = to_structure(s, elements)
        write_xyz(out / f"sample_{k:0{width}d}.xyz", P, f"seed={args.seed} index={k}")
        try:
            ok, _ = validity_check(P)
        except UnsupportedElementError:
            continue
        checked += 1
        valid += ok
    rate = valid / checked if checked else float("nan")
    summary = {"count": args.count, "seed": args.seed, "valid": valid, "checked": checked, "validity_rate": rate}
    print(f"wrote {args.count} samples to {out}")
    if args.count:
        # count 0 leaves the directory empty
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        print(f"validity: {valid}/{checked}")
    return EXIT_OK


# -- evaluate -----------------------------------------------------------------


def _load_set(path, what) -> list[PointSet]:
    if path is None:
        return []
    if not Path(path).exists():
        raise UsageError(f"{what} {path} does not exist")
    try:
        return load_structures(path)
    except ParseError as exc:
        raise UsageError(str(exc)) from exc


def cmd_evaluate(args) -> int:
    samples = _load_set(args.samples, "samples")
    refs_a = _load_set(args.train_set, "train set")
    refs_b = _load_set(args.test_set, "test set")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    comps = {tuple(sorted(P.types)) for P in samples + refs_a + refs_b}
    if len(comps) > 1 and not args.allow_mixed:
        raise DomainError("structures do not share one composition; no assignment exists")

    res = uniqueness_count(samples, refs_a, refs_b, args.cutoff, args.proper)
    res.write_csv(out / "uniqueness.csv")

    with open(out / "matches.jsonl", "w") as fh:
        for k, (P, label) in enumerate(zip(samples, res.labels)):
            best = None
            for name, refs in (("A", refs_a), ("B", refs_b)):
                for j, R in enumerate(refs):
                    m = try_match(P, R, args.cutoff, args.proper)
                    if m is not None and (best is None or m.max_heavy_deviation < best[2]):
                        best = (name, j, m.max_heavy_deviation)
            rec = {"sample": k, "label": label}
            if best is not None:
                rec.update(nearest_set=best[0], nearest_index=best[1], max_heavy_deviation=best[2])
            fh.write(json.dumps(rec) + "\n")

    rng = (args.range[0], args.range[1])
    for pair in TYPE_PAIRS:
        if samples:
            distance_histogram(samples, pair, args.bins, rng).write_csv(out / f"hist_{pair}.csv")
        else:
            (out / f"hist_{pair}.csv").write_text("bin_center,density\n")
        if refs_b:
            distance_histogram(refs_b, pair, args.bins, rng).write_csv(out / f"hist_{pair}_test.csv")

    valid = checked = 0
    for P in samples:
        try:
            ok, _ = validity_check(P)
        except UnsupportedElementError:
            continue
        checked += 1
        valid += ok
    summary = {
        "samples": len(samples),
        "known_A": res.known_a,
        "known_B": res.known_b,
        "novel": res.novel,
        "duplicates": res.duplicates,
        "valid": valid,
        "validity_rate": valid / checked if checked else None,
        "cutoff": args.cutoff,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_config_text() -> str:
    return json.dumps(config_to_dict(TrainConfig()), indent=2)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="edmgan", description=__doc__.splitlines()[0], formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", help="check whether a CSV matrix is an EDM", formatter_class=fmt)
    s.add_argument("matrix", help="square matrix of squared distances, CSV")
    s.add_argument("--tol", type=float, default=EIG_TOL, help="relative eigenvalue tolerance")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("embed", help="recover coordinates from an EDM", formatter_class=fmt)
    s.add_argument("matrix", help="square matrix of squared distances, CSV")
    s.add_argument("--dim", type=int, default=3, help="embedding dimension")
    s.add_argument("--out", default="points.xyz", help="output XYZ file")
    s.add_argument("--label", default="X", help="element label written for every point")
    s.add_argument("--tol", type=float, default=EIG_TOL, help="relative eigenvalue tolerance")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser(
        "train",
        help="train generator and critic",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Train from a JSON run config. Unknown keys are rejected; "
        "omitted keys take the defaults below.",
        epilog="default config:\n" + _default_config_text(),
    )
    s.add_argument("--config", required=True, help="run config JSON")
    s.add_argument("--out", default=None, help="override out_dir (default: from config)")
    s.add_argument("--steps", type=int, default=None, help="override steps (default: from config)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw structures from a checkpoint", formatter_class=fmt)
    s.add_argument("--checkpoint", required=True, help="checkpoint .npz")
    s.add_argument("--count", type=int, default=100, help="number of samples")
    s.add_argument("--seed", type=int, default=0, help="noise seed")
    s.add_argument("--out", default="samples", help="output directory")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("evaluate", help="uniqueness, histograms and validity of samples", formatter_class=fmt)
    s.add_argument("--samples", required=True, help="directory, multi-frame XYZ or tar of samples")
    s.add_argument("--train-set", default=None, help="reference set A")
    s.add_argument("--test-set", default=None, help="reference set B")
    s.add_argument("--cutoff", type=float, default=0.6, help="max heavy-atom deviation (Angstrom)")
    s.add_argument("--proper", action="store_true", help="forbid reflections when superposing")
    s.add_argument("--bins", type=int, default=100, help="histogram bins")
    s.add_argument("--range", type=float, nargs=2, default=[0.0, 10.0], help="histogram range (Angstrom)")
    s.add_argument("--allow-mixed", action="store_true",
                   help="tolerate differing compositions (mismatched pairs never match)")
    s.add_argument("--out", default="evaluation", help="output directory")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, InfeasibleAssignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
