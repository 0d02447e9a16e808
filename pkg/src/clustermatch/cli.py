"""Command-line entry point: ``clustermatch <command> [flags]``.

Commands
--------
simulate       Monte Carlo vs unscented transform over a noise grid (CSV).
padding-study  Correct matches / false positives with and without padding (JSON).
match          Match an observed dataset against a reference dataset.
describe       Per-frame descriptors plus one frame's UT distribution and ellipse.
synth          Write a synthetic noisy dataset of one seeded cluster (JSONL).

A ``--config FILE`` of ``key = value`` lines (keys are flag names without the
leading dashes) sets defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .datasets import (
    Dataset,
    distribution_to_dict,
    load_dataset,
    save_dataset,
    synthesize_dataset,
)
from .descriptor import descriptor_array
from .errors import ClusterMatchError
from .experiments import DEFAULT_NOISE_GRID, Arm, noise_sweep, padding_study, seeded_cluster, write_sweep_csv
from .matching import MatchConfig, match_datasets
from .metrics import confidence_ellipse
from .unscented import NoiseModel, UtParams, ut_descriptor_distribution

log = logging.getLogger("clustermatch")

SUPPORTED_FLOWER_RANGE = (3, 6)


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _float_list(text):
    return [float(x) for x in str(text).replace(",", " ").split()]


def _add_common(p, noise_help="position noise std in meters"):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confidence", type=float, default=None, help="gate confidence as a fraction, e.g. 0.95")
    p.add_argument("--confidence-pct", type=float, default=None, help="gate confidence in percent, e.g. 95")
    p.add_argument("--noise", type=float, action="append", default=None, help=noise_help)
    p.add_argument("--alpha", type=float, default=1e-3)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--flowers", type=int, default=3)
    p.add_argument("--workers", type=int, default=1, help="threads for internal parallel work")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--config", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clustermatch", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo vs UT noise sweep")
    _add_common(p, "noise level; repeat for a grid (default 0.01..0.05)")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--padding", type=float, default=0.0)
    p.add_argument("--extent", type=float, nargs=2, default=(0.0, 1.0), metavar=("LOW", "HIGH"))

    p = sub.add_parser("padding-study", help="correct matches and false positives with/without padding")
    _add_common(p, "noise of the unpadded arm (default 0.01)")
    p.add_argument("--padded-noise", type=float, default=None, help="noise of the padded arm (default: --noise)")
    p.add_argument("--padding", type=float, default=0.005, help="padding of the padded arm")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--min-flowers", type=int, default=3)
    p.add_argument("--max-flowers", type=int, default=6)
    p.add_argument("--extent", type=float, nargs=2, default=(0.0, 1.0), metavar=("LOW", "HIGH"))

    p = sub.add_parser("match", help="match observed frames against reference frames")
    _add_common(p, "assumed position noise for the reference UT (default 0.01)")
    p.add_argument("reference", type=Path)
    p.add_argument("observed", type=Path)
    p.add_argument("--observed-flowers", type=int, default=None, help="flower count of the observed dataset")
    p.add_argument("--padding", type=float, default=0.0)
    p.add_argument("--no-count-gate", action="store_true", help="do not require equal flower counts")
    p.add_argument("--unaligned", action="store_true", help="frames are not index-aligned; skip correctness")

    p = sub.add_parser("describe", help="descriptors and UT distribution of a dataset")
    _add_common(p, "assumed position noise (default 0.01)")
    p.add_argument("dataset", type=Path)
    p.add_argument("--frame", type=int, default=None, help="frame_id for the UT distribution (default: first)")
    p.add_argument("--padding", type=float, default=0.0)

    p = sub.add_parser("synth", help="write a synthetic noisy dataset")
    _add_common(p, "perturbation noise (default 0.01)")
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--corruption", type=float, default=0.0, help="fraction of frames with a miscounted flower")
    p.add_argument("--extent", type=float, nargs=2, default=(0.0, 1.0), metavar=("LOW", "HIGH"))
    p.add_argument("--name", default="synthetic")
    parser.subcommands = dict(sub.choices)
    return parser


def _convert(action, value: str):
    if isinstance(action, argparse._StoreTrueAction):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if action.nargs not in (None, "?"):
        return tuple((action.type or str)(v) for v in value.replace(",", " ").split())
    return (action.type or str)(value)


def parse_args(argv=None) -> argparse.Namespace:
    """Parse flags, layering ``--config`` values underneath explicit flags."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    cfg = read_config(args.config)
    sub = parser.subcommands[args.command]
    actions = {a.dest: a for a in sub._actions}
    noise = cfg.pop("noise", None)
    defaults = {}
    for key, value in cfg.items():
        if key not in actions or key in ("config", "help"):
            log.warning("config key %r is not used by %s", key, args.command)
            continue
        try:
            defaults[key] = _convert(actions[key], value)
        except ValueError as exc:
            raise UsageError(f"{args.config}: bad value for {key!r}: {value!r}") from exc
    sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.noise is None and noise is not None:
        # kept out of set_defaults: an append action would extend the config list
        args.noise = _float_list(noise)
    return args


def validate(args) -> None:
    """Reject bad flag values before any computation starts."""
    if args.confidence is not None and args.confidence_pct is not None:
        raise UsageError("give --confidence or --confidence-pct, not both")
    if args.confidence_pct is not None:
        args.confidence = args.confidence_pct / 100.0
    if args.confidence is None:
        args.confidence = 0.95
    if not 0.0 < args.confidence < 1.0:
        raise UsageError(f"confidence must lie in (0, 1), got {args.confidence}")
    if args.noise is not None and any(not n > 0 for n in args.noise):
        raise UsageError("--noise values must be positive")
    if getattr(args, "padding", 0.0) < 0:
        raise UsageError("--padding must be >= 0")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    if args.flowers < 2:
        raise UsageError("--flowers must be >= 2")
    if not (1e-4 <= args.alpha <= 1.0):
        log.warning("--alpha %g is outside the usual range [1e-4, 1]", args.alpha)
    counts = [args.flowers] + ([args.observed_flowers] if getattr(args, "observed_flowers", None) else [])
    if args.command == "padding-study":
        counts = [args.min_flowers, args.max_flowers]
        if args.min_flowers < 2 or args.max_flowers < args.min_flowers:
            raise UsageError("need 2 <= --min-flowers <= --max-flowers")
        if args.samples < 1:
            raise UsageError("--samples must be >= 1")
        if args.padded_noise is not None and not args.padded_noise > 0:
            raise UsageError("--padded-noise must be positive")
    for n in counts:
        if not SUPPORTED_FLOWER_RANGE[0] <= n <= SUPPORTED_FLOWER_RANGE[1]:
            log.warning("flower count %d is outside the supported envelope %s", n, SUPPORTED_FLOWER_RANGE)
    if getattr(args, "trials", 1) < 1:
        raise UsageError("--trials must be >= 1")
    if getattr(args, "frames", 1) < 1:
        raise UsageError("--frames must be >= 1")
    if hasattr(args, "extent") and not args.extent[1] > args.extent[0]:
        raise UsageError("--extent needs LOW < HIGH")
    if args.command in ("match", "describe", "padding-study", "synth") and args.noise and len(args.noise) > 1:
        raise UsageError(f"{args.command} takes a single --noise value")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)


def _ut(args) -> UtParams:
    return UtParams(args.alpha, args.beta, args.kappa)


def _single_noise(args) -> float:
    return args.noise[0] if args.noise else 0.01


def _emit(args, filename, text) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        (args.out / filename).write_text(text, encoding="utf-8")


def _json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def cmd_simulate(args) -> int:
    import io

    rows = noise_sweep(
        noises=args.noise or DEFAULT_NOISE_GRID,
        trials=args.trials,
        seed=args.seed,
        n_flowers=args.flowers,
        confidence=args.confidence,
        ut=_ut(args),
        extent=tuple(args.extent),
        workers=args.workers,
    )
    buf = io.StringIO()
    write_sweep_csv(rows, buf)
    _emit(args, "simulate.csv", buf.getvalue())
    return 0


def cmd_padding_study(args) -> int:
    noise = _single_noise(args)
    padded_noise = args.padded_noise if args.padded_noise is not None else noise
    arms = [Arm(noise, 0.0, "without_padding"), Arm(padded_noise, args.padding, "with_padding")]
    results = padding_study(
        arms,
        samples=args.samples,
        seed=args.seed,
        min_flowers=args.min_flowers,
        max_flowers=args.max_flowers,
        confidence=args.confidence,
        ut=_ut(args),
        extent=tuple(args.extent),
        workers=args.workers,
    )
    doc = {
        "samples": args.samples,
        "seed": args.seed,
        "confidence": args.confidence,
        "flowers": [args.min_flowers, args.max_flowers],
        "arms": [
            {
                "label": r.label,
                "noise": r.noise,
                "padding": r.padding,
                "correct_matches": r.correct_matches,
                "false_positives": r.false_positives,
                "avg_false_positives": r.avg_false_positives,
            }
            for r in results
        ],
    }
    _emit(args, "padding_study.json", _json(doc))
    return 0


def _load(path, count, label):
    ds, report = load_dataset(path, count)
    if report.dropped:
        log.info("%s: pruned %d frame(s) with a flower count other than %d", label, len(report.dropped), count)
    return ds, report


def cmd_match(args) -> int:
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    ref, ref_prune = _load(args.reference, args.flowers, "reference")
    obs, obs_prune = _load(args.observed, args.observed_flowers or args.flowers, "observed")
    cfg = MatchConfig(args.confidence, args.padding, not args.no_count_gate)
    report = match_datasets(
        ref, obs, NoiseModel(_single_noise(args)), _ut(args), cfg, aligned=not args.unaligned, workers=args.workers
    )
    report.write_csv(out / "match.csv")
    ref_prune.write_csv(out / "prune_reference.csv")
    obs_prune.write_csv(out / "prune_observed.csv")
    summary = report.summary()
    summary["noise"] = _single_noise(args)
    summary["pruned_reference"] = len(ref_prune.dropped)
    summary["pruned_observed"] = len(obs_prune.dropped)
    summary["per_reference"] = report.per_reference()
    (out / "match_summary.json").write_text(_json(summary), encoding="utf-8")
    if summary["aligned"]:
        print(f"diagonal matches: {summary['correct_matches']}/{summary['n_diagonal']}")
        print(f"off-diagonal matches: {summary['off_diagonal_matches']}")
        afp = summary["avg_false_positives"]
        print(f"avg false positives per correct match: {afp if afp is None else format(afp, '.4f')}")
    print(f"total matches: {summary['total_matches']}/{summary['n_reference'] * summary['n_observed']}")
    return 0


def cmd_describe(args) -> int:
    import io
    import csv

    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    ds, _ = _load(args.dataset, args.flowers, "dataset")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame_id", "inertia", "avg_distance"])
    for c in ds.frames:
        inertia, avg = descriptor_array(c.points).tolist()
        w.writerow([c.frame_id, repr(inertia), repr(avg)])
    (out / "descriptors.csv").write_text(buf.getvalue(), encoding="utf-8")

    if args.frame is None:
        frame = ds.frames[0]
    else:
        found = [c for c in ds.frames if c.frame_id == args.frame]
        if not found:
            raise UsageError(f"frame_id {args.frame} not present after pruning")
        frame = found[0]
    noise = _single_noise(args)
    dist = ut_descriptor_distribution(frame, NoiseModel(noise), _ut(args), args.padding)
    doc = distribution_to_dict(dist)
    doc["meta"] = {
        "frame_id": frame.frame_id,
        "dataset": ds.name,
        "noise": noise,
        "padding": args.padding,
        "ut": {"alpha": args.alpha, "beta": args.beta, "kappa": args.kappa},
    }
    doc["ellipse"] = confidence_ellipse(dist.mean, dist.cov, args.confidence)
    (out / "distribution.json").write_text(_json(doc), encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    base = seeded_cluster(args.seed, args.flowers, *args.extent)
    ds = synthesize_dataset(base, args.frames, NoiseModel(_single_noise(args)), args.seed, args.corruption, args.name)
    save_dataset(ds, out / f"{args.name}.jsonl")
    save_dataset(Dataset([base], args.flowers, f"{args.name}_base"), out / f"{args.name}_base.jsonl")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "padding-study": cmd_padding_study,
    "match": cmd_match,
    "describe": cmd_describe,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except (UsageError, OSError) as exc:
        print(f"clustermatch: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        validate(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"clustermatch: error: {exc}", file=sys.stderr)
        return 2
    except (ClusterMatchError, OSError) as exc:
        print(f"clustermatch: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
