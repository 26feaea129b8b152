"""Command-line surface wiring the pipelines together.

Subcommands: ``simulate`` (generate a reference/query pair with ground
truth), ``corrupt`` (apply a manipulation to a clean query), ``locate``
(localize shifted columns), ``correct`` (rewrite them, optionally chaining
from locate), and ``evaluate`` (score masks and corrected tables).

Exit codes: 0 success, 2 usage or data error, 3 no shift detected (locate
only; the refined mask is empty). All subcommands are byte-reproducible for
identical flags and seed. Worker-process count comes from --threads, or the
DATAFIX_THREADS environment variable when the flag is absent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .correct import CorrectConfig
from .correct import correct as run_correct
from .correct import save_report_json as save_correct_report
from .data import SeededRng, load_csv, load_mask, save_csv, save_mask
from .locate import LocateConfig
from .locate import locate as run_locate
from .locate import save_curve_svg
from .locate import save_report_json as save_locate_report
from .manipulate import ManipulationSpec, apply_manipulation
from .metrics import correction_scores, f1_localization
from .simulate import build_spec, sample_pair
from .trees import BoostedParams, ForestParams

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_SHIFT = 3


class UsageError(Exception):
    pass


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("DATAFIX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"DATAFIX_THREADS must be an integer, got {env!r}") from exc
    return 1


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", type=Path, default=Path("."))
    parser.add_argument("--threads", type=int, default=None, help="worker process cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="featshift")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated reference/query pair")
    p.add_argument("--id", type=int, required=True, help="generator pair id, 1..15")
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--n-corrupted", type=int, default=20)
    p.add_argument("--n-ref", type=int, default=2000)
    p.add_argument("--n-query", type=int, default=2000)
    _add_common(p)

    p = sub.add_parser("corrupt", help="apply a manipulation to a clean query")
    p.add_argument("--query", type=Path, required=True)
    p.add_argument("--type", dest="type_id", required=True, help="manipulation type, e.g. 2 or 4.1")
    p.add_argument("--fraction", type=float, default=0.25)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--reference", type=Path, default=None, help="needed for types 9 and 10")
    _add_common(p)

    p = sub.add_parser("locate", help="localize shifted columns")
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--query", type=Path, required=True)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--epsilon", type=float, default=0.02)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--svg", action="store_true", help="also write the divergence curve as SVG")
    _add_common(p)

    p = sub.add_parser("correct", help="rewrite masked columns to remove the shift")
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--query", type=Path, required=True)
    p.add_argument("--mask", type=Path, default=None)
    p.add_argument(
        "--auto-locate",
        action="store_true",
        help="run locate first and use its refined mask",
    )
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--tau", type=float, default=0.1, help="locate tau when chaining")
    p.add_argument("--locate-epsilon", type=float, default=0.02)
    _add_common(p)

    p = sub.add_parser("evaluate", help="score masks and corrected tables")
    p.add_argument("--reference", type=Path, default=None)
    p.add_argument("--query", type=Path, default=None)
    p.add_argument("--background", type=Path, default=None, help="clean counterpart of the query")
    p.add_argument("--pred-mask", type=Path, default=None)
    p.add_argument("--true-mask", type=Path, default=None)
    _add_common(p)

    return parser


def _cmd_simulate(args) -> int:
    spec = build_spec(args.id, args.d, args.n_corrupted, shuffle_seed=args.seed)
    x, y, mask = sample_pair(spec, args.n_ref, args.n_query, SeededRng(args.seed, 1))
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_csv(x, out / "X.csv")
    save_csv(y, out / "Y.csv")
    save_mask(mask, out / "mask.json")
    with open(out / "spec.json", "w") as fh:
        json.dump(spec.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _cmd_corrupt(args) -> int:
    query = load_csv(args.query)
    reference = load_csv(args.reference) if args.reference else None
    spec = ManipulationSpec(
        type_id=str(args.type_id),
        fraction=args.fraction,
        alpha=args.alpha,
        rho=args.rho,
        seed=args.seed,
    )
    corrupted, mask = apply_manipulation(query, spec, reference=reference)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_csv(corrupted, out / "Y_corrupted.csv")
    save_mask(mask, out / "mask.json")
    return EXIT_OK


def _locate_config(args, threads: int) -> LocateConfig:
    return LocateConfig(
        tau=args.tau,
        epsilon=args.epsilon,
        folds=args.folds,
        forest=ForestParams(n_trees=args.trees),
        workers=threads,
    )


def _cmd_locate(args) -> int:
    threads = _resolve_threads(args.threads)
    x = load_csv(args.reference)
    y = load_csv(args.query)
    if x.n_cols != y.n_cols or x.kinds != y.kinds:
        raise UsageError("reference and query schemas do not match")
    cfg = _locate_config(args, threads)
    report = run_locate(x, y, cfg, SeededRng(args.seed))
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_locate_report(report, out / "locate_report.json")
    save_mask(report.refined_mask, out / "refined_mask.json")
    if args.svg:
        save_curve_svg(report, out / "curve.svg")
    if len(report.refined_mask) == 0:
        return EXIT_NO_SHIFT
    return EXIT_OK


def _cmd_correct(args) -> int:
    threads = _resolve_threads(args.threads)
    x = load_csv(args.reference)
    y = load_csv(args.query)
    if x.n_cols != y.n_cols or x.kinds != y.kinds:
        raise UsageError("reference and query schemas do not match")
    if args.mask is None and not args.auto_locate:
        raise UsageError("provide --mask or pass --auto-locate")
    if args.auto_locate:
        cfg = LocateConfig(
            tau=args.tau, epsilon=args.locate_epsilon, workers=threads
        )
        locate_report = run_locate(x, y, cfg, SeededRng(args.seed))
        mask = locate_report.refined_mask
        if len(mask) == 0:
            raise UsageError("locate found no shifted columns; nothing to correct")
    else:
        mask = load_mask(args.mask)
    mask.validate_for(x.n_cols)
    if len(mask) == 0:
        raise UsageError("mask is empty")
    if len(mask) >= x.n_cols / 2:
        raise UsageError("mask covers half or more of the columns; cannot correct")

    cfg = CorrectConfig(
        epsilon=args.epsilon,
        epochs=args.epochs,
        boosted=BoostedParams(),
        workers=threads,
    )
    report = run_correct(x, y, mask, cfg, SeededRng(args.seed, 7))
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_csv(report.corrected, out / "Y_corrected.csv")
    save_correct_report(report, out / "correct_report.json")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    threads = _resolve_threads(args.threads)
    payload: dict = {}
    if args.pred_mask is not None or args.true_mask is not None:
        if args.pred_mask is None or args.true_mask is None:
            raise UsageError("--pred-mask and --true-mask must be given together")
        score = f1_localization(load_mask(args.pred_mask), load_mask(args.true_mask))
        payload["localization"] = {
            "precision": score.precision,
            "recall": score.recall,
            "f1": score.f1,
        }
    if args.reference is not None or args.query is not None:
        if args.reference is None or args.query is None:
            raise UsageError("--reference and --query must be given together")
        x = load_csv(args.reference)
        y = load_csv(args.query)
        background = load_csv(args.background) if args.background else None
        score = correction_scores(
            x, y, SeededRng(args.seed), background=background, workers=threads
        )
        payload["correction"] = score.to_json_dict()
    if not payload:
        raise UsageError("nothing to evaluate; pass masks and/or datasets")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "scores.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "corrupt": _cmd_corrupt,
    "locate": _cmd_locate,
    "correct": _cmd_correct,
    "evaluate": _cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"featshift {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
