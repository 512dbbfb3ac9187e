"""``fedsim`` command line.

Exit status: 0 when every run succeeded, 2 when some runs failed (they are
kept as failed rows), 1 when the experiment aborted before producing results.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .federation import FederationConfig
from .harness import (
    DEFAULT_CLIENT_COUNTS,
    FULL_REPETITIONS,
    DataSource,
    ExperimentGrid,
    emit_report,
    grid_from_manifest,
    run_grid,
)

EXIT_OK, EXIT_ABORT, EXIT_PARTIAL = 0, 1, 2


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _synthetic(text: str) -> tuple[int, int, int, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("--synthetic takes m,n,classes,separation")
    try:
        return int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --synthetic value {text!r}") from None


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", metavar="GLOB", help="MHEALTH subject log files, e.g. 'MHEALTHDATASET/*.log'")
    src.add_argument("--synthetic", type=_synthetic, metavar="M,N,C,SEP", help="Gaussian blob dataset")
    p.add_argument("--keep-null", action="store_true", help="keep MHEALTH label-0 rows as an extra class")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--rounds", type=int, default=20)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--frac-bits", type=int, default=24)
    p.add_argument("--hidden", type=_int_list, default=(64, 32), help="hidden layer widths")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--average", choices=("macro", "micro", "weighted"), default="macro")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--no-secure-agg", dest="secure_agg", action="store_false")
    p.add_argument("--weighted", action="store_true", help="size-weighted instead of plain mean")
    p.add_argument("--full-scale", action="store_true", help=f"{FULL_REPETITIONS} repetitions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="client-count sweep with a centralized baseline")
    _add_experiment_args(run)
    run.add_argument("--clients", type=_int_list, default=DEFAULT_CLIENT_COUNTS)
    run.add_argument("--no-baseline", dest="baseline", action="store_false")

    base = sub.add_parser("baseline", help="centralized baseline only")
    _add_experiment_args(base)

    rerun = sub.add_parser("rerun", help="repeat an experiment from its manifest.json")
    rerun.add_argument("manifest")
    rerun.add_argument("--out", required=True, metavar="DIR")
    rerun.add_argument("--jobs", type=int, default=1)
    return parser


def grid_from_args(args) -> ExperimentGrid:
    source = DataSource(mhealth_glob=args.data, synthetic=args.synthetic, keep_null=args.keep_null)
    cfg = FederationConfig(
        t=1,
        rounds=args.rounds,
        local_epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        convergence_tol=args.tol,
        seed=args.seed,
        secure_agg=args.secure_agg,
        frac_bits=args.frac_bits,
        weighted=args.weighted,
        hidden=args.hidden,
    )
    baseline_only = args.command == "baseline"
    return ExperimentGrid(
        source=source,
        base=cfg,
        client_counts=() if baseline_only else args.clients,
        repetitions=FULL_REPETITIONS if args.full_scale else args.reps,
        test_fraction=args.test_fraction,
        include_baseline=True if baseline_only else args.baseline,
        average=args.average,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        grid = grid_from_manifest(args.manifest) if args.command == "rerun" else grid_from_args(args)
        result = run_grid(grid, jobs=args.jobs)
        paths = emit_report(result, args.out)
    except (OSError, ValueError) as exc:
        print(f"fedsim: aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT

    for row in result.summary():
        print(
            f"t={row['t']!s:>8}  runs={row['n_runs']:<3d} excluded={row['excluded_count']:<2d} "
            f"acc={row['accuracy_mean']:.4f}±{row['accuracy_std']:.4f}  "
            f"macroF1={row['macro_f1_mean']:.4f}"
        )
    print(f"results written to {paths['raw.csv'].parent}")
    if result.failed:
        print(f"fedsim: {len(result.failed)} run(s) failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
