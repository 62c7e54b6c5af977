# Description: Command-line entry point. Each subcommand runs one benchmark stage
# (or all of them) and maps library errors to process exit codes.

import argparse
import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from .benchmark import (
    BenchmarkRunner,
    apply_overrides,
    build_summary,
    load_config,
    write_plot_data,
)
from .exceptions import ConfigInvalid, IdsBenchError
from .helpers import Stopwatch
from .models import PosthocPolicy, RuntimeSettings
from .stats import DEFAULT_ALPHAS, report_from_mean_ranks, report_from_results
from .storage import read_mean_ranks, read_results_matrix, write_json, write_test_report

DEFAULT_OUT = "results"
LOG_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {message}"


def configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="benchmark configuration (TOML)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="parallel benchmark cells")
    common.add_argument("--out", help="output directory")
    common.add_argument("--metric", help="comma-separated metrics to test")
    common.add_argument("--alpha", help="comma-separated significance levels")
    common.add_argument(
        "--desk-scale", action="store_true", help="RF 100 trees, ETC 200 trees"
    )
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="idsbench",
        description="Intrusion-detection classifier benchmark",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("run", parents=[common], help="every stage in order").set_defaults(
        handler=cmd_run
    )
    commands.add_parser(
        "ingest", parents=[common], help="load, binarize and sample datasets"
    ).set_defaults(handler=cmd_ingest)

    train = commands.add_parser("train", parents=[common], help="fit cells, store predictions")
    train.add_argument("--only", metavar="DATASET:CLASSIFIER", help="rerun one cell")
    train.set_defaults(handler=cmd_train)

    commands.add_parser(
        "evaluate", parents=[common], help="metrics and results matrices from predictions"
    ).set_defaults(handler=cmd_evaluate)

    stats = commands.add_parser("stats", parents=[common], help="Friedman and Nemenyi tests")
    stats.add_argument(
        "--results", nargs="+", metavar="CSV", help="results matrix CSVs (results_<metric>.csv)"
    )
    stats.add_argument(
        "--mean-ranks", metavar="CSV", help="published mean ranks (classifiers x metrics)"
    )
    stats.add_argument("--datasets", type=int, help="number of datasets behind --mean-ranks")
    stats.add_argument(
        "--posthoc",
        choices=[p.value for p in PosthocPolicy],
        help="run Nemenyi only after a rejection, or always",
    )
    stats.set_defaults(handler=cmd_stats)

    commands.add_parser(
        "report", parents=[common], help="summary, plot data and selection table"
    ).set_defaults(handler=cmd_report)
    return parser


def _runner(args, settings: RuntimeSettings) -> BenchmarkRunner:
    if not args.config:
        raise ConfigInvalid("--config", f"required by '{args.command}'")
    config = apply_overrides(
        load_config(args.config),
        settings,
        seed=args.seed,
        workers=args.workers,
        out=args.out,
        metrics=args.metric,
        alphas=args.alpha,
        desk_scale=args.desk_scale,
    )
    return BenchmarkRunner(config, base_dir=Path(args.config).resolve().parent)


def _out_dir(args, settings: RuntimeSettings) -> Path:
    if args.config:
        return _runner(args, settings).out
    return Path(args.out or settings.out or DEFAULT_OUT)


def _alphas(args, settings: RuntimeSettings) -> list[float]:
    raw = args.alpha or settings.alpha
    if raw is None:
        return list(DEFAULT_ALPHAS)
    try:
        alphas = [float(a) for a in raw.split(",") if a.strip()]
    except ValueError:
        raise ConfigInvalid("--alpha", f"not a list of numbers: {raw}")
    if not alphas or any(not 0 < a < 1 for a in alphas):
        raise ConfigInvalid("--alpha", "every alpha must lie in (0, 1)")
    return alphas


def cmd_run(args, settings: RuntimeSettings) -> int:
    return _runner(args, settings).run()


def cmd_ingest(args, settings: RuntimeSettings) -> int:
    _runner(args, settings).ingest()
    return 0


def cmd_train(args, settings: RuntimeSettings) -> int:
    _runner(args, settings).train(only=args.only)
    return 0


def cmd_evaluate(args, settings: RuntimeSettings) -> int:
    _runner(args, settings).evaluate()
    return 0


def cmd_stats(args, settings: RuntimeSettings) -> int:
    posthoc = PosthocPolicy(args.posthoc) if args.posthoc else PosthocPolicy.REJECTED
    if args.mean_ranks or args.results:
        out = Path(args.out or settings.out or DEFAULT_OUT)
        alphas = _alphas(args, settings)
        with Stopwatch() as watch:
            if args.mean_ranks:
                if not args.datasets or args.datasets < 2:
                    raise ConfigInvalid("--datasets", "--mean-ranks needs --datasets >= 2")
                report = report_from_mean_ranks(
                    read_mean_ranks(args.mean_ranks), args.datasets, alphas, posthoc
                )
            else:
                matrices = {}
                for path in args.results:
                    matrix = read_results_matrix(path)
                    matrices[matrix.metric] = matrix
                report = report_from_results(matrices, alphas, posthoc)
            write_test_report(out / "stats", report)
        logger.info(f"Stage stats: {len(report.metrics)} metrics in {watch.seconds:.2f}s")
        return 0
    runner = _runner(args, settings)
    if args.posthoc:
        runner.config.run.posthoc = posthoc
    runner.stats()
    return 0


def cmd_report(args, settings: RuntimeSettings) -> int:
    if args.config:
        _runner(args, settings).report()
        return 0
    out = _out_dir(args, settings)
    summary = build_summary(out)
    write_json(out / "summary.json", summary)
    write_plot_data(out, summary)
    logger.info(f"Report written to {out}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = RuntimeSettings()
    configure_logging(args.log_level or settings.log_level)
    try:
        return args.handler(args, settings)
    except IdsBenchError as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
