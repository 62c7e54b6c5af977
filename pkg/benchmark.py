# Description: Benchmark stages (ingest, train, evaluate, stats, report) and the
# monolithic run that chains them through the same output files.

import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional, Union

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from .data import (
    Dataset,
    apply_preprocessing,
    fit_preprocessing,
    holdout_indices,
    load_dataset,
    resolve_schema,
    sample_stratified,
)
from .evaluation import (
    FoldPredictions,
    measure_mbt,
    measure_response_time,
    predict_repeat,
    random_search,
    repeat_seeds,
    report_from_predictions,
)
from .exceptions import ConfigInvalid, DataError
from .helpers import Stopwatch, derive_seed, library_versions
from .models import (
    METRIC_DIRECTIONS,
    METRIC_NAMES,
    BenchmarkConfig,
    CellManifest,
    ClassifierConfig,
    ClassifierSpec,
    DatasetConfig,
    Direction,
    Manifest,
    Profile,
    ResultsMatrix,
    RuntimeSettings,
    SchemaName,
    SplitKind,
    SplitPlan,
    TestReport,
    TimingRecord,
    ValidationEcho,
    ValidationReport,
)
from .stats import report_from_results
from .storage import (
    FLOAT_FORMAT,
    model_path,
    predictions_path,
    read_json,
    read_manifest,
    read_predictions,
    read_results_matrix,
    read_sample,
    read_timing,
    read_validation_report,
    write_json,
    write_manifest,
    write_metric_csv,
    write_model,
    write_predictions,
    write_results_matrix,
    write_sample,
    write_test_report,
    write_timing,
    write_validation_report,
)
from .tasks import run_cells

PathLike = Union[str, Path]
PACKAGE_VERSION = "0.1.0"


# Configuration
def load_config(path: PathLike) -> BenchmarkConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(str(path), "configuration file not found")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ConfigInvalid(str(path), f"not valid TOML: {e}")
    try:
        return BenchmarkConfig(**raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise ConfigInvalid(f"{path}:{where}", first["msg"])


def _split_list(value: Optional[str]) -> Optional[list[str]]:
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


def apply_overrides(
    config: BenchmarkConfig,
    settings: Optional[RuntimeSettings] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    out: Optional[str] = None,
    metrics: Optional[str] = None,
    alphas: Optional[str] = None,
    desk_scale: bool = False,
) -> BenchmarkConfig:
    """CLI flags win over IDSBENCH_* variables, which win over the file."""
    settings = settings or RuntimeSettings()
    run = config.run.dict()
    chosen = {
        "master_seed": seed if seed is not None else settings.seed,
        "workers": workers if workers is not None else settings.workers,
        "output_dir": out if out is not None else settings.out,
        "metrics": _split_list(metrics if metrics is not None else settings.metric),
        "alphas": _split_list(alphas if alphas is not None else settings.alpha),
    }
    run.update({key: value for key, value in chosen.items() if value is not None})
    if desk_scale:
        run["profile"] = Profile.DESK_SCALE
    try:
        merged = config.copy(update={"run": config.run.__class__(**run)})
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigInvalid(f"run.{first['loc'][0]}", first["msg"])
    return merged


def check_paths(config: BenchmarkConfig, base_dir: Path) -> None:
    for ds in config.datasets:
        for path in filter(None, (ds.path, ds.test_path)):
            if not _resolve(base_dir, path).exists():
                raise ConfigInvalid(f"datasets.{ds.name}", f"file not found: {path}")


def _resolve(base_dir: Path, path: str) -> Path:
    candidate = Path(path)
    return candidate if candidate.is_absolute() else base_dir / candidate


# Cell worker
def predict_cell(
    spec: ClassifierSpec,
    ds: Dataset,
    test: Optional[Dataset],
    plan: SplitPlan,
    dataset_name: str,
    repeat: int,
    repeat_seed: int,
    profile: Profile,
    response_sample: Optional[int],
    scale_codes: bool,
) -> tuple[str, str, int, list[FoldPredictions]]:
    predictions = list(
        predict_repeat(
            spec, ds, plan, repeat, repeat_seed, test, profile, response_sample, scale_codes
        )
    )
    return dataset_name, spec.label, repeat, predictions


class BenchmarkRunner:
    """Runs the benchmark stage by stage; every stage reads and writes `out_dir`."""

    def __init__(
        self,
        config: BenchmarkConfig,
        out_dir: Optional[PathLike] = None,
        base_dir: Optional[PathLike] = None,
    ):
        self.config = config
        self.out = Path(out_dir or config.run.output_dir)
        self.base_dir = Path(base_dir) if base_dir else Path.cwd()
        self.stage_seconds: dict[str, float] = {}

    # Seeds and cells
    @property
    def master_seed(self) -> int:
        return self.config.run.master_seed

    def cell_seed(self, dataset: str, classifier: ClassifierConfig) -> int:
        return derive_seed(self.master_seed, "cell", dataset, classifier.kind.value)

    def cell_plan(self, dataset: str, classifier: ClassifierConfig) -> SplitPlan:
        return self.config.split_plan().copy(
            update={"seed": self.cell_seed(dataset, classifier)}
        )

    def select_cells(
        self, only: Optional[str] = None
    ) -> list[tuple[DatasetConfig, ClassifierConfig]]:
        cells = [(ds, clf) for ds in self.config.datasets for clf in self.config.classifiers]
        if only is None:
            return cells
        dataset, sep, classifier = only.partition(":")
        wanted = [
            (ds, clf)
            for ds, clf in cells
            if ds.name == dataset
            and classifier.lower() in (clf.kind.value, clf.kind.label.lower())
        ]
        if not sep or not wanted:
            raise ConfigInvalid("--only", f"no cell matches '{only}' (use DATASET:CLASSIFIER)")
        return wanted

    # Ingest
    def ingest(self) -> dict[str, Dataset]:
        """Load, binarize and sample every dataset; write samples beside their schemas."""
        check_paths(self.config, self.base_dir)
        samples: dict[str, Dataset] = {}
        with Stopwatch() as watch:
            for ds_cfg in self.config.datasets:
                schema = self._schema(ds_cfg)
                ds = load_dataset(_resolve(self.base_dir, ds_cfg.path), schema)
                if ds_cfg.sample is not None:
                    ds = sample_stratified(
                        ds,
                        ds_cfg.sample.n_normal,
                        ds_cfg.sample.n_attack,
                        derive_seed(self.master_seed, "sample", ds_cfg.name),
                    )
                write_sample(ds, self.out / "samples", ds_cfg.name)
                samples[ds_cfg.name] = ds
                if ds_cfg.test_path:
                    test = load_dataset(_resolve(self.base_dir, ds_cfg.test_path), schema)
                    write_sample(test, self.out / "samples", f"{ds_cfg.name}__test")
                normal, attack = ds.class_counts()
                logger.debug(f"Sampled {ds_cfg.name}: {normal} normal, {attack} attack")
        self._finish_stage("ingest", watch, f"{len(samples)} datasets")
        return samples

    def _schema(self, ds_cfg: DatasetConfig):
        descriptor = ds_cfg.descriptor
        if descriptor not in SchemaName.__members__:
            descriptor = str(_resolve(self.base_dir, descriptor))
        return resolve_schema(
            descriptor, str(_resolve(self.base_dir, ds_cfg.path)), ds_cfg.label_column
        )

    def load_samples(self) -> dict[str, tuple[Dataset, Optional[Dataset]]]:
        samples = {}
        for ds_cfg in self.config.datasets:
            ds = read_sample(self.out / "samples", ds_cfg.name)
            test = None
            if ds_cfg.test_path:
                test = read_sample(self.out / "samples", f"{ds_cfg.name}__test")
            samples[ds_cfg.name] = (ds, test)
        return samples

    # Train
    def _fixed_test(
        self, test: Optional[Dataset], dataset: str
    ) -> Optional[Dataset]:
        if test is not None and self.config.validation.kind != SplitKind.HOLDOUT:
            logger.warning(f"{dataset}: test_path is only used for hold-out validation")
            return None
        return test

    def _resolve_cell(
        self,
        ds_cfg: DatasetConfig,
        clf: ClassifierConfig,
        ds: Dataset,
        known: dict[tuple[str, str], CellManifest],
    ) -> CellManifest:
        """Parameters and seeds of a cell; an existing manifest entry is reused as-is."""
        key = (ds_cfg.name, clf.kind.label)
        if key in known:
            return known[key]
        params = dict(clf.params)
        searched = None
        if clf.search is not None:
            searched = random_search(
                clf.kind,
                clf.search.space,
                clf.search.budget,
                ds,
                k=clf.search.k,
                seed=derive_seed(self.master_seed, "search", ds_cfg.name, clf.kind.value),
                profile=self.config.run.profile,
                scale_codes=self.config.run.scale_codes,
            )
            params.update(searched.best_params)
            logger.info(
                f"Search {ds_cfg.name}/{clf.kind.label}: best {searched.best_params} "
                f"({searched.best_score:.4f})"
            )
        seed = self.cell_seed(ds_cfg.name, clf)
        return CellManifest(
            dataset=ds_cfg.name,
            classifier=clf.kind.label,
            seed=seed,
            repeat_seeds=repeat_seeds(seed, self.config.validation.repeats),
            params=params,
            searched=searched,
        )

    def train(self, only: Optional[str] = None) -> Manifest:
        """Fit every cell and store test-partition predictions, then time each pair."""
        samples = self.load_samples()
        manifest = self._load_manifest()
        known = {(c.dataset, c.classifier): c for c in manifest.cells} if only else {}
        run = self.config.run
        response_sample = (
            self.config.timing.response_sample if self.config.timing.enabled else None
        )
        with Stopwatch() as watch:
            resolved = []
            for ds_cfg, clf in self.select_cells(only):
                ds, _ = samples[ds_cfg.name]
                resolved.append((ds_cfg, clf, self._resolve_cell(ds_cfg, clf, ds, known)))
            cells = []
            for ds_cfg, clf, cell in resolved:
                ds, test = samples[ds_cfg.name]
                spec = ClassifierSpec(kind=clf.kind, params=cell.params)
                plan = self.cell_plan(ds_cfg.name, clf)
                for repeat, seed in enumerate(cell.repeat_seeds):
                    cells.append(
                        (
                            spec,
                            ds,
                            self._fixed_test(test, ds_cfg.name),
                            plan,
                            ds_cfg.name,
                            repeat,
                            seed,
                            run.profile,
                            response_sample,
                            run.scale_codes,
                        )
                    )
            try:
                for dataset, label, repeat, predictions in run_cells(
                    predict_cell, cells, run.workers
                ):
                    write_predictions(
                        predictions_path(self.out, dataset, label, repeat), predictions
                    )
                    logger.debug(f"Cell {dataset}/{label}/r{repeat}: {len(predictions)} fits")
            finally:
                cells_by_key = {(c.dataset, c.classifier): c for c in manifest.cells}
                for _, _, cell in resolved:
                    cells_by_key[(cell.dataset, cell.classifier)] = cell
                manifest.cells = list(cells_by_key.values())
                self._write_manifest(manifest)
            if self.config.timing.enabled:
                self.time_models(resolved, samples)
        self._finish_stage("train", watch, f"{len(cells)} cells")
        return manifest

    def time_models(self, resolved: list, samples: dict) -> list[TimingRecord]:
        """MBT (median of runs) and per-instance response time on one hold-out split."""
        records = {(r.dataset, r.classifier): r for r in read_timing(self.out / "timing.csv")}
        for ds_cfg, clf, cell in resolved:
            ds, test = samples[ds_cfg.name]
            test = self._fixed_test(test, ds_cfg.name)
            if test is None:
                train_idx, test_idx = holdout_indices(
                    ds.labels,
                    self.config.validation.train_fraction,
                    derive_seed(cell.seed, "timing"),
                    self.config.validation.stratified,
                )
                train, test = ds.take(train_idx), ds.take(test_idx)
            else:
                train = ds
            prep = None
            if not train.encoded:
                prep = fit_preprocessing(train)
                train = apply_preprocessing(train, prep, self.config.run.scale_codes)
                test = apply_preprocessing(test, prep, self.config.run.scale_codes)
            spec = ClassifierSpec(kind=clf.kind, params=cell.params)
            mbt, model = measure_mbt(
                spec,
                train.X,
                train.y,
                seed=derive_seed(cell.seed, "timing-fit"),
                runs=self.config.timing.mbt_runs,
                profile=self.config.run.profile,
            )
            response = measure_response_time(model, test.X)
            write_model(model, model_path(self.out, ds_cfg.name, clf.kind.label), prep)
            records[(ds_cfg.name, clf.kind.label)] = TimingRecord(
                dataset=ds_cfg.name,
                classifier=clf.kind.label,
                mbt_seconds=mbt,
                avg_response_seconds=response,
                n_train=len(train),
                n_test=len(test),
            )
            logger.info(
                f"Timing {ds_cfg.name}/{clf.kind.label}: MBT {mbt:.4f}s, "
                f"response {response:.3e}s"
            )
        ordered = [records[key] for key in sorted(records, key=self._cell_order)]
        write_timing(self.out / "timing.csv", ordered)
        return ordered

    def _cell_order(self, key: tuple[str, str]) -> tuple[int, int]:
        datasets = [d.name for d in self.config.datasets]
        labels = [c.kind.label for c in self.config.classifiers]
        dataset, label = key
        return (
            datasets.index(dataset) if dataset in datasets else len(datasets),
            labels.index(label) if label in labels else len(labels),
        )

    # Evaluate
    def evaluate(self) -> list[ValidationReport]:
        """Turn stored predictions into validation reports, metric CSV and results matrices."""
        manifest = self._load_manifest()
        known = {(c.dataset, c.classifier): c for c in manifest.cells}
        reports = []
        with Stopwatch() as watch:
            for ds_cfg, clf in self.select_cells():
                cell = known.get((ds_cfg.name, clf.kind.label))
                seed = cell.seed if cell else self.cell_seed(ds_cfg.name, clf)
                seeds = cell.repeat_seeds if cell else repeat_seeds(seed, self.config.validation.repeats)
                predictions = []
                for repeat in range(len(seeds)):
                    predictions.extend(
                        read_predictions(predictions_path(self.out, ds_cfg.name, clf.kind.label, repeat))
                    )
                echo = ValidationEcho(
                    dataset=ds_cfg.name,
                    classifier=clf.kind.label,
                    plan=self.cell_plan(ds_cfg.name, clf),
                    base_seed=seed,
                    repeat_seeds=seeds,
                    params=cell.params if cell else clf.params,
                )
                report = report_from_predictions(predictions, echo)
                write_validation_report(
                    self.out / "reports" / f"{ds_cfg.name}__{clf.kind.label}.json", report
                )
                reports.append(report)
            write_metric_csv(self.out / "metrics.csv", reports)
            self.write_results_matrices(reports)
        self._finish_stage("evaluate", watch, f"{len(reports)} reports")
        return reports

    def write_results_matrices(self, reports: list[ValidationReport]) -> list[str]:
        datasets = [d.name for d in self.config.datasets]
        labels = [c.kind.label for c in self.config.classifiers]
        if len(datasets) < 2 or len(labels) < 2:
            logger.info("Fewer than 2 datasets or classifiers: no results matrices")
            return []
        means = {(r.echo.dataset, r.echo.classifier): r.mean for r in reports}
        written = []
        for metric in self.config.run.metrics:
            values = [[getattr(means[(d, c)], metric) for c in labels] for d in datasets]
            if any(v is None for row in values for v in row):
                logger.warning(f"{metric} is undefined for some cells; no results matrix")
                continue
            write_results_matrix(
                self.out / f"results_{metric}.csv",
                ResultsMatrix(
                    values=values,
                    direction=METRIC_DIRECTIONS[metric],
                    dataset_labels=datasets,
                    classifier_labels=labels,
                    metric=metric,
                ),
            )
            written.append(metric)
        return written

    # Stats
    def stats(self) -> Optional[TestReport]:
        matrices = {}
        with Stopwatch() as watch:
            for metric in self.config.run.metrics:
                path = self.out / f"results_{metric}.csv"
                if path.exists():
                    matrices[metric] = read_results_matrix(path, metric)
            if not matrices:
                logger.info("No results matrices: statistics section skipped")
                self._finish_stage("stats", watch, "skipped")
                return None
            report = report_from_results(
                matrices, self.config.run.alphas, self.config.run.posthoc
            )
            write_test_report(self.out / "stats", report)
        self._finish_stage("stats", watch, f"{len(matrices)} metrics")
        return report

    # Report
    def report(self) -> dict:
        """Summary JSON, plot-data CSVs and the per-metric selection table."""
        with Stopwatch() as watch:
            summary = build_summary(self.out)
            write_json(self.out / "summary.json", summary)
            write_plot_data(self.out, summary)
        self._finish_stage("report", watch, f"{len(summary['cells'])} cells")
        return summary

    # Whole run
    def run(self) -> int:
        logger.info(f"Benchmark run, master seed {self.master_seed}, output {self.out}")
        self.ingest()
        self.train()
        self.evaluate()
        self.stats()
        self.report()
        return 0

    # Manifest
    def _load_manifest(self) -> Manifest:
        path = self.out / "manifest.json"
        if path.exists():
            return read_manifest(path)
        return Manifest(
            version=PACKAGE_VERSION,
            libraries=library_versions(),
            master_seed=self.master_seed,
            config=json.loads(self.config.json()),
        )

    def _write_manifest(self, manifest: Manifest) -> None:
        manifest.stage_seconds.update(self.stage_seconds)
        write_manifest(self.out / "manifest.json", manifest)

    def _finish_stage(self, stage: str, watch: Stopwatch, detail: str) -> None:
        elapsed = watch.elapsed
        self.stage_seconds[stage] = elapsed
        logger.info(f"Stage {stage}: {detail} in {elapsed:.2f}s")
        if (self.out / "manifest.json").exists() or stage == "train":
            self._write_manifest(self._load_manifest())


# Report assembly
def build_summary(out_dir: PathLike) -> dict:
    out_dir = Path(out_dir)
    paths = sorted((out_dir / "reports").glob("*.json"))
    if not paths:
        raise DataError(f"no validation reports under {out_dir / 'reports'}")
    cells = []
    for path in paths:
        report = read_validation_report(path)
        cells.append(
            {
                "dataset": report.echo.dataset,
                "classifier": report.echo.classifier,
                "rounds": len(report.rounds),
                "mean": report.mean.dict(),
            }
        )
    tests = {}
    tests_path = out_dir / "stats" / "tests.json"
    if tests_path.exists():
        for test in read_json(tests_path)["metrics"]:
            tests[test["metric"]] = {
                "f_statistic": test["friedman"]["f_statistic"],
                "p_value": test["friedman"]["p_value"],
                "decisions": test["friedman"]["decisions"],
                "mean_ranks": test["mean_ranks"],
                "critical_differences": (test.get("nemenyi") or {}).get(
                    "critical_differences", {}
                ),
            }
    return {
        "cells": cells,
        "timing": [r.dict() for r in read_timing(out_dir / "timing.csv")],
        "tests": tests,
    }


def _best(series: pd.Series, lower_better: bool) -> tuple[str, float]:
    series = series.dropna()
    label = series.idxmin() if lower_better else series.idxmax()
    return str(label), float(series[label])


def write_plot_data(out_dir: PathLike, summary: dict) -> None:
    """Chart-ready CSVs plus the table naming the best classifier per criterion."""
    out_dir = Path(out_dir)
    cells = pd.DataFrame(
        [{"dataset": c["dataset"], "classifier": c["classifier"], **c["mean"]} for c in summary["cells"]]
    )
    metric_names = [m for m in METRIC_NAMES if m in cells.columns]
    cells[metric_names] = cells[metric_names].astype(float)
    averages = cells.groupby("classifier", sort=False)[metric_names].mean()
    averages.to_csv(out_dir / "plot_metric_averages.csv", float_format=FLOAT_FORMAT)
    averages[["fpr"]].to_csv(out_dir / "plot_fpr.csv", float_format=FLOAT_FORMAT)

    selection = []
    for metric in metric_names:
        if averages[metric].notna().any():
            label, value = _best(
                averages[metric], METRIC_DIRECTIONS[metric] == Direction.LOWER_BETTER
            )
            selection.append({"criterion": metric, "classifier": label, "value": value})

    if summary["timing"]:
        timing = pd.DataFrame(summary["timing"])
        times = timing.groupby("classifier", sort=False)[
            ["mbt_seconds", "avg_response_seconds"]
        ].mean()
        times.to_csv(out_dir / "plot_response_times.csv", float_format=FLOAT_FORMAT)
        for column in ("mbt_seconds", "avg_response_seconds"):
            label, value = _best(times[column], lower_better=True)
            selection.append({"criterion": column, "classifier": label, "value": value})

    rows = []
    for metric, test in summary["tests"].items():
        for label, rank in test["mean_ranks"].items():
            rows.append(
                {
                    "metric": metric,
                    "classifier": label,
                    "mean_rank": rank,
                    **{f"cd_{a}": cd for a, cd in test["critical_differences"].items()},
                }
            )
    if rows:
        pd.DataFrame(rows).to_csv(
            out_dir / "plot_critical_differences.csv", index=False, float_format=FLOAT_FORMAT
        )
    pd.DataFrame(selection, columns=["criterion", "classifier", "value"]).to_csv(
        out_dir / "selection.csv", index=False, float_format=FLOAT_FORMAT
    )


def run_benchmark(
    config: BenchmarkConfig,
    out_dir: Optional[PathLike] = None,
    base_dir: Optional[PathLike] = None,
) -> int:
    """Entry point for a complete ingest -> report run."""
    return BenchmarkRunner(config, out_dir, base_dir).run()
