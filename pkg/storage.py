# Description: File operations for every artifact a benchmark stage reads or writes.

import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from .classifiers import TrainedModel
from .data import Dataset, load_dataset, load_schema, write_schema
from .evaluation import FoldPredictions
from .exceptions import DataError, DatasetFileNotFound
from .models import (
    METRIC_DIRECTIONS,
    METRIC_NAMES,
    ColumnKind,
    ColumnSpec,
    DatasetSchema,
    Manifest,
    Preprocessing,
    ResultsMatrix,
    TestReport,
    TimingRecord,
    ValidationReport,
)

PathLike = Union[str, Path]

CACHE_MAGIC = b"IDSB0001"
METRIC_CSV_COLUMNS = [
    "dataset",
    "classifier",
    "round",
    "repeat",
    "accuracy",
    "specificity",
    "sensitivity",
    "fpr",
    "auc",
    "mbt_s",
    "resp_s",
]
FLOAT_FORMAT = "%.17g"


def _ensure_parent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: PathLike, payload: Union[dict, list]) -> None:
    path = _ensure_parent(Path(path))
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path: PathLike) -> Union[dict, list]:
    path = Path(path)
    if not path.exists():
        raise DatasetFileNotFound(str(path))
    return json.loads(path.read_text())


# Sample Operations
def sample_schema(schema: DatasetSchema) -> DatasetSchema:
    """Schema of an ingested sample: same features, binary `label` column."""
    columns = [c for c in schema.feature_columns]
    columns.append(ColumnSpec(name="label", kind=ColumnKind.LABEL))
    return DatasetSchema(
        name=schema.name,
        version=schema.version,
        columns=columns,
        label_column="label",
        normal_label_values=["0"],
        attack_label_values=["1"],
    )


def write_sample(ds: Dataset, directory: PathLike, name: str) -> Path:
    """Write a raw dataset as `<name>.csv` plus its `<name>.schema` descriptor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame = ds.frame.copy()
    frame["label"] = ds.labels
    csv_path = directory / f"{name}.csv"
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    write_schema(sample_schema(ds.schema), directory / f"{name}.schema")
    return csv_path


def read_sample(directory: PathLike, name: str) -> Dataset:
    directory = Path(directory)
    return load_dataset(directory / f"{name}.csv", load_schema(directory / f"{name}.schema"))


# Encoded Dataset Cache
def write_cache(ds: Dataset, path: PathLike) -> None:
    """IDSB0001 layout: magic, uint64 header length, JSON header, float64 columns, int8 labels."""
    if not ds.encoded:
        raise DataError("only encoded datasets can be cached")
    X = ds.X
    header = json.dumps(
        {
            "schema": json.loads(ds.schema.json()),
            "columns": ds.schema.feature_names,
            "preprocessing": ds.preprocessing.dict(),
            "rows": len(ds),
        },
        sort_keys=True,
    ).encode("utf-8")
    path = _ensure_parent(Path(path))
    with path.open("wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for j in range(X.shape[1]):
            fh.write(np.ascontiguousarray(X[:, j], dtype="<f8").tobytes())
        fh.write(ds.labels.astype(np.int8).tobytes())


def read_cache(path: PathLike) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DatasetFileNotFound(str(path))
    raw = path.read_bytes()
    if raw[:8] != CACHE_MAGIC:
        raise DataError(f"{path}: not an IDSB0001 cache file")
    (length,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + length].decode("utf-8"))
    n, columns = header["rows"], header["columns"]
    offset = 16 + length
    data = {}
    for name in columns:
        data[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).astype(np.float64)
        offset += 8 * n
    labels = np.frombuffer(raw, dtype=np.int8, count=n, offset=offset)
    return Dataset(
        DatasetSchema(**header["schema"]),
        pd.DataFrame(data, columns=columns),
        labels,
        Preprocessing(**header["preprocessing"]),
    )


# Model File Operations
def model_path(out_dir: PathLike, dataset: str, classifier: str) -> Path:
    return Path(out_dir) / "models" / f"{dataset}__{classifier}.json"


def write_model(
    model: TrainedModel, path: PathLike, preprocessing: Optional[Preprocessing] = None
) -> None:
    payload = model.to_dict()
    payload["preprocessing"] = preprocessing.dict() if preprocessing else None
    write_json(path, payload)


def read_model(path: PathLike) -> tuple[TrainedModel, Optional[Preprocessing]]:
    payload = read_json(path)
    prep = payload.get("preprocessing")
    return TrainedModel.from_dict(payload), Preprocessing(**prep) if prep else None


# Prediction Bundle Operations
def predictions_path(out_dir: PathLike, dataset: str, classifier: str, repeat: int) -> Path:
    return Path(out_dir) / "predictions" / f"{dataset}__{classifier}__r{repeat:03d}.npz"


def write_predictions(path: PathLike, predictions: list[FoldPredictions]) -> None:
    path = _ensure_parent(Path(path))
    sizes = np.array([len(p.truth) for p in predictions], dtype=np.int64)
    np.savez(
        path,
        coords=np.array([[p.repeat, p.round, p.fold] for p in predictions], dtype=np.int64).reshape(-1, 3),
        sizes=sizes,
        truth=np.concatenate([p.truth for p in predictions]) if predictions else np.zeros(0, np.int8),
        labels=np.concatenate([p.labels for p in predictions]) if predictions else np.zeros(0, np.int8),
        scores=np.concatenate([p.scores for p in predictions]) if predictions else np.zeros(0),
        mbt=np.array([p.mbt_seconds for p in predictions]),
        resp=np.array([p.response_seconds for p in predictions]),
    )


def read_predictions(path: PathLike) -> list[FoldPredictions]:
    path = Path(path)
    if not path.exists():
        raise DatasetFileNotFound(str(path))
    with np.load(path) as bundle:
        bounds = np.r_[0, np.cumsum(bundle["sizes"])]
        out = []
        for i, (repeat, rnd, fold) in enumerate(bundle["coords"]):
            lo, hi = bounds[i], bounds[i + 1]
            out.append(
                FoldPredictions(
                    int(repeat),
                    int(rnd),
                    int(fold),
                    truth=bundle["truth"][lo:hi],
                    labels=bundle["labels"][lo:hi],
                    scores=bundle["scores"][lo:hi],
                    mbt_seconds=float(bundle["mbt"][i]),
                    response_seconds=float(bundle["resp"][i]),
                )
            )
    return out


# Validation Report Operations
def report_rows(report: ValidationReport) -> list[dict]:
    rows = []
    for r in report.rounds:
        m = r.metrics
        rows.append(
            {
                "dataset": report.echo.dataset,
                "classifier": report.echo.classifier,
                "round": r.round,
                "repeat": r.repeat,
                **{name: getattr(m, name) for name in METRIC_NAMES},
                "mbt_s": m.mbt_seconds,
                "resp_s": m.avg_response_seconds,
            }
        )
    return rows


def write_metric_csv(path: PathLike, reports: list[ValidationReport]) -> None:
    """One row per round; undefined metrics are written as empty cells."""
    rows = [row for report in reports for row in report_rows(report)]
    frame = pd.DataFrame(rows, columns=METRIC_CSV_COLUMNS)
    frame.to_csv(_ensure_parent(Path(path)), index=False, float_format=FLOAT_FORMAT)


def write_validation_report(path: PathLike, report: ValidationReport) -> None:
    write_json(path, json.loads(report.json()))


def read_validation_report(path: PathLike) -> ValidationReport:
    return ValidationReport(**read_json(path))


# Results Matrix Operations
def write_results_matrix(path: PathLike, matrix: ResultsMatrix) -> None:
    frame = pd.DataFrame(
        matrix.values, index=matrix.dataset_labels, columns=matrix.classifier_labels
    )
    frame.index.name = "dataset"
    frame.to_csv(_ensure_parent(Path(path)), float_format=FLOAT_FORMAT)


def read_results_matrix(path: PathLike, metric: str = "") -> ResultsMatrix:
    """Datasets as rows, classifiers as columns, labels in the first row/column."""
    path = Path(path)
    if not path.exists():
        raise DatasetFileNotFound(str(path))
    frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
    metric = metric or path.stem.removeprefix("results_")
    try:
        return ResultsMatrix(
            values=frame.to_numpy(dtype=np.float64).tolist(),
            direction=METRIC_DIRECTIONS.get(metric, METRIC_DIRECTIONS["accuracy"]),
            dataset_labels=[str(i) for i in frame.index],
            classifier_labels=[str(c) for c in frame.columns],
            metric=metric,
        )
    except ValueError as e:
        raise DataError(f"{path}: {e}")


def read_mean_ranks(path: PathLike) -> dict[str, dict[str, float]]:
    """Classifiers as rows, metrics as columns -> metric -> classifier -> mean rank."""
    path = Path(path)
    if not path.exists():
        raise DatasetFileNotFound(str(path))
    frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
    return {
        str(metric): {str(c): float(v) for c, v in frame[metric].items()}
        for metric in frame.columns
    }


# Test Report Operations
def report_table_rows(report: TestReport) -> list[dict]:
    rows = []
    for test in report.metrics:
        f = test.friedman
        rows.append(
            {
                "metric": test.metric,
                "test": "friedman",
                "pair": "",
                "statistic": f.f_statistic,
                "p_value": f.p_value,
                **{f"alpha_{a}": d.value for a, d in f.decisions.items()},
            }
        )
        if test.nemenyi is None:
            continue
        for pair in test.nemenyi.pairs:
            rows.append(
                {
                    "metric": test.metric,
                    "test": "nemenyi",
                    "pair": f"{pair.x} vs {pair.y}",
                    "statistic": pair.gamma,
                    "p_value": pair.p_adjusted,
                    **{f"alpha_{a}": d.value for a, d in pair.decisions.items()},
                }
            )
    return rows


def write_test_report(directory: PathLike, report: TestReport) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(report_table_rows(report)).to_csv(
        directory / "tests.csv", index=False, float_format="%.4f"
    )
    write_json(directory / "tests.json", json.loads(report.json()))


def read_test_report(path: PathLike) -> TestReport:
    return TestReport(**read_json(path))


# Timing And Manifest Operations
def write_timing(path: PathLike, records: list[TimingRecord]) -> None:
    frame = pd.DataFrame([r.dict() for r in records], columns=list(TimingRecord.__fields__))
    frame.to_csv(_ensure_parent(Path(path)), index=False, float_format=FLOAT_FORMAT)


def read_timing(path: PathLike) -> list[TimingRecord]:
    path = Path(path)
    if not path.exists():
        return []
    frame = pd.read_csv(path, float_precision="round_trip")
    return [TimingRecord(**row) for row in frame.to_dict(orient="records")]


def write_manifest(path: PathLike, manifest: Manifest) -> None:
    write_json(path, json.loads(manifest.json()))
    logger.debug(f"Manifest written to {path}")


def read_manifest(path: PathLike) -> Manifest:
    return Manifest(**read_json(path))
