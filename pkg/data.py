# Description: Dataset ingestion, label binarization, encoding/normalization and
# seeded sampling, hold-out and k-fold partitioning.

import math
import re
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from .exceptions import (
    ConfigInvalid,
    DataError,
    DatasetFileNotFound,
    InsufficientInstances,
    KTooLarge,
    SchemaMismatch,
    TooManyUnparseableRows,
    UnparseableRow,
)
from .models import (
    ColumnKind,
    ColumnSpec,
    DatasetSchema,
    Preprocessing,
    SchemaName,
)

SCHEMA_DIR = Path(__file__).parent / "schemas"
BUILTIN_SCHEMAS = {
    SchemaName.NSLKDD: "nslkdd.schema",
    SchemaName.UNSWNB15: "unswnb15.schema",
    SchemaName.CIDDS001: "cidds001.schema",
}
MAX_SKIPPED_FRACTION = 0.01
MISSING_TOKENS = {"", "?", "-", "nan", "NaN", "null", "NULL"}
SUFFIXES = {"k": 1e3, "m": 1e6, "g": 1e9}
NUMBER_WITH_SUFFIX = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([kKmMgG])$")


class Dataset:
    """Feature table plus binary labels (1 = attack, 0 = normal).

    Instances are never mutated: every operation returns a new Dataset, and the
    label array is read-only, so one Dataset can be shared across workers.
    """

    def __init__(
        self,
        schema: DatasetSchema,
        frame: pd.DataFrame,
        labels: np.ndarray,
        preprocessing: Optional[Preprocessing] = None,
    ):
        if len(frame) != len(labels):
            raise DataError(f"{len(frame)} rows but {len(labels)} labels")
        if list(frame.columns) != schema.feature_names:
            raise DataError("frame columns do not follow the schema feature order")
        self.schema = schema
        self.frame = frame.reset_index(drop=True)
        self.labels = np.asarray(labels, dtype=np.int8).copy()
        self.labels.setflags(write=False)
        self.preprocessing = preprocessing

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def encoded(self) -> bool:
        return self.preprocessing is not None

    @property
    def X(self) -> np.ndarray:
        numeric = all(
            pd.api.types.is_numeric_dtype(dtype) for dtype in self.frame.dtypes
        )
        if not numeric:
            raise DataError("dataset has categorical columns; encode it first")
        return self.frame.to_numpy(dtype=np.float64)

    @property
    def y(self) -> np.ndarray:
        return self.labels

    def class_counts(self) -> tuple[int, int]:
        n_attack = int(self.labels.sum())
        return len(self) - n_attack, n_attack

    def take(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.schema,
            self.frame.iloc[indices],
            self.labels[indices],
            self.preprocessing,
        )


# Schema descriptors
def load_schema(path: str | Path) -> DatasetSchema:
    """Parse a plain-text schema descriptor."""
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(str(path), "schema descriptor not found")
    header: dict[str, str] = {}
    columns: list[ColumnSpec] = []
    in_columns = False
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[columns]":
            in_columns = True
            continue
        if in_columns:
            kind, _, name = line.partition(" ")
            try:
                columns.append(ColumnSpec(name=name.strip(), kind=ColumnKind(kind)))
            except ValueError as e:
                raise ConfigInvalid(f"{path}:{line_no}", f"bad column line: {e}")
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigInvalid(f"{path}:{line_no}", "expected 'key = value'")
        header[key.strip()] = value.strip()

    def values(key: str, default: str = "") -> list[str]:
        raw = header.get(key, default)
        return [v.strip() for v in raw.split(",") if v.strip()]

    try:
        return DatasetSchema(
            name=SchemaName(header.get("name", "GENERIC")),
            version=int(header.get("version", "1")),
            columns=columns,
            label_column=header["label"],
            normal_label_values=values("normal", "normal"),
            attack_label_values=values("attack"),
            attack_type_column=header.get("attack_type") or None,
            attack_type_values=values("attack_types"),
        )
    except (KeyError, ValueError) as e:
        raise ConfigInvalid(str(path), f"invalid schema descriptor: {e}")


def write_schema(schema: DatasetSchema, path: str | Path) -> None:
    lines = [
        f"version = {schema.version}",
        f"name = {schema.name.value}",
        f"label = {schema.label_column}",
        f"normal = {', '.join(schema.normal_label_values)}",
        f"attack = {', '.join(schema.attack_label_values)}",
    ]
    if schema.attack_type_column:
        lines.append(f"attack_type = {schema.attack_type_column}")
        lines.append(f"attack_types = {', '.join(schema.attack_type_values)}")
    lines.append("")
    lines.append("[columns]")
    lines.extend(f"{c.kind.value} {c.name}" for c in schema.columns)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def builtin_schema(name: SchemaName | str) -> DatasetSchema:
    name = SchemaName(name)
    if name not in BUILTIN_SCHEMAS:
        raise ConfigInvalid(name.value, "no builtin descriptor; use a .schema file")
    return load_schema(SCHEMA_DIR / BUILTIN_SCHEMAS[name])


def resolve_schema(
    descriptor: str, path: Optional[str] = None, label_column: Optional[str] = None
) -> DatasetSchema:
    """A builtin name, GENERIC (inferred from the file) or a descriptor path."""
    if descriptor in SchemaName.__members__:
        if descriptor == SchemaName.GENERIC.value:
            if path is None or label_column is None:
                raise ConfigInvalid(descriptor, "GENERIC needs a data path and label_column")
            return infer_schema(path, label_column)
        return builtin_schema(descriptor)
    return load_schema(descriptor)


def infer_schema(
    path: str | Path,
    label_column: str,
    normal_values: Optional[list[str]] = None,
) -> DatasetSchema:
    """GENERIC schema: numeric where every non-missing value parses, else categorical."""
    frame = _read_raw(Path(path), header=True, names=None)[0]
    if label_column not in frame.columns:
        raise SchemaMismatch(label_column)
    columns = []
    for name in frame.columns:
        if name == label_column:
            columns.append(ColumnSpec(name=name, kind=ColumnKind.LABEL))
            continue
        _, failed = _parse_numeric(frame[name])
        kind = ColumnKind.CATEGORICAL if failed.any() else ColumnKind.NUMERIC
        columns.append(ColumnSpec(name=name, kind=kind))
    return DatasetSchema(
        name=SchemaName.GENERIC,
        columns=columns,
        label_column=label_column,
        normal_label_values=normal_values or ["normal", "0"],
        attack_label_values=["*"],
    )


# Ingestion
def _detect_delimiter(first_line: str) -> str:
    return "\t" if first_line.count("\t") > first_line.count(",") else ","


def _read_raw(
    path: Path, header: bool, names: Optional[list[str]]
) -> tuple[pd.DataFrame, int]:
    with path.open("r", encoding="utf-8", errors="replace") as f:
        first_line = f.readline()
    bad_lines: list[list[str]] = []

    def on_bad_line(fields: list[str]) -> None:
        bad_lines.append(fields)
        return None

    frame = pd.read_csv(
        path,
        sep=_detect_delimiter(first_line),
        header=0 if header else None,
        names=names,
        dtype=str,
        keep_default_na=False,
        skipinitialspace=True,
        engine="python",
        on_bad_lines=on_bad_line,
    )
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame, len(bad_lines)


def _parse_numeric(series: pd.Series) -> tuple[pd.Series, pd.Series]:
    """Parse numbers (with K/M/G suffixes); returns (values, failed mask)."""
    text = series.astype(str).str.strip()
    missing = text.isin(MISSING_TOKENS)
    values = pd.to_numeric(text.where(~missing), errors="coerce")
    failed = values.isna() & ~missing
    if failed.any():
        suffixed = text[failed].str.extract(NUMBER_WITH_SUFFIX)
        scale = suffixed[1].str.lower().map(SUFFIXES)
        rescued = pd.to_numeric(suffixed[0], errors="coerce") * scale
        values.loc[rescued.index] = rescued
        failed = values.isna() & ~missing
    return values.astype(np.float64), failed


def _header_layout(path: Path, schema: DatasetSchema) -> tuple[bool, list[str]]:
    with path.open("r", encoding="utf-8", errors="replace") as f:
        first_line = f.readline().rstrip("\r\n")
    fields = [f.strip().strip('"') for f in first_line.split(_detect_delimiter(first_line))]
    declared = schema.column_names
    lowered = {name.lower() for name in declared}
    matches = sum(1 for f in fields if f.lower() in lowered)
    if matches * 2 >= len(fields):
        present = {f.lower() for f in fields}
        for name in declared:
            if name.lower() not in present:
                raise SchemaMismatch(name)
        return True, fields
    # headerless: the public distributions may omit trailing auxiliary attributes
    names = list(declared)
    while len(names) > len(fields) and schema.columns[len(names) - 1].kind == ColumnKind.AUXILIARY:
        names.pop()
    if len(names) != len(fields):
        raise SchemaMismatch(
            declared[min(len(fields), len(declared) - 1)],
            f"headerless file has {len(fields)} fields, schema declares {len(declared)}",
        )
    return False, names


def binarize_labels(frame: pd.DataFrame, schema: DatasetSchema) -> pd.Series:
    """1 = attack, 0 = normal, -1 = excluded from the dataset."""
    label = frame[schema.label_column].astype(str).str.strip().str.lower()
    normals = {v.lower() for v in schema.normal_label_values}
    attacks = {v.lower() for v in schema.attack_label_values}
    is_normal = label.isin(normals)
    if "*" in attacks:
        is_attack = ~is_normal
    else:
        is_attack = label.isin(attacks)
    if schema.attack_type_column and schema.attack_type_column in frame.columns:
        attack_type = frame[schema.attack_type_column].astype(str).str.strip().str.lower()
        is_attack = is_attack | attack_type.isin(
            {v.lower() for v in schema.attack_type_values}
        )
    out = pd.Series(-1, index=frame.index, dtype=np.int8)
    out[is_normal & ~is_attack] = 0
    out[is_attack] = 1
    return out


def load_dataset(path: str | Path, schema: DatasetSchema) -> Dataset:
    """Read a delimited text file into a raw (not yet encoded) Dataset."""
    path = Path(path)
    if not path.exists():
        raise DatasetFileNotFound(str(path))
    has_header, names = _header_layout(path, schema)
    frame, bad_field_rows = _read_raw(
        path, header=has_header, names=None if has_header else names
    )
    if has_header:
        by_lower = {c.lower(): c for c in frame.columns}
        frame = frame.rename(columns={by_lower[n.lower()]: n for n in schema.column_names})
    total = len(frame) + bad_field_rows
    offset = 2 if has_header else 1
    skipped = [
        UnparseableRow(-1, "wrong number of fields") for _ in range(bad_field_rows)
    ]

    keep = pd.Series(True, index=frame.index)
    numeric: dict[str, pd.Series] = {}
    for column in schema.feature_columns:
        if column.kind != ColumnKind.NUMERIC:
            continue
        values, failed = _parse_numeric(frame[column.name])
        for idx in np.flatnonzero(failed.to_numpy()):
            if keep.iloc[idx]:
                value = frame[column.name].iloc[idx]
                skipped.append(
                    UnparseableRow(int(idx) + offset, f"{column.name}={value!r} is not numeric")
                )
        keep &= ~failed
        numeric[column.name] = values

    if skipped:
        for row in skipped[:5]:
            logger.warning(f"Skipping unparseable row in {path.name}: {row.detail}")
        if len(skipped) > MAX_SKIPPED_FRACTION * max(total, 1):
            raise TooManyUnparseableRows(skipped, total)

    labels = binarize_labels(frame, schema)
    excluded = int((labels < 0).sum())
    if excluded:
        logger.debug(f"{path.name}: {excluded} rows are neither normal nor attack, excluded")
    keep &= labels >= 0

    features = pd.DataFrame(index=frame.index)
    for column in schema.feature_columns:
        if column.kind == ColumnKind.NUMERIC:
            features[column.name] = numeric[column.name]
        else:
            features[column.name] = frame[column.name].astype(str).str.strip()
    mask = keep.to_numpy()
    ds = Dataset(schema, features[mask], labels[mask].to_numpy())
    if len(ds) == 0:
        logger.warning(f"{path.name}: no data rows")
    n_normal, n_attack = ds.class_counts()
    logger.info(
        f"Loaded {path.name}: {len(ds)} rows ({n_attack} attack, {n_normal} normal), "
        f"{len(skipped)} skipped"
    )
    return ds


def dataset_from_frame(
    frame: pd.DataFrame, schema: DatasetSchema
) -> Dataset:
    """Build a raw Dataset from an in-memory table laid out like the schema."""
    labels = binarize_labels(frame, schema)
    keep = (labels >= 0).to_numpy()
    features = pd.DataFrame(index=frame.index)
    for column in schema.feature_columns:
        if column.kind == ColumnKind.NUMERIC:
            features[column.name] = _parse_numeric(frame[column.name])[0]
        else:
            features[column.name] = frame[column.name].astype(str).str.strip()
    return Dataset(schema, features[keep], labels[keep].to_numpy())


# Sampling and partitioning
def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_stratified(ds: Dataset, n_normal: int, n_attack: int, seed: int) -> Dataset:
    """Draw exactly n_normal normal and n_attack attack rows without replacement."""
    rng = np.random.default_rng(seed)
    chosen = []
    for label, wanted in ((0, n_normal), (1, n_attack)):
        pool = np.flatnonzero(ds.labels == label)
        if len(pool) < wanted:
            raise InsufficientInstances(label, len(pool), wanted)
        chosen.append(rng.choice(pool, size=wanted, replace=False))
    return ds.take(np.sort(np.concatenate(chosen)))


def holdout_indices(
    labels: np.ndarray, train_fraction: float, seed: int, stratified: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < train_fraction < 1:
        raise ConfigInvalid("train_fraction", f"{train_fraction} is not in (0, 1)")
    rng = np.random.default_rng(seed)
    n = len(labels)
    if not stratified:
        perm = rng.permutation(n)
        n_train = _round_half_up(train_fraction * n)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])
    train_parts, test_parts = [], []
    for label in (0, 1):
        pool = np.flatnonzero(labels == label)
        perm = rng.permutation(pool)
        n_train = _round_half_up(train_fraction * len(pool))
        train_parts.append(perm[:n_train])
        test_parts.append(perm[n_train:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def split_holdout(
    ds: Dataset, train_fraction: float, seed: int, stratified: bool = False
) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = holdout_indices(ds.labels, train_fraction, seed, stratified)
    return ds.take(train_idx), ds.take(test_idx)


def kfold_indices(n: int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if k < 2:
        raise ConfigInvalid("k", "k-fold needs k >= 2")
    if k > n:
        raise KTooLarge(k, n)
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)  # first n % k folds hold one extra index
    pairs = []
    for i, fold in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        pairs.append((np.sort(train), np.sort(fold)))
    return pairs


def kfold_partitions(ds: Dataset, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """k (train, test) index pairs; every index lands in exactly one test fold."""
    return kfold_indices(len(ds), k, seed)


# Encoding and normalization
def fit_preprocessing(train: Dataset) -> Preprocessing:
    if train.encoded:
        raise DataError("dataset is already encoded")
    prep = Preprocessing()
    for column in train.schema.feature_columns:
        series = train.frame[column.name]
        if column.kind == ColumnKind.CATEGORICAL:
            prep.encoders[column.name] = {
                str(value): code for code, value in enumerate(pd.unique(series), start=1)
            }
            continue
        median = series.median()
        median = 0.0 if pd.isna(median) else float(median)
        filled = series.fillna(median)
        prep.medians[column.name] = median
        prep.minimums[column.name] = float(filled.min()) if len(filled) else 0.0
        prep.maximums[column.name] = float(filled.max()) if len(filled) else 0.0
    return prep


def apply_preprocessing(
    ds: Dataset, prep: Preprocessing, scale_codes: bool = False
) -> Dataset:
    """Reapply (never refit) training-partition encoders and scaling."""
    if ds.encoded:
        raise DataError("dataset is already encoded")
    columns = {}
    for column in ds.schema.feature_columns:
        series = ds.frame[column.name]
        if column.kind == ColumnKind.CATEGORICAL:
            encoder = prep.encoders[column.name]
            codes = series.map(encoder)
            unseen = codes.isna()
            if unseen.any():
                logger.warning(
                    f"UnseenCategory: {int(unseen.sum())} values of '{column.name}' "
                    f"(e.g. {series[unseen].iloc[0]!r}) mapped to code 0"
                )
            codes = codes.fillna(0).astype(np.float64)
            if scale_codes and encoder:
                codes = codes / len(encoder)
            columns[column.name] = codes
            continue
        values = series.fillna(prep.medians[column.name]).astype(np.float64)
        low, high = prep.minimums[column.name], prep.maximums[column.name]
        if high > low:
            columns[column.name] = (values - low) / (high - low)
        else:
            columns[column.name] = values * 0.0
    frame = pd.DataFrame(columns, index=ds.frame.index)[ds.schema.feature_names]
    return Dataset(ds.schema, frame, ds.labels, prep)


def encode_and_normalize(ds: Dataset, scale_codes: bool = False) -> Dataset:
    return apply_preprocessing(ds, fit_preprocessing(ds), scale_codes=scale_codes)


# Synthetic fixture
SYNTHETIC_COLUMNS = [
    ("duration", ColumnKind.NUMERIC),
    ("protocol_type", ColumnKind.CATEGORICAL),
    ("service", ColumnKind.CATEGORICAL),
    ("flag", ColumnKind.CATEGORICAL),
    ("src_bytes", ColumnKind.NUMERIC),
    ("dst_bytes", ColumnKind.NUMERIC),
    ("count", ColumnKind.NUMERIC),
    ("srv_count", ColumnKind.NUMERIC),
    ("serror_rate", ColumnKind.NUMERIC),
    ("same_srv_rate", ColumnKind.NUMERIC),
    ("dst_host_count", ColumnKind.NUMERIC),
]


def synthetic_schema() -> DatasetSchema:
    columns = [ColumnSpec(name=n, kind=k) for n, k in SYNTHETIC_COLUMNS]
    columns.append(ColumnSpec(name="label", kind=ColumnKind.LABEL))
    return DatasetSchema(
        name=SchemaName.GENERIC,
        columns=columns,
        label_column="label",
        normal_label_values=["normal"],
        attack_label_values=["*"],
    )


def synthetic_dos_flows(
    n_rows: int = 2000, attack_fraction: float = 0.2, seed: int = 0
) -> pd.DataFrame:
    """Deterministic DoS-flavoured connection table for pipeline fixtures."""
    rng = np.random.default_rng(seed)
    n_attack = _round_half_up(attack_fraction * n_rows)
    n_normal = n_rows - n_attack

    def block(n: int, attack: bool) -> pd.DataFrame:
        # a share of each class imitates the other so no learner is perfect
        mimic = rng.random(n) < 0.08
        dos = attack != mimic
        proto = np.where(
            dos,
            rng.choice(["tcp", "icmp", "udp"], n, p=[0.7, 0.25, 0.05]),
            rng.choice(["tcp", "udp", "icmp"], n, p=[0.8, 0.15, 0.05]),
        )
        service = np.where(
            dos,
            rng.choice(["private", "ecr_i", "http", "other"], n, p=[0.5, 0.25, 0.15, 0.1]),
            rng.choice(["http", "smtp", "domain_u", "ftp_data"], n, p=[0.55, 0.2, 0.15, 0.1]),
        )
        flag = np.where(
            dos,
            rng.choice(["S0", "REJ", "SF"], n, p=[0.6, 0.2, 0.2]),
            rng.choice(["SF", "RSTO", "S0"], n, p=[0.9, 0.07, 0.03]),
        )
        return pd.DataFrame(
            {
                "duration": np.where(dos, 0, rng.exponential(2.0, n).round(3)),
                "protocol_type": proto,
                "service": service,
                "flag": flag,
                "src_bytes": np.where(
                    dos, rng.choice([0, 1032, 28], n), rng.lognormal(5.5, 1.0, n).round()
                ),
                "dst_bytes": np.where(dos, 0, rng.lognormal(7.5, 1.2, n).round()),
                "count": np.where(dos, rng.poisson(180, n), rng.poisson(6, n)),
                "srv_count": np.where(dos, rng.poisson(20, n), rng.poisson(8, n)),
                "serror_rate": np.where(dos, rng.beta(8, 2, n), rng.beta(1, 25, n)).round(2),
                "same_srv_rate": np.where(dos, rng.beta(2, 6, n), rng.beta(9, 1, n)).round(2),
                "dst_host_count": rng.integers(1, 256, n),
                "label": "dos" if attack else "normal",
            }
        )

    frame = pd.concat([block(n_normal, False), block(n_attack, True)], ignore_index=True)
    return frame.iloc[rng.permutation(len(frame))].reset_index(drop=True)
