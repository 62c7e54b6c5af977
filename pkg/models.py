# Description: Pydantic data models dictate what is passed between stages, files and the API.

import math
from enum import Enum
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, BaseSettings, Extra, Field, root_validator, validator


# Dataset Schema Models
class SchemaName(str, Enum):
    CIDDS001 = "CIDDS001"
    UNSWNB15 = "UNSWNB15"
    NSLKDD = "NSLKDD"
    GENERIC = "GENERIC"


class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    AUXILIARY = "auxiliary"  # declared attribute, never a feature
    LABEL = "label"


class ColumnSpec(BaseModel):
    name: str
    kind: ColumnKind


class DatasetSchema(BaseModel):
    name: SchemaName
    version: int = 1
    columns: list[ColumnSpec]  # every declared attribute, in file order
    label_column: str
    normal_label_values: list[str] = ["normal"]
    attack_label_values: list[str] = ["*"]  # "*" = every non-normal label
    attack_type_column: Optional[str] = None
    attack_type_values: list[str] = []

    @root_validator(skip_on_failure=True)
    def check_label(cls, values):
        columns = values["columns"]
        label = values["label_column"]
        labels = [c.name for c in columns if c.kind == ColumnKind.LABEL]
        if labels != [label]:
            raise ValueError(f"exactly one label column '{label}' expected, got {labels}")
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names")
        attack_type = values.get("attack_type_column")
        if attack_type is not None and attack_type not in names:
            raise ValueError(f"attack type column '{attack_type}' not declared")
        return values

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def feature_columns(self) -> list[ColumnSpec]:
        return [
            c
            for c in self.columns
            if c.kind in (ColumnKind.NUMERIC, ColumnKind.CATEGORICAL)
        ]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.feature_columns]

    @property
    def feature_count(self) -> int:
        return len(self.feature_columns)

    @property
    def declared_attributes(self) -> list[ColumnSpec]:
        """Every attribute other than the class column."""
        return [c for c in self.columns if c.kind != ColumnKind.LABEL]


class Preprocessing(BaseModel):
    """Encoders and scaling statistics learned on a training partition."""

    encoders: dict[str, dict[str, int]] = {}
    medians: dict[str, float] = {}
    minimums: dict[str, float] = {}
    maximums: dict[str, float] = {}


# Split Models
class SplitKind(str, Enum):
    HOLDOUT = "holdout"
    KFOLD = "kfold"


class SplitPlan(BaseModel):
    kind: SplitKind = SplitKind.HOLDOUT
    train_fraction: float = 0.6
    k: int = 10
    seed: int = 0
    rounds: int = 1
    repeats: int = 1
    stratified: bool = False

    @validator("train_fraction")
    def check_fraction(cls, v):
        if not 0 < v < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        return v

    @validator("k")
    def check_k(cls, v):
        if v < 2:
            raise ValueError("k must be at least 2")
        return v

    @validator("rounds", "repeats")
    def check_positive(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v


class SampleSpec(BaseModel):
    n_normal: int
    n_attack: int


# Learner Parameter Models
class SplitMode(str, Enum):
    BEST = "best"
    RANDOM_CUT = "random_cut"


class TreeTask(str, Enum):
    CLASSIFY_GINI = "classify_gini"
    REGRESS_MSE = "regress_mse"
    SECOND_ORDER = "second_order"


class TreeParams(BaseModel):
    max_depth: int = 10
    min_leaf_size: int = 2
    min_split_size: int = 5
    feature_subset_size: Optional[int] = None  # None = all features
    split_mode: SplitMode = SplitMode.BEST
    task: TreeTask = TreeTask.CLASSIFY_GINI
    # SECOND_ORDER only
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0

    @validator("max_depth", "min_leaf_size")
    def check_at_least_one(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v


class SplitRule(BaseModel):
    feature_index: int
    threshold: float  # left if value <= threshold
    gain: float


class FeatureSubset(str, Enum):
    ALL = "all"
    SQRT = "sqrt"
    LOG2 = "log2"


class ForestParams(BaseModel):
    n_estimators: int = 500
    max_depth: int = 26
    min_split_size: int = 2
    min_leaf_size: int = 1
    feature_subset: Union[FeatureSubset, int] = FeatureSubset.SQRT
    bootstrap: bool = True
    split_mode: SplitMode = SplitMode.BEST
    n_jobs: int = 1


class BoostKind(str, Enum):
    ADABOOST = "adaboost"
    GBM = "gbm"
    REGULARIZED_GB = "regularized_gb"


class AdaBoostParams(BaseModel):
    n_estimators: int = 50
    learning_rate: float = 0.1


class GbmParams(BaseModel):
    n_estimators: int = 500
    max_depth: int = 3
    min_split_size: int = 100
    min_leaf_size: int = 1
    learning_rate: float = 0.1


class RegularizedGbParams(BaseModel):
    n_estimators: int = 100
    max_depth: int = 8
    min_child_weight: float = 1.0
    gamma: float = 2.0
    subsample: float = 0.6
    reg_lambda: float = 1.0
    learning_rate: float = 0.3

    @validator("subsample")
    def check_subsample(cls, v):
        if not 0 < v <= 1:
            raise ValueError("subsample must lie in (0, 1]")
        return v


class MlpParams(BaseModel):
    hidden_size: int = 100
    learning_rate: float = 0.001
    max_iter: int = 200
    batch_size: int = 32

    @validator("hidden_size", "batch_size")
    def check_at_least_one(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v


class ClassifierKind(str, Enum):
    CART = "cart"
    RANDOM_FOREST = "random_forest"
    EXTRA_TREES = "extra_trees"
    ADABOOST = "adaboost"
    GBM = "gbm"
    REGULARIZED_GB = "regularized_gb"
    MLP = "mlp"

    @property
    def label(self) -> str:
        return CLASSIFIER_LABELS[self]


CLASSIFIER_LABELS = {
    ClassifierKind.CART: "CART",
    ClassifierKind.RANDOM_FOREST: "RF",
    ClassifierKind.EXTRA_TREES: "ETC",
    ClassifierKind.ADABOOST: "AB",
    ClassifierKind.GBM: "GBM",
    ClassifierKind.REGULARIZED_GB: "XGB",
    ClassifierKind.MLP: "MLP",
}


class ClassifierSpec(BaseModel):
    kind: ClassifierKind
    params: dict = {}

    @property
    def label(self) -> str:
        return self.kind.label


# Evaluation Models
class ConfusionMatrix(BaseModel):
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


class MetricSet(BaseModel):
    # None = undefined (zero denominator)
    accuracy: Optional[float] = None
    specificity: Optional[float] = None
    sensitivity: Optional[float] = None
    fpr: Optional[float] = None
    auc: Optional[float] = None
    mbt_seconds: float = 0.0
    avg_response_seconds: float = 0.0


METRIC_NAMES = ["accuracy", "specificity", "sensitivity", "fpr", "auc"]
TIMING_NAMES = ["mbt_seconds", "avg_response_seconds"]


class RoundResult(BaseModel):
    repeat: int
    round: int
    metrics: MetricSet
    folds: list[MetricSet] = []


class ValidationEcho(BaseModel):
    dataset: str
    classifier: str
    plan: SplitPlan
    base_seed: int
    repeat_seeds: list[int]
    params: dict = {}


class ValidationReport(BaseModel):
    rounds: list[RoundResult]
    repeat_means: list[MetricSet]
    mean: MetricSet
    echo: ValidationEcho


# Random Search Models
class IntRange(BaseModel):
    type: Literal["int"] = "int"
    low: int
    high: int  # inclusive


class FloatRange(BaseModel):
    type: Literal["float"] = "float"
    low: float
    high: float
    log: bool = False


class Choice(BaseModel):
    type: Literal["choice"] = "choice"
    values: list


Distribution = Annotated[Union[IntRange, FloatRange, Choice], Field(discriminator="type")]


class SearchTrial(BaseModel):
    params: dict
    score: float


class SearchResult(BaseModel):
    best_params: dict
    best_score: float
    trials: list[SearchTrial]


# Statistics Models
class Direction(str, Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"


METRIC_DIRECTIONS = {
    "accuracy": Direction.HIGHER_BETTER,
    "specificity": Direction.HIGHER_BETTER,
    "sensitivity": Direction.HIGHER_BETTER,
    "fpr": Direction.LOWER_BETTER,
    "auc": Direction.HIGHER_BETTER,
    "mbt_seconds": Direction.LOWER_BETTER,
    "avg_response_seconds": Direction.LOWER_BETTER,
}


class ResultsMatrix(BaseModel):
    values: list[list[float]]  # d x k
    direction: Direction = Direction.HIGHER_BETTER
    dataset_labels: list[str]
    classifier_labels: list[str]
    metric: str = ""

    @root_validator(skip_on_failure=True)
    def check_shape(cls, values):
        rows = values["values"]
        d, k = len(rows), len(values["classifier_labels"])
        if d < 2 or k < 2:
            raise ValueError(f"need at least 2 datasets and 2 classifiers, got {d}x{k}")
        if len(values["dataset_labels"]) != d:
            raise ValueError("dataset_labels do not match the row count")
        for row in rows:
            if len(row) != k:
                raise ValueError("ragged results matrix")
            if any(v is None or math.isnan(v) for v in row):
                raise ValueError("results matrix has missing cells")
        return values

    @property
    def d(self) -> int:
        return len(self.values)

    @property
    def k(self) -> int:
        return len(self.classifier_labels)


class RankMatrix(BaseModel):
    ranks: Optional[list[list[float]]] = None  # absent when built from mean ranks
    rank_sums: list[float]
    mean_ranks: list[float]
    d: int
    k: int
    classifier_labels: list[str] = []

    @classmethod
    def from_mean_ranks(
        cls, mean_ranks: list[float], d: int, classifier_labels: Optional[list[str]] = None
    ) -> "RankMatrix":
        """Rebuild from published mean ranks when the raw results are unavailable."""
        k = len(mean_ranks)
        labels = classifier_labels or [f"C{j + 1}" for j in range(k)]
        if len(labels) != k:
            raise ValueError("one label per mean rank expected")
        return cls(
            rank_sums=[r * d for r in mean_ranks],
            mean_ranks=list(mean_ranks),
            d=d,
            k=k,
            classifier_labels=labels,
        )


class Decision(str, Enum):
    REJECT = "R"
    ACCEPT = "A"


class FriedmanResult(BaseModel):
    q: float
    f_statistic: float
    df1: int
    df2: int
    p_value: float
    decisions: dict[str, Decision]


class NemenyiPair(BaseModel):
    x: str
    y: str
    gamma: float
    p_adjusted: float
    decisions: dict[str, Decision]


class NemenyiResult(BaseModel):
    pairs: list[NemenyiPair]
    critical_differences: dict[str, float] = {}


class MetricTest(BaseModel):
    metric: str
    mean_ranks: dict[str, float]
    friedman: FriedmanResult
    nemenyi: Optional[NemenyiResult] = None


class TestReport(BaseModel):
    __test__ = False  # not a pytest class

    d: int
    k: int
    alphas: list[float]
    metrics: list[MetricTest]


class MeanRanksRequest(BaseModel):
    mean_ranks: dict[str, float]
    d: int
    alphas: list[float] = [0.05, 0.1]


class MetricsRequest(BaseModel):
    preds: list[int]
    truth: list[int]
    scores: Optional[list[float]] = None


# Benchmark Configuration Models
class Profile(str, Enum):
    PUBLISHED = "published"
    DESK_SCALE = "desk-scale"


class PosthocPolicy(str, Enum):
    REJECTED = "rejected"
    ALWAYS = "always"


class StrictModel(BaseModel):
    class Config:
        extra = Extra.forbid


class SearchConfig(StrictModel):
    space: dict[str, Distribution] = Field(default_factory=dict)
    budget: int = 10
    k: int = 10


class ClassifierConfig(StrictModel):
    kind: ClassifierKind
    params: dict = Field(default_factory=dict)
    search: Optional[SearchConfig] = None


class DatasetConfig(StrictModel):
    name: str
    path: str
    descriptor: str  # builtin schema name or path to a .schema file
    label_column: Optional[str] = None  # GENERIC only
    test_path: Optional[str] = None
    sample: Optional[SampleSpec] = None


class ValidationConfig(StrictModel):
    kind: SplitKind = SplitKind.HOLDOUT
    train_fraction: float = 0.6
    k: int = 10
    rounds: int = 100
    repeats: int = 10
    stratified: bool = False


class TimingConfig(StrictModel):
    enabled: bool = True
    mbt_runs: int = 3
    response_sample: Optional[int] = 1000


class RunConfig(StrictModel):
    master_seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    metrics: list[str] = Field(default_factory=lambda: list(METRIC_NAMES))
    alphas: list[float] = Field(default_factory=lambda: [0.05, 0.1])
    profile: Profile = Profile.PUBLISHED
    posthoc: PosthocPolicy = PosthocPolicy.REJECTED
    scale_codes: bool = True

    @validator("metrics", each_item=True)
    def check_metric(cls, v):
        if v not in METRIC_DIRECTIONS:
            raise ValueError(f"unknown metric '{v}'")
        return v

    @validator("alphas", each_item=True)
    def check_alpha(cls, v):
        if not 0 < v < 1:
            raise ValueError("alpha must lie in (0, 1)")
        return v


class BenchmarkConfig(StrictModel):
    schema_version: int
    run: RunConfig = Field(default_factory=RunConfig)
    datasets: list[DatasetConfig]
    classifiers: list[ClassifierConfig]
    validation: ValidationConfig = Field(default_factory=ValidationConfig)
    timing: TimingConfig = Field(default_factory=TimingConfig)

    @validator("schema_version")
    def check_version(cls, v):
        if v != 1:
            raise ValueError(f"unsupported schema_version {v}, expected 1")
        return v

    @validator("datasets", "classifiers")
    def check_not_empty(cls, v):
        if not v:
            raise ValueError("at least one entry is required")
        return v

    @validator("datasets")
    def check_unique_names(cls, v):
        names = [ds.name for ds in v]
        if len(set(names)) != len(names):
            raise ValueError("dataset names must be unique")
        return v

    @validator("classifiers")
    def check_unique_kinds(cls, v):
        kinds = [c.kind for c in v]
        if len(set(kinds)) != len(kinds):
            raise ValueError("each classifier kind may appear once")
        return v

    def split_plan(self) -> SplitPlan:
        return SplitPlan(
            kind=self.validation.kind,
            train_fraction=self.validation.train_fraction,
            k=self.validation.k,
            seed=self.run.master_seed,
            rounds=self.validation.rounds,
            repeats=self.validation.repeats,
            stratified=self.validation.stratified,
        )


class RuntimeSettings(BaseSettings):
    """Environment overrides (IDSBENCH_SEED, IDSBENCH_WORKERS, ...)."""

    seed: Optional[int] = None
    workers: Optional[int] = None
    out: Optional[str] = None
    metric: Optional[str] = None
    alpha: Optional[str] = None
    log_level: str = "INFO"

    class Config:
        env_prefix = "IDSBENCH_"


# Timing / Manifest Models
class TimingRecord(BaseModel):
    dataset: str
    classifier: str
    mbt_seconds: float
    avg_response_seconds: float
    n_train: int
    n_test: int


class CellManifest(BaseModel):
    dataset: str
    classifier: str
    seed: int
    repeat_seeds: list[int]
    params: dict
    searched: Optional[SearchResult] = None


class Manifest(BaseModel):
    version: str
    libraries: dict[str, str]
    master_seed: int
    config: dict
    cells: list[CellManifest] = []
    stage_seconds: dict[str, float] = {}
