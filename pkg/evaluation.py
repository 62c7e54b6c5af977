# Description: Metrics (confusion matrix, rates, AUC, ROC), repeated hold-out and
# repeated k-fold validation, random hyperparameter search and timing.

import math
from typing import Iterator, Optional

import numpy as np
from loguru import logger
from scipy.stats import rankdata

from .classifiers import TrainedModel, fit_classifier
from .data import Dataset, apply_preprocessing, fit_preprocessing, holdout_indices, kfold_indices
from .exceptions import (
    ConfigInvalid,
    EmptyInput,
    EmptySpace,
    EmptyTestSet,
    LengthMismatch,
    SingleClassTrainingSet,
    SingleClassTruth,
    UndefinedMetric,
)
from .helpers import Stopwatch, derive_seed
from .models import (
    METRIC_NAMES,
    Choice,
    ClassifierKind,
    ClassifierSpec,
    ConfusionMatrix,
    FloatRange,
    IntRange,
    MetricSet,
    Profile,
    RoundResult,
    SearchResult,
    SearchTrial,
    SplitKind,
    SplitPlan,
    ValidationEcho,
    ValidationReport,
)


# Metrics
def confusion(preds, truth) -> ConfusionMatrix:
    """Counts with attack (1) as the positive class."""
    preds = np.asarray(preds, dtype=np.int8)
    truth = np.asarray(truth, dtype=np.int8)
    if len(preds) != len(truth):
        raise LengthMismatch(len(preds), len(truth))
    if len(truth) == 0:
        raise EmptyInput("prediction list")
    return ConfusionMatrix(
        tp=int(np.sum((preds == 1) & (truth == 1))),
        tn=int(np.sum((preds == 0) & (truth == 0))),
        fp=int(np.sum((preds == 1) & (truth == 0))),
        fn=int(np.sum((preds == 0) & (truth == 1))),
    )


def _ratio(name: str, num: int, den: int, strict: bool) -> Optional[float]:
    if den == 0:
        if strict:
            raise UndefinedMetric(name)
        return None
    return num / den


def metrics_from_cm(cm: ConfusionMatrix, strict: bool = False) -> MetricSet:
    """Accuracy, specificity, sensitivity and FPR; undefined rates are None."""
    return MetricSet(
        accuracy=_ratio("accuracy", cm.tp + cm.tn, cm.total, strict),
        specificity=_ratio("specificity", cm.tn, cm.tn + cm.fp, strict),
        sensitivity=_ratio("sensitivity", cm.tp, cm.tp + cm.fn, strict),
        fpr=_ratio("fpr", cm.fp, cm.tn + cm.fp, strict),
    )


def auc(scores, truth) -> float:
    """Mann-Whitney form of the ROC area; tied scores earn half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int8)
    if len(scores) != len(truth):
        raise LengthMismatch(len(scores), len(truth))
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassTruth()
    ranks = rankdata(scores, method="average")
    u = ranks[truth == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, truth) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds), one step per distinct score, highest first."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int8)
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassTruth()
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tps = np.cumsum(truth[order] == 1)
    fps = np.cumsum(truth[order] == 0)
    last = np.r_[np.flatnonzero(np.diff(sorted_scores)), len(scores) - 1]
    fpr = np.r_[0.0, fps[last] / n_neg]
    tpr = np.r_[0.0, tps[last] / n_pos]
    thresholds = np.r_[np.inf, sorted_scores[last]]
    return fpr, tpr, thresholds


def evaluate_predictions(truth, labels, scores) -> MetricSet:
    metrics = metrics_from_cm(confusion(labels, truth))
    try:
        metrics.auc = auc(scores, truth)
    except SingleClassTruth:
        metrics.auc = None
    return metrics


def mean_metrics(items: list[MetricSet]) -> MetricSet:
    """Field-wise mean; undefined entries are skipped, all-undefined stays None."""
    out = MetricSet()
    for name in METRIC_NAMES:
        values = [getattr(m, name) for m in items if getattr(m, name) is not None]
        setattr(out, name, math.fsum(values) / len(values) if values else None)
    if items:
        out.mbt_seconds = math.fsum(m.mbt_seconds for m in items) / len(items)
        out.avg_response_seconds = math.fsum(m.avg_response_seconds for m in items) / len(
            items
        )
    return out


# Timing
def measure_response_time(model: TrainedModel, X: np.ndarray) -> float:
    """Classify rows one at a time; total elapsed seconds / number of rows."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise EmptyTestSet()
    with Stopwatch() as watch:
        for row in X:
            model.predict_one(row)
    return watch.seconds / len(X)


def measure_mbt(
    spec: ClassifierSpec,
    X: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    runs: int = 3,
    profile: Profile = Profile.PUBLISHED,
) -> tuple[float, TrainedModel]:
    """Median wall-clock of `runs` fits (fit only) and the last fitted model."""
    times = []
    model = None
    for _ in range(max(runs, 1)):
        with Stopwatch() as watch:
            model = fit_classifier(spec, X, y, seed, profile)
        times.append(watch.seconds)
    return float(np.median(times)), model


# Validation
class FoldPredictions:
    """Test-partition output of one fit: truth, hard labels, attack scores, timings."""

    def __init__(
        self,
        repeat: int,
        round: int,
        fold: int,
        truth: np.ndarray,
        labels: np.ndarray,
        scores: np.ndarray,
        mbt_seconds: float = 0.0,
        response_seconds: float = 0.0,
    ):
        self.repeat = repeat
        self.round = round
        self.fold = fold
        self.truth = np.asarray(truth, dtype=np.int8)
        self.labels = np.asarray(labels, dtype=np.int8)
        self.scores = np.asarray(scores, dtype=np.float64)
        self.mbt_seconds = mbt_seconds
        self.response_seconds = response_seconds

    def metrics(self) -> MetricSet:
        metrics = evaluate_predictions(self.truth, self.labels, self.scores)
        metrics.mbt_seconds = self.mbt_seconds
        metrics.avg_response_seconds = self.response_seconds
        return metrics


def prepare_partitions(
    train: Dataset, test: Dataset, scale_codes: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrices with encoders and scaling fit on the training side only."""
    if train.encoded:
        return train.X, test.X
    prep = fit_preprocessing(train)
    return (
        apply_preprocessing(train, prep, scale_codes).X,
        apply_preprocessing(test, prep, scale_codes).X,
    )


def _fit_and_predict(
    spec: ClassifierSpec,
    train: Dataset,
    test: Dataset,
    seed: int,
    coords: tuple[int, int, int],
    profile: Profile,
    response_sample: Optional[int],
    scale_codes: bool,
) -> FoldPredictions:
    X_train, X_test = prepare_partitions(train, test, scale_codes)
    with Stopwatch() as watch:
        model = fit_classifier(spec, X_train, train.y, seed, profile)
    response = 0.0
    if response_sample and len(X_test):
        response = measure_response_time(model, X_test[:response_sample])
    repeat, rnd, fold = coords
    return FoldPredictions(
        repeat,
        rnd,
        fold,
        truth=test.y,
        labels=model.predict_labels(X_test),
        scores=model.predict_scores(X_test),
        mbt_seconds=watch.seconds,
        response_seconds=response,
    )


def repeat_seeds(base_seed: int, repeats: int) -> list[int]:
    return [derive_seed(base_seed, "repeat", r) for r in range(repeats)]


def predict_repeat(
    spec: ClassifierSpec,
    ds: Dataset,
    plan: SplitPlan,
    repeat: int,
    repeat_seed: int,
    test: Optional[Dataset] = None,
    profile: Profile = Profile.PUBLISHED,
    response_sample: Optional[int] = None,
    scale_codes: bool = True,
) -> Iterator[FoldPredictions]:
    """All fits of one repeat, in (round, fold) order.

    With a fixed `test` dataset every round trains on the whole of `ds` and
    only the fit seed changes.
    """
    for rnd in range(plan.rounds):
        split_seed = derive_seed(repeat_seed, "round", rnd)
        if test is not None:
            yield _fit_and_predict(
                spec, ds, test, derive_seed(repeat_seed, "fit", rnd, 0),
                (repeat, rnd, 0), profile, response_sample, scale_codes,
            )
        elif plan.kind == SplitKind.HOLDOUT:
            train_idx, test_idx = holdout_indices(
                ds.labels, plan.train_fraction, split_seed, plan.stratified
            )
            yield _fit_and_predict(
                spec, ds.take(train_idx), ds.take(test_idx),
                derive_seed(repeat_seed, "fit", rnd, 0),
                (repeat, rnd, 0), profile, response_sample, scale_codes,
            )
        else:
            for fold, (train_idx, test_idx) in enumerate(kfold_indices(len(ds), plan.k, split_seed)):
                yield _fit_and_predict(
                    spec, ds.take(train_idx), ds.take(test_idx),
                    derive_seed(repeat_seed, "fit", rnd, fold),
                    (repeat, rnd, fold), profile, response_sample, scale_codes,
                )


def report_from_predictions(predictions: list[FoldPredictions], echo: ValidationEcho) -> ValidationReport:
    """Aggregate fold predictions into rounds, per-repeat means and the grand mean."""
    grouped: dict[tuple[int, int], list[MetricSet]] = {}
    for p in sorted(predictions, key=lambda p: (p.repeat, p.round, p.fold)):
        grouped.setdefault((p.repeat, p.round), []).append(p.metrics())
    rounds = []
    for (repeat, rnd), folds in grouped.items():
        rounds.append(
            RoundResult(
                repeat=repeat,
                round=rnd,
                metrics=mean_metrics(folds),
                folds=folds if len(folds) > 1 else [],
            )
        )
    repeats = sorted({r.repeat for r in rounds})
    repeat_means = [mean_metrics([r.metrics for r in rounds if r.repeat == rep]) for rep in repeats]
    return ValidationReport(
        rounds=rounds,
        repeat_means=repeat_means,
        mean=mean_metrics([r.metrics for r in rounds]),
        echo=echo,
    )


def validate(
    spec: ClassifierSpec,
    ds: Dataset,
    plan: SplitPlan,
    dataset_name: str = "dataset",
    test: Optional[Dataset] = None,
    profile: Profile = Profile.PUBLISHED,
    response_sample: Optional[int] = None,
    scale_codes: bool = True,
) -> ValidationReport:
    if test is None and len(set(ds.labels.tolist())) < 2:
        raise SingleClassTrainingSet(int(ds.labels[0]) if len(ds) else 0)
    seeds = repeat_seeds(plan.seed, plan.repeats)
    predictions = []
    for repeat, seed in enumerate(seeds):
        predictions.extend(
            predict_repeat(spec, ds, plan, repeat, seed, test, profile, response_sample, scale_codes)
        )
    echo = ValidationEcho(
        dataset=dataset_name,
        classifier=spec.label,
        plan=plan,
        base_seed=plan.seed,
        repeat_seeds=seeds,
        params=spec.params,
    )
    report = report_from_predictions(predictions, echo)
    logger.debug(
        f"{dataset_name}/{spec.label}: {len(report.rounds)} rounds, "
        f"accuracy {report.mean.accuracy}"
    )
    return report


def repeated_holdout(
    spec: ClassifierSpec,
    ds: Dataset,
    train_fraction: float = 0.6,
    rounds: int = 100,
    repeats: int = 10,
    base_seed: int = 0,
    stratified: bool = False,
    **kwargs,
) -> ValidationReport:
    plan = SplitPlan(
        kind=SplitKind.HOLDOUT,
        train_fraction=train_fraction,
        rounds=rounds,
        repeats=repeats,
        seed=base_seed,
        stratified=stratified,
    )
    return validate(spec, ds, plan, **kwargs)


def repeated_kfold(
    spec: ClassifierSpec,
    ds: Dataset,
    k: int = 10,
    rounds: int = 100,
    repeats: int = 10,
    base_seed: int = 0,
    **kwargs,
) -> ValidationReport:
    plan = SplitPlan(kind=SplitKind.KFOLD, k=k, rounds=rounds, repeats=repeats, seed=base_seed)
    return validate(spec, ds, plan, **kwargs)


# Random search
def draw_params(space: dict, rng: np.random.Generator) -> dict:
    """One draw per parameter, in sorted parameter order."""
    params = {}
    for name in sorted(space):
        dist = space[name]
        if isinstance(dist, IntRange):
            params[name] = int(rng.integers(dist.low, dist.high + 1))
        elif isinstance(dist, FloatRange):
            if dist.log:
                params[name] = float(
                    math.exp(rng.uniform(math.log(dist.low), math.log(dist.high)))
                )
            else:
                params[name] = float(rng.uniform(dist.low, dist.high))
        else:
            params[name] = dist.values[int(rng.integers(len(dist.values)))]
    return params


def _check_space(space: dict) -> None:
    if not space:
        raise EmptySpace()
    for name, dist in space.items():
        if isinstance(dist, Choice) and not dist.values:
            raise EmptySpace(name)
        if isinstance(dist, (IntRange, FloatRange)) and dist.low > dist.high:
            raise EmptySpace(name)
        if isinstance(dist, FloatRange) and dist.log and dist.low <= 0:
            raise ConfigInvalid(f"search.{name}", "log-uniform range needs low > 0")


def random_search(
    kind: ClassifierKind,
    space: dict,
    budget: int,
    ds: Dataset,
    k: int = 10,
    seed: int = 0,
    profile: Profile = Profile.PUBLISHED,
    scale_codes: bool = True,
) -> SearchResult:
    """Score `budget` random draws by k-fold accuracy; the first best draw wins."""
    _check_space(space)
    if budget < 1:
        raise ConfigInvalid("search.budget", "budget must be at least 1")
    rng = np.random.default_rng(seed)
    plan = SplitPlan(kind=SplitKind.KFOLD, k=k, seed=derive_seed(seed, "search-folds"))
    trials = []
    best: Optional[SearchTrial] = None
    for i in range(budget):
        params = draw_params(space, rng)
        report = validate(
            ClassifierSpec(kind=kind, params=params), ds, plan, profile=profile, scale_codes=scale_codes
        )
        score = report.mean.accuracy if report.mean.accuracy is not None else 0.0
        trial = SearchTrial(params=params, score=score)
        trials.append(trial)
        logger.debug(f"search {kind.label} draw {i}: {params} -> {score:.4f}")
        if best is None or trial.score > best.score:
            best = trial
    return SearchResult(best_params=best.params, best_score=best.score, trials=trials)
