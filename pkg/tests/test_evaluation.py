import numpy as np
import pytest

from ..classifiers import fit_classifier
from ..data import dataset_from_frame, encode_and_normalize, synthetic_dos_flows, synthetic_schema
from ..evaluation import (
    auc,
    confusion,
    measure_mbt,
    measure_response_time,
    mean_metrics,
    metrics_from_cm,
    random_search,
    repeated_holdout,
    repeated_kfold,
    roc_curve,
)
from ..exceptions import (
    EmptyInput,
    EmptySpace,
    EmptyTestSet,
    LengthMismatch,
    SingleClassTrainingSet,
    SingleClassTruth,
    UndefinedMetric,
)
from ..models import (
    ClassifierKind,
    ClassifierSpec,
    ConfusionMatrix,
    IntRange,
    MetricSet,
)


def _pair_oracle(scores, truth) -> float:
    pos = [s for s, t in zip(scores, truth) if t == 1]
    neg = [s for s, t in zip(scores, truth) if t == 0]
    credit = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return credit / (len(pos) * len(neg))


def _toy_dataset(n_rows: int = 200, seed: int = 0):
    ds = dataset_from_frame(synthetic_dos_flows(n_rows, seed=seed), synthetic_schema())
    return encode_and_normalize(ds, scale_codes=True)


# Confusion matrix and rates
def test_confusion_examples():
    assert confusion([1, 1, 0, 0], [1, 1, 0, 0]) == ConfusionMatrix(tp=2, tn=2, fp=0, fn=0)
    flipped = confusion([0, 0, 1, 1], [1, 1, 0, 0])
    assert flipped.tp == 0 and flipped.tn == 0
    assert confusion([1, 0, 1, 0], [1, 1, 0, 0]) == ConfusionMatrix(tp=1, tn=1, fp=1, fn=1)


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion([1, 0], [1])
    with pytest.raises(EmptyInput):
        confusion([], [])


def test_metrics_from_cm():
    m = metrics_from_cm(ConfusionMatrix(tp=90, tn=80, fp=20, fn=10))
    assert m.accuracy == pytest.approx(0.85)
    assert m.specificity == pytest.approx(0.8)
    assert m.sensitivity == pytest.approx(0.9)
    assert m.fpr == pytest.approx(0.2)


def test_undefined_rate_is_none_not_zero():
    m = metrics_from_cm(ConfusionMatrix(tp=0, tn=100, fp=0, fn=0))
    assert m.specificity == 1.0
    assert m.sensitivity is None
    with pytest.raises(UndefinedMetric):
        metrics_from_cm(ConfusionMatrix(tp=0, tn=100, fp=0, fn=0), strict=True)


def test_metric_identities_on_random_confusion_matrices():
    rng = np.random.default_rng(1)
    for _ in range(2000):
        tp, tn, fp, fn = (int(v) for v in rng.integers(0, 50, size=4))
        if tn + fp == 0 or tp + fn == 0:
            continue
        m = metrics_from_cm(ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn))
        assert m.specificity + m.fpr == pytest.approx(1.0, abs=1e-15)
        p, n = tp + fn, tn + fp
        assert m.accuracy == pytest.approx((m.sensitivity * p + m.specificity * n) / (p + n))


def test_mean_metrics_skips_undefined():
    items = [MetricSet(accuracy=0.5, sensitivity=None), MetricSet(accuracy=1.0, sensitivity=0.4)]
    mean = mean_metrics(items)
    assert mean.accuracy == pytest.approx(0.75)
    assert mean.sensitivity == pytest.approx(0.4)
    assert mean.auc is None


# AUC and ROC
def test_auc_examples():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.3, 0.3, 0.3, 0.3], [0, 1, 0, 1]) == 0.5


def test_auc_single_class():
    with pytest.raises(SingleClassTruth):
        auc([0.1, 0.2], [1, 1])


def test_auc_matches_pair_counting():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(2, 200))
        truth = rng.integers(0, 2, size=n)
        if truth.min() == truth.max():
            continue
        scores = np.round(rng.random(n), 1)  # coarse scores force ties
        assert auc(scores, truth) == pytest.approx(_pair_oracle(scores, truth), abs=1e-12)


def test_auc_of_negated_scores_is_complement():
    rng = np.random.default_rng(2)
    scores = rng.random(60)
    truth = rng.integers(0, 2, size=60)
    assert auc(scores, truth) + auc(-scores, truth) == pytest.approx(1.0)


def test_roc_curve_area_matches_auc():
    rng = np.random.default_rng(4)
    scores = np.round(rng.random(80), 2)
    truth = rng.integers(0, 2, size=80)
    fpr, tpr, thresholds = roc_curve(scores, truth)
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0.0, 0.0, 1.0, 1.0)
    assert np.isinf(thresholds[0])
    assert np.all(np.diff(thresholds[1:]) < 0)
    area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    assert area == pytest.approx(auc(scores, truth))


# Validation
def test_holdout_single_round_is_deterministic():
    ds = _toy_dataset()
    spec = ClassifierSpec(kind=ClassifierKind.CART)
    first = repeated_holdout(spec, ds, rounds=1, repeats=1, base_seed=3)
    second = repeated_holdout(spec, ds, rounds=1, repeats=1, base_seed=3)
    assert len(first.rounds) == 1
    assert first.mean.accuracy == second.mean.accuracy
    assert first.mean.auc == second.mean.auc


def test_holdout_report_means_equal_round_means():
    ds = _toy_dataset()
    report = repeated_holdout(
        ClassifierSpec(kind=ClassifierKind.CART), ds, rounds=3, repeats=2, base_seed=1
    )
    assert len(report.rounds) == 6
    assert len(report.repeat_means) == 2
    accuracies = [r.metrics.accuracy for r in report.rounds]
    assert report.mean.accuracy == pytest.approx(np.mean(accuracies), abs=1e-12)
    assert report.echo.classifier == "CART"


def test_kfold_fold_metrics_average_to_round():
    ds = _toy_dataset(120)
    report = repeated_kfold(
        ClassifierSpec(kind=ClassifierKind.CART), ds, k=5, rounds=2, repeats=1, base_seed=9
    )
    for r in report.rounds:
        assert len(r.folds) == 5
        assert r.metrics.accuracy == pytest.approx(
            np.mean([f.accuracy for f in r.folds]), abs=1e-12
        )


def test_leave_one_out_accuracy_counts_correct_rows():
    ds = _toy_dataset(6, seed=4)
    report = repeated_kfold(
        ClassifierSpec(kind=ClassifierKind.CART), ds, k=6, rounds=1, repeats=1
    )
    folds = report.rounds[0].folds
    assert len(folds) == 6
    assert all(f.accuracy in (0.0, 1.0) for f in folds)
    assert report.mean.accuracy == pytest.approx(
        sum(f.accuracy for f in folds) / 6, abs=1e-12
    )


def test_validation_rejects_single_class_data():
    ds = _toy_dataset(200)
    normals = ds.take(np.flatnonzero(ds.labels == 0))
    with pytest.raises(SingleClassTrainingSet):
        repeated_holdout(ClassifierSpec(kind=ClassifierKind.CART), normals, rounds=1, repeats=1)


# Random search
def test_random_search_single_draw():
    ds = _toy_dataset(100)
    space = {"max_depth": IntRange(low=2, high=6)}
    result = random_search(ClassifierKind.CART, space, 1, ds, k=3, seed=0)
    assert len(result.trials) == 1
    assert result.best_params == result.trials[0].params


def test_random_search_finds_the_better_depth():
    ds = _toy_dataset(300)
    space = {"max_depth": IntRange(low=1, high=8)}
    result = random_search(ClassifierKind.CART, space, 8, ds, k=3, seed=2)
    best = max(t.score for t in result.trials)
    assert result.best_score == best
    first_best = next(t for t in result.trials if t.score == best)
    assert result.best_params == first_best.params


def test_random_search_is_seeded():
    ds = _toy_dataset(100)
    space = {"max_depth": IntRange(low=1, high=10), "min_leaf_size": IntRange(low=1, high=5)}
    first = random_search(ClassifierKind.CART, space, 3, ds, k=3, seed=5)
    second = random_search(ClassifierKind.CART, space, 3, ds, k=3, seed=5)
    assert [t.params for t in first.trials] == [t.params for t in second.trials]


def test_random_search_empty_space():
    with pytest.raises(EmptySpace):
        random_search(ClassifierKind.CART, {}, 3, _toy_dataset(50), k=3)


# Timing
def test_response_time_needs_rows():
    ds = _toy_dataset(60)
    model = fit_classifier(ClassifierSpec(kind=ClassifierKind.CART), ds.X, ds.y, seed=0)
    assert measure_response_time(model, ds.X[:10]) > 0.0
    with pytest.raises(EmptyTestSet):
        measure_response_time(model, ds.X[:0])


def test_mbt_grows_with_forest_size():
    ds = _toy_dataset(400)
    times = []
    for n_estimators in (2, 40):
        spec = ClassifierSpec(kind=ClassifierKind.RANDOM_FOREST, params={"n_estimators": n_estimators})
        seconds, model = measure_mbt(spec, ds.X, ds.y, seed=0, runs=3)
        assert model.label == "RF"
        times.append(seconds)
    assert times[1] > times[0]


def test_extra_trees_build_no_slower_than_random_forest():
    ds = _toy_dataset(500)
    times = {}
    for kind in (ClassifierKind.RANDOM_FOREST, ClassifierKind.EXTRA_TREES):
        spec = ClassifierSpec(kind=kind, params={"n_estimators": 20, "n_jobs": 1})
        times[kind], _ = measure_mbt(spec, ds.X, ds.y, seed=0, runs=3)
    assert times[ClassifierKind.EXTRA_TREES] <= times[ClassifierKind.RANDOM_FOREST]


def test_cart_responds_faster_than_extra_trees():
    ds = _toy_dataset(300)
    cart = fit_classifier(ClassifierSpec(kind=ClassifierKind.CART), ds.X, ds.y, seed=0)
    etc = fit_classifier(
        ClassifierSpec(kind=ClassifierKind.EXTRA_TREES, params={"n_estimators": 20}),
        ds.X,
        ds.y,
        seed=0,
    )
    assert measure_response_time(cart, ds.X[:200]) < measure_response_time(etc, ds.X[:200])
