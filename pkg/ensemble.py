# Description: Tree ensembles built on the CART grower: bagged forests (Random
# Forest, Extra Trees) and boosted models (AdaBoost, GBM, regularized GB).

import math
from typing import Optional, Union

import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from scipy.special import expit

from .exceptions import DimensionMismatch, EmptyTrainingSet, SingleClassTrainingSet
from .models import (
    AdaBoostParams,
    BoostKind,
    FeatureSubset,
    ForestParams,
    GbmParams,
    RegularizedGbParams,
    SplitMode,
    TreeParams,
    TreeTask,
)
from .tree import (
    GiniCriterion,
    MseCriterion,
    SecondOrderCriterion,
    Tree,
    grow_tree,
    leaf_weight,
    split_gain,
)

PROBABILITY_CLIP = 1e-15

__all__ = [
    "BoostModel",
    "ForestModel",
    "fit_adaboost",
    "fit_extra_trees",
    "fit_gbm",
    "fit_random_forest",
    "fit_regularized_gb",
    "leaf_weight",
    "log_loss",
    "predict_ensemble",
    "sigmoid",
    "split_gain",
]


def sigmoid(z):
    return expit(z)


def log_loss(y, p) -> float:
    """Mean binary cross-entropy with p clipped to [1e-15, 1 - 1e-15]."""
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(p, dtype=np.float64), PROBABILITY_CLIP, 1 - PROBABILITY_CLIP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def _check_training_set(X: np.ndarray, y: np.ndarray, both_classes: bool = True):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int8)
    if len(y) == 0:
        raise EmptyTrainingSet()
    if both_classes and (y.min() == y.max()):
        raise SingleClassTrainingSet(int(y[0]))
    return X, y


def _check_features(X: np.ndarray, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DimensionMismatch(n_features, X.shape[-1] if X.ndim else 0)
    return X


# Forests
def resolve_feature_subset(subset: Union[FeatureSubset, int], n_features: int) -> Optional[int]:
    if isinstance(subset, int) and not isinstance(subset, bool):
        return min(max(subset, 1), n_features)
    if subset == FeatureSubset.SQRT:
        return max(1, math.floor(math.sqrt(n_features)))
    if subset == FeatureSubset.LOG2:
        return max(1, math.ceil(math.log2(n_features))) if n_features > 1 else 1
    return None


class ForestModel:
    """Unweighted committee of trees; score is the mean leaf attack probability."""

    def __init__(
        self,
        trees: list[Tree],
        params: ForestParams,
        seed: int,
        n_features: int,
        kind: str = "random_forest",
    ):
        self.trees = trees
        self.params = params
        self.seed = seed
        self.n_features = n_features
        self.kind = kind

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(X, self.n_features)
        return np.mean([tree.predict_value(X) for tree in self.trees], axis=0)

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(X, self.n_features)
        votes = np.sum([tree.predict_labels(X) for tree in self.trees], axis=0)
        # a split vote goes to normal
        return (2 * votes > len(self.trees)).astype(np.int8)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "n_features": self.n_features,
            "params": self.params.dict(),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForestModel":
        return cls(
            trees=[Tree.from_dict(t) for t in data["trees"]],
            params=ForestParams(**data["params"]),
            seed=int(data["seed"]),
            n_features=int(data["n_features"]),
            kind=data["kind"],
        )


def _fit_forest_tree(
    X: np.ndarray,
    y: np.ndarray,
    tree_params: TreeParams,
    bootstrap: bool,
    seed_seq: np.random.SeedSequence,
) -> Tree:
    rng = np.random.default_rng(seed_seq)
    rows = rng.integers(0, len(y), size=len(y)) if bootstrap else None
    criterion = GiniCriterion(y.astype(np.float64), np.ones(len(y)))
    return grow_tree(X, criterion, tree_params, rng, rows=rows)


def fit_forest(
    X: np.ndarray, y: np.ndarray, params: ForestParams, seed: int, kind: str
) -> ForestModel:
    X, y = _check_training_set(X, y, both_classes=False)
    tree_params = TreeParams(
        max_depth=params.max_depth,
        min_leaf_size=params.min_leaf_size,
        min_split_size=params.min_split_size,
        feature_subset_size=resolve_feature_subset(params.feature_subset, X.shape[1]),
        split_mode=params.split_mode,
    )
    # one child stream per tree, so results do not depend on scheduling order
    streams = np.random.SeedSequence(seed).spawn(params.n_estimators)
    trees = Parallel(n_jobs=params.n_jobs, prefer="threads")(
        delayed(_fit_forest_tree)(X, y, tree_params, params.bootstrap, stream)
        for stream in streams
    )
    logger.debug(
        f"{kind}: {len(trees)} trees, max depth {max(t.depth for t in trees)}, "
        f"{tree_params.feature_subset_size or X.shape[1]} features per node"
    )
    return ForestModel(list(trees), params, seed, X.shape[1], kind=kind)


def fit_random_forest(
    X: np.ndarray, y: np.ndarray, params: Optional[ForestParams] = None, seed: int = 0
) -> ForestModel:
    """Bootstrap-resampled Gini trees with floor(sqrt(q)) features tried per node."""
    return fit_forest(X, y, params or ForestParams(), seed, "random_forest")


def extra_trees_params(**overrides) -> ForestParams:
    values = dict(
        n_estimators=1788,
        max_depth=10,
        min_split_size=5,
        min_leaf_size=1,
        feature_subset=FeatureSubset.LOG2,
        bootstrap=False,
        split_mode=SplitMode.RANDOM_CUT,
    )
    values.update(overrides)
    return ForestParams(**values)


def fit_extra_trees(
    X: np.ndarray, y: np.ndarray, params: Optional[ForestParams] = None, seed: int = 0
) -> ForestModel:
    """Random-cut trees on the full training sample (no bootstrap)."""
    return fit_forest(X, y, params or extra_trees_params(), seed, "extra_trees")


# Boosting
class BoostModel:
    """Additive stage model.

    ADABOOST stages are stumps weighted by their coefficients; the margin is
    sum(beta * (+1 attack / -1 normal)). GBM and REGULARIZED_GB stages are
    regression trees whose stage weight is the learning rate, added to the
    log-odds base score.
    """

    def __init__(
        self,
        kind: BoostKind,
        stages: list[tuple[Tree, float]],
        learning_rate: float,
        base_score: float,
        n_features: int,
        params: Optional[dict] = None,
        diagnostics: Optional[dict] = None,
    ):
        self.kind = kind
        self.stages = stages
        self.learning_rate = learning_rate
        self.base_score = base_score
        self.n_features = n_features
        self.params = params or {}
        self.diagnostics = diagnostics or {}

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(X, self.n_features)
        total = np.full(len(X), 0.0 if self.kind == BoostKind.ADABOOST else self.base_score)
        for tree, weight in self.stages:
            if self.kind == BoostKind.ADABOOST:
                total += weight * (2.0 * tree.predict_labels(X) - 1.0)
            else:
                total += weight * tree.predict_value(X)
        return total

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        margin = self.margin(X)
        if self.kind != BoostKind.ADABOOST:
            return sigmoid(margin)
        norm = sum(abs(weight) for _, weight in self.stages)
        if norm == 0:
            return np.full(len(margin), 0.5)
        return 0.5 * (1.0 + margin / norm)

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_scores(X) > 0.5).astype(np.int8)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "params": self.params,
            "diagnostics": self.diagnostics,
            "stages": [{"weight": w, "tree": t.to_dict()} for t, w in self.stages],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BoostModel":
        return cls(
            kind=BoostKind(data["kind"]),
            stages=[(Tree.from_dict(s["tree"]), float(s["weight"])) for s in data["stages"]],
            learning_rate=float(data["learning_rate"]),
            base_score=float(data["base_score"]),
            n_features=int(data["n_features"]),
            params=data.get("params", {}),
            diagnostics=data.get("diagnostics", {}),
        )


STUMP = TreeParams(max_depth=1, min_leaf_size=1, min_split_size=2)


def stage_coefficient(error: float, learning_rate: float) -> float:
    """lr * ln((1 - e) / e) for a weak learner with weighted error e."""
    return learning_rate * math.log((1.0 - error) / error)


def fit_adaboost(
    X: np.ndarray, y: np.ndarray, params: Optional[AdaBoostParams] = None, seed: int = 0
) -> BoostModel:
    """Binary SAMME boosting of depth-1 stumps."""
    params = params or AdaBoostParams()
    X, y = _check_training_set(X, y)
    rng = np.random.default_rng(seed)
    weights = np.full(len(y), 1.0 / len(y))
    stages: list[tuple[Tree, float]] = []
    errors: list[float] = []
    weight_sums: list[float] = []
    yf = y.astype(np.float64)
    for stage in range(params.n_estimators):
        stump = grow_tree(X, GiniCriterion(yf, weights), STUMP, rng)
        missed = stump.predict_labels(X) != y
        error = float(weights[missed].sum())
        errors.append(error)
        if error <= 0.0:
            stages.append((stump, 1.0))
            weight_sums.append(float(weights.sum()))
            logger.debug(f"adaboost: stage {stage} separates the data, stopping")
            break
        if error >= 0.5:
            logger.warning(f"adaboost: stage {stage} error {error:.4f} >= 0.5, stopping")
            break
        beta = stage_coefficient(error, params.learning_rate)
        stages.append((stump, beta))
        weights = weights * np.exp(beta * missed)
        weights /= weights.sum()
        weight_sums.append(float(weights.sum()))
    return BoostModel(
        BoostKind.ADABOOST,
        stages,
        params.learning_rate,
        0.0,
        X.shape[1],
        params=params.dict(),
        diagnostics={"errors": errors, "weight_sums": weight_sums},
    )


def _log_odds(y: np.ndarray) -> float:
    rate = float(np.clip(y.mean(), PROBABILITY_CLIP, 1 - PROBABILITY_CLIP))
    return math.log(rate / (1.0 - rate))


def fit_gbm(
    X: np.ndarray, y: np.ndarray, params: Optional[GbmParams] = None, seed: int = 0
) -> BoostModel:
    """Log-loss gradient boosting: each stage fits the residual y - p, Newton leaves."""
    params = params or GbmParams()
    X, y = _check_training_set(X, y)
    rng = np.random.default_rng(seed)
    tree_params = TreeParams(
        max_depth=params.max_depth,
        min_split_size=params.min_split_size,
        min_leaf_size=params.min_leaf_size,
        task=TreeTask.REGRESS_MSE,
    )
    yf = y.astype(np.float64)
    base = _log_odds(yf)
    raw = np.full(len(y), base)
    stages: list[tuple[Tree, float]] = []
    losses = [log_loss(yf, sigmoid(raw))]
    for _ in range(params.n_estimators):
        p = sigmoid(raw)
        criterion = MseCriterion(yf - p, p * (1.0 - p))
        tree = grow_tree(X, criterion, tree_params, rng)
        raw = raw + params.learning_rate * tree.predict_value(X)
        stages.append((tree, params.learning_rate))
        losses.append(log_loss(yf, sigmoid(raw)))
    logger.debug(f"gbm: {len(stages)} stages, train log loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    return BoostModel(
        BoostKind.GBM,
        stages,
        params.learning_rate,
        base,
        X.shape[1],
        params=params.dict(),
        diagnostics={"train_loss": losses},
    )


def fit_regularized_gb(
    X: np.ndarray,
    y: np.ndarray,
    params: Optional[RegularizedGbParams] = None,
    seed: int = 0,
) -> BoostModel:
    """Second-order boosting with L2 leaf penalty, per-leaf cost and row subsampling."""
    params = params or RegularizedGbParams()
    X, y = _check_training_set(X, y)
    rng = np.random.default_rng(seed)
    tree_params = TreeParams(
        max_depth=params.max_depth,
        min_leaf_size=1,
        min_split_size=2,
        task=TreeTask.SECOND_ORDER,
        reg_lambda=params.reg_lambda,
        gamma=params.gamma,
        min_child_weight=params.min_child_weight,
    )
    yf = y.astype(np.float64)
    base = _log_odds(yf)
    raw = np.full(len(y), base)
    n_sub = max(1, int(math.floor(params.subsample * len(y) + 0.5)))
    stages: list[tuple[Tree, float]] = []
    losses = [log_loss(yf, sigmoid(raw))]
    for _ in range(params.n_estimators):
        p = sigmoid(raw)
        criterion = SecondOrderCriterion(
            p - yf, p * (1.0 - p), params.reg_lambda, params.gamma, params.min_child_weight
        )
        rows = np.sort(rng.choice(len(y), size=n_sub, replace=False))
        tree = grow_tree(X, criterion, tree_params, rng, rows=rows)
        raw = raw + params.learning_rate * tree.predict_value(X)
        stages.append((tree, params.learning_rate))
        losses.append(log_loss(yf, sigmoid(raw)))
    logger.debug(
        f"regularized_gb: {len(stages)} stages, "
        f"{sum(t.node_count for t, _ in stages)} nodes, train log loss {losses[-1]:.4f}"
    )
    return BoostModel(
        BoostKind.REGULARIZED_GB,
        stages,
        params.learning_rate,
        base,
        X.shape[1],
        params=params.dict(),
        diagnostics={"train_loss": losses},
    )


def predict_ensemble(model: Union[ForestModel, BoostModel], x) -> tuple[int, float]:
    """Classify one feature vector: (label, P(attack))."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise DimensionMismatch(model.n_features, x.size)
    row = x[None, :]
    return int(model.predict_labels(row)[0]), float(model.predict_scores(row)[0])
