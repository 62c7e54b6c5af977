# Description: CART learner. One depth-first grower with pluggable split criteria
# (Gini classification, squared-error regression, second-order boosting) used
# directly as a classifier and as the base learner of every ensemble.

from typing import Optional

import numpy as np

from .exceptions import DimensionMismatch, EmptyNode, EmptyTrainingSet
from .models import SplitMode, SplitRule, TreeParams, TreeTask

GAIN_EPS = 1e-12


def gini_impurity(counts) -> float:
    """1 - p0^2 - p1^2 for (n_normal, n_attack) counts."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise EmptyNode()
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _gini_rows(t: np.ndarray) -> np.ndarray:
    w = t.sum(axis=1)
    safe = np.where(w > 0, w, 1.0)
    p = t / safe[:, None]
    return np.where(w > 0, 1.0 - np.sum(p * p, axis=1), 0.0)


# Split criteria
class GiniCriterion:
    task = TreeTask.CLASSIFY_GINI

    def __init__(self, y: np.ndarray, sample_weight: np.ndarray):
        self.stats = np.column_stack(
            [sample_weight * (1 - y), sample_weight * y]
        ).astype(np.float64)

    def is_pure(self, parent: np.ndarray) -> bool:
        return bool(parent[0] <= 0 or parent[1] <= 0)

    def gains(self, parent, left, right) -> np.ndarray:
        total = parent.sum()
        parent_gini = _gini_rows(parent[None, :])[0]
        return (
            parent_gini
            - left.sum(axis=1) / total * _gini_rows(left)
            - right.sum(axis=1) / total * _gini_rows(right)
        )

    def allowed(self, left, right) -> np.ndarray:
        return np.ones(len(left), dtype=bool)

    def significant(self, gains, parent) -> np.ndarray:
        return gains > GAIN_EPS

    def leaf_value(self, parent: np.ndarray) -> float:
        return float(parent[1] / parent.sum()) if parent.sum() > 0 else 0.0


class MseCriterion:
    """Squared-error splits on a target; leaves take a Newton step sum(r)/sum(h)."""

    task = TreeTask.REGRESS_MSE

    def __init__(self, target: np.ndarray, hessian: Optional[np.ndarray] = None):
        h = np.ones_like(target) if hessian is None else hessian
        self.stats = np.column_stack(
            [np.ones_like(target), target, target * target, h]
        ).astype(np.float64)

    @staticmethod
    def _sse(t: np.ndarray) -> np.ndarray:
        n = np.where(t[:, 0] > 0, t[:, 0], 1.0)
        return t[:, 2] - t[:, 1] ** 2 / n

    def is_pure(self, parent: np.ndarray) -> bool:
        return bool(self._sse(parent[None, :])[0] <= GAIN_EPS)

    def gains(self, parent, left, right) -> np.ndarray:
        return (self._sse(parent[None, :])[0] - self._sse(left) - self._sse(right)) / parent[0]

    def allowed(self, left, right) -> np.ndarray:
        return np.ones(len(left), dtype=bool)

    def significant(self, gains, parent) -> np.ndarray:
        variance = self._sse(parent[None, :])[0] / parent[0]
        return gains > GAIN_EPS * max(variance, 1.0)

    def leaf_value(self, parent: np.ndarray) -> float:
        if parent[3] <= GAIN_EPS:
            return 0.0
        return float(parent[1] / parent[3])


class SecondOrderCriterion:
    """Gradient/hessian statistics with L2 leaf penalty and per-leaf cost gamma."""

    task = TreeTask.SECOND_ORDER

    def __init__(
        self,
        g: np.ndarray,
        h: np.ndarray,
        reg_lambda: float,
        gamma: float,
        min_child_weight: float,
    ):
        self.stats = np.column_stack([g, h]).astype(np.float64)
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.min_child_weight = min_child_weight

    def is_pure(self, parent: np.ndarray) -> bool:
        return False

    def gains(self, parent, left, right) -> np.ndarray:
        return split_gain(
            left[:, 0], left[:, 1], right[:, 0], right[:, 1], self.reg_lambda, self.gamma
        )

    def allowed(self, left, right) -> np.ndarray:
        return (left[:, 1] >= self.min_child_weight) & (
            right[:, 1] >= self.min_child_weight
        )

    def significant(self, gains, parent) -> np.ndarray:
        return gains > 0

    def leaf_value(self, parent: np.ndarray) -> float:
        return float(leaf_weight(parent[0], parent[1], self.reg_lambda))


def leaf_weight(g_sum, h_sum, reg_lambda: float):
    """Optimal leaf weight -G / (H + lambda)."""
    return -g_sum / (h_sum + reg_lambda)


def split_gain(g_left, h_left, g_right, h_right, reg_lambda: float, gamma: float):
    """Loss reduction of a split under the L2 + per-leaf penalty."""
    g = g_left + g_right
    h = h_left + h_right
    return (
        0.5
        * (
            g_left**2 / (h_left + reg_lambda)
            + g_right**2 / (h_right + reg_lambda)
            - g**2 / (h + reg_lambda)
        )
        - gamma
    )


class Tree:
    """Fitted tree stored as flat pre-order node arrays.

    Internal nodes have feature >= 0 and route x left when
    x[feature] <= threshold. Leaves have feature == -1. `counts` holds the
    (possibly weighted) normal/attack totals of classification nodes and
    `value` the leaf output (attack probability or regression value).
    """

    def __init__(
        self,
        feature: np.ndarray,
        threshold: np.ndarray,
        left: np.ndarray,
        right: np.ndarray,
        counts: np.ndarray,
        n_samples: np.ndarray,
        value: np.ndarray,
        gain: np.ndarray,
        node_depth: np.ndarray,
        n_features: int,
        task: TreeTask,
    ):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.counts = counts
        self.n_samples = n_samples
        self.value = value
        self.gain = gain
        self.node_depth = node_depth
        self.n_features = n_features
        self.task = task
        for array in (feature, threshold, left, right, counts, n_samples, value, gain):
            array.setflags(write=False)

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        return int(self.node_depth.max()) if self.node_count else 0

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def split_rules(self) -> list[SplitRule]:
        return [
            SplitRule(
                feature_index=int(self.feature[i]),
                threshold=float(self.threshold[i]),
                gain=float(self.gain[i]),
            )
            for i in range(self.node_count)
            if not self.is_leaf(i)
        ]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(self.n_features, X.shape[-1] if X.ndim else 0)
        nodes = np.zeros(len(X), dtype=np.int64)
        active = self.feature[nodes] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            current = nodes[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            nodes[rows] = np.where(go_left, self.left[current], self.right[current])
            active[rows] = self.feature[nodes[rows]] >= 0
        return nodes

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        counts = self.counts[self.apply(X)]
        return (counts[:, 1] > counts[:, 0]).astype(np.int8)

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
            "n_samples": self.n_samples.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "node_depth": self.node_depth.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            counts=np.asarray(data["counts"], dtype=np.float64).reshape(-1, 2),
            n_samples=np.asarray(data["n_samples"], dtype=np.int64),
            value=np.asarray(data["value"], dtype=np.float64),
            gain=np.asarray(data["gain"], dtype=np.float64),
            node_depth=np.asarray(data["node_depth"], dtype=np.int64),
            n_features=int(data["n_features"]),
            task=TreeTask(data["task"]),
        )


def _candidate_features(
    n_features: int, params: TreeParams, rng: Optional[np.random.Generator]
) -> np.ndarray:
    size = params.feature_subset_size
    if size is None or size >= n_features:
        return np.arange(n_features)
    if rng is None:
        rng = np.random.default_rng(0)
    return np.sort(rng.choice(n_features, size=max(size, 1), replace=False))


def _search_split(
    X: np.ndarray,
    stats: np.ndarray,
    idx: np.ndarray,
    criterion,
    params: TreeParams,
    rng: Optional[np.random.Generator],
) -> Optional[SplitRule]:
    node_stats = stats[idx]
    parent = node_stats.sum(axis=0)
    n = len(idx)
    best: Optional[SplitRule] = None
    best_gain = -np.inf
    # features ascend, thresholds ascend within a feature: strict '>' keeps the
    # lowest feature index, then the lowest threshold, on equal gains
    for f in _candidate_features(X.shape[1], params, rng):
        xs = X[idx, f]
        if params.split_mode == SplitMode.RANDOM_CUT:
            low, high = xs.min(), xs.max()
            if not high > low:
                continue
            threshold = float(rng.uniform(low, high)) if rng is not None else (low + high) / 2
            mask = xs <= threshold
            n_left = int(mask.sum())
            if n_left < params.min_leaf_size or n - n_left < params.min_leaf_size:
                continue
            left = node_stats[mask].sum(axis=0)[None, :]
            right = parent[None, :] - left
            if not criterion.allowed(left, right)[0]:
                continue
            gain = criterion.gains(parent, left, right)
            if criterion.significant(gain, parent)[0] and gain[0] > best_gain:
                best_gain = float(gain[0])
                best = SplitRule(feature_index=int(f), threshold=threshold, gain=best_gain)
            continue

        order = np.argsort(xs, kind="stable")
        sorted_x = xs[order]
        cum = np.cumsum(node_stats[order], axis=0)
        positions = np.flatnonzero(sorted_x[:-1] < sorted_x[1:])
        n_left = positions + 1
        positions = positions[
            (n_left >= params.min_leaf_size) & (n - n_left >= params.min_leaf_size)
        ]
        if len(positions) == 0:
            continue
        left = cum[positions]
        right = parent[None, :] - left
        gains = criterion.gains(parent, left, right)
        ok = criterion.allowed(left, right) & criterion.significant(gains, parent)
        if not ok.any():
            continue
        gains = np.where(ok, gains, -np.inf)
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            low, high = sorted_x[positions[i]], sorted_x[positions[i] + 1]
            threshold = (low + high) / 2.0
            if threshold >= high:
                threshold = low
            best_gain = float(gains[i])
            best = SplitRule(feature_index=int(f), threshold=float(threshold), gain=best_gain)
    return best


def grow_tree(
    X: np.ndarray,
    criterion,
    params: TreeParams,
    rng: Optional[np.random.Generator] = None,
    rows: Optional[np.ndarray] = None,
) -> Tree:
    """Grow depth-first until max_depth, min_split_size, purity or no useful split."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyTrainingSet()
    stats = criterion.stats
    classify = criterion.task == TreeTask.CLASSIFY_GINI
    feature, threshold, left, right = [], [], [], []
    counts, n_samples, value, gain, node_depth = [], [], [], [], []

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        parent = stats[idx].sum(axis=0)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(parent[:2] if classify else np.zeros(2))
        n_samples.append(len(idx))
        value.append(criterion.leaf_value(parent))
        gain.append(0.0)
        node_depth.append(depth)
        if (
            depth >= params.max_depth
            or len(idx) < params.min_split_size
            or len(idx) < 2 * params.min_leaf_size
            or criterion.is_pure(parent)
        ):
            return node
        rule = _search_split(X, stats, idx, criterion, params, rng)
        if rule is None:
            return node
        go_left = X[idx, rule.feature_index] <= rule.threshold
        feature[node] = rule.feature_index
        threshold[node] = rule.threshold
        gain[node] = rule.gain
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(X)) if rows is None else np.asarray(rows, dtype=np.int64), 0)
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.float64).reshape(-1, 2),
        n_samples=np.asarray(n_samples, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        gain=np.asarray(gain, dtype=np.float64),
        node_depth=np.asarray(node_depth, dtype=np.int64),
        n_features=X.shape[1],
        task=criterion.task,
    )


def best_split(
    rows,
    labels,
    params: TreeParams,
    seed: Optional[int] = None,
    sample_weight: Optional[np.ndarray] = None,
) -> Optional[SplitRule]:
    """Best Gini split of one node, or None when no split has positive gain."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(labels, dtype=np.float64)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    criterion = GiniCriterion(y, w)
    idx = np.arange(len(y))
    if len(idx) < params.min_split_size or criterion.is_pure(criterion.stats.sum(axis=0)):
        return None
    rng = np.random.default_rng(seed) if seed is not None else None
    return _search_split(X, criterion.stats, idx, criterion, params, rng)


def fit_cart(
    X: np.ndarray,
    y: np.ndarray,
    params: Optional[TreeParams] = None,
    seed: int = 0,
    sample_weight: Optional[np.ndarray] = None,
    rows: Optional[np.ndarray] = None,
) -> Tree:
    """Gini classification tree; deterministic for a fixed seed."""
    params = params or TreeParams()
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise EmptyTrainingSet()
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return grow_tree(X, GiniCriterion(y, w), params, rng, rows=rows)


def fit_regression_tree(
    X: np.ndarray,
    target: np.ndarray,
    params: TreeParams,
    rng: Optional[np.random.Generator] = None,
    hessian: Optional[np.ndarray] = None,
) -> Tree:
    return grow_tree(X, MseCriterion(np.asarray(target, dtype=np.float64), hessian), params, rng)


def predict_tree(tree: Tree, x) -> tuple[int, float]:
    """Route one feature vector; ties at a leaf go to normal (0)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise DimensionMismatch(tree.n_features, x.size)
    node = 0
    feature, threshold = tree.feature, tree.threshold
    while feature[node] >= 0:
        node = tree.left[node] if x[feature[node]] <= threshold[node] else tree.right[node]
    n_normal, n_attack = tree.counts[node]
    label = 1 if n_attack > n_normal else 0
    return label, float(tree.value[node])
