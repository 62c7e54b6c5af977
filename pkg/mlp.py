# Description: One-hidden-layer perceptron with logistic units, trained by
# mini-batch SGD on binary cross-entropy.

import math
from typing import Optional

import numpy as np
from loguru import logger
from scipy.special import expit

from .exceptions import DimensionMismatch, EmptyTrainingSet
from .models import MlpParams


class MlpModel:
    """score = sigmoid(w2 . sigmoid(w1 x + b1) + b2)."""

    def __init__(
        self,
        w1: np.ndarray,
        b1: np.ndarray,
        w2: np.ndarray,
        b2: float,
        params: Optional[MlpParams] = None,
        seed: int = 0,
        loss_curve: Optional[list[float]] = None,
    ):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = float(b2)
        self.params = params or MlpParams(hidden_size=len(self.b1))
        self.seed = seed
        self.loss_curve = loss_curve or []

    @property
    def n_features(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(self.n_features, X.shape[-1] if X.ndim else 0)
        return X

    def hidden(self, X: np.ndarray) -> np.ndarray:
        return expit(X @ self.w1.T + self.b1)

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.hidden(self._check(X)) @ self.w2 + self.b2

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        return expit(self.logits(X))

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_scores(X) > 0.5).astype(np.int8)

    def to_dict(self) -> dict:
        # weight blocks are row-major nested lists
        return {
            "kind": "mlp",
            "seed": self.seed,
            "params": self.params.dict(),
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
            "loss_curve": self.loss_curve,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpModel":
        return cls(
            w1=np.asarray(data["w1"], dtype=np.float64),
            b1=np.asarray(data["b1"], dtype=np.float64),
            w2=np.asarray(data["w2"], dtype=np.float64),
            b2=float(data["b2"]),
            params=MlpParams(**data["params"]),
            seed=int(data.get("seed", 0)),
            loss_curve=list(data.get("loss_curve", [])),
        )


def forward(model: MlpModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise DimensionMismatch(model.n_features, x.size)
    return float(model.predict_scores(x[None, :])[0])


def init_model(n_features: int, params: MlpParams, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    hidden = params.hidden_size
    limit1 = math.sqrt(6.0 / (n_features + hidden))
    limit2 = math.sqrt(6.0 / (hidden + 1))
    w1 = rng.uniform(-limit1, limit1, size=(hidden, n_features))
    w2 = rng.uniform(-limit2, limit2, size=hidden)
    return MlpModel(w1, np.zeros(hidden), w2, 0.0, params=params, seed=seed)


def loss_and_gradients(model: MlpModel, X: np.ndarray, y: np.ndarray) -> tuple[float, dict]:
    """Mean cross-entropy and its gradients w.r.t. w1, b1, w2, b2."""
    X = model._check(X)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    h = model.hidden(X)
    z = h @ model.w2 + model.b2
    # log(1 + e^z) - y z == cross-entropy of sigmoid(z), stable for large |z|
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = (expit(z) - y) / n
    dh = np.outer(dz, model.w2) * h * (1.0 - h)
    grads = {
        "w1": dh.T @ X,
        "b1": dh.sum(axis=0),
        "w2": h.T @ dz,
        "b2": float(dz.sum()),
    }
    return loss, grads


def fit_mlp(
    X: np.ndarray, y: np.ndarray, params: Optional[MlpParams] = None, seed: int = 0
) -> MlpModel:
    """Plain SGD, no momentum or weight decay; batches reshuffled every epoch."""
    params = params or MlpParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise EmptyTrainingSet()
    model = init_model(X.shape[1], params, seed)
    rng = np.random.default_rng([seed, 1])
    lr = params.learning_rate
    for epoch in range(params.max_iter):
        order = rng.permutation(len(y))
        for start in range(0, len(y), params.batch_size):
            batch = order[start : start + params.batch_size]
            _, grads = loss_and_gradients(model, X[batch], y[batch])
            model.w1 -= lr * grads["w1"]
            model.b1 -= lr * grads["b1"]
            model.w2 -= lr * grads["w2"]
            model.b2 -= lr * grads["b2"]
        loss, _ = loss_and_gradients(model, X, y)
        if not math.isfinite(loss):
            logger.warning(f"mlp: loss diverged at epoch {epoch}, stopping")
            break
        model.loss_curve.append(loss)
    if model.loss_curve:
        logger.debug(
            f"mlp: {len(model.loss_curve)} epochs, train loss {model.loss_curve[-1]:.4f}"
        )
    return model
