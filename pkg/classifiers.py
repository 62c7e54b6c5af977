# Description: Uniform fit/predict interface over the seven learners, with the
# hyperparameter profiles used by the benchmark.

from typing import Union

import numpy as np
from pydantic import BaseModel, ValidationError

from .ensemble import (
    BoostModel,
    ForestModel,
    extra_trees_params,
    fit_adaboost,
    fit_extra_trees,
    fit_gbm,
    fit_random_forest,
    fit_regularized_gb,
    predict_ensemble,
)
from .exceptions import ConfigInvalid
from .mlp import MlpModel, fit_mlp, forward
from .models import (
    AdaBoostParams,
    ClassifierKind,
    ClassifierSpec,
    ForestParams,
    GbmParams,
    MlpParams,
    Profile,
    RegularizedGbParams,
    TreeParams,
)
from .tree import Tree, fit_cart, predict_tree

MODEL_FORMAT_VERSION = 1

Learner = Union[Tree, ForestModel, BoostModel, MlpModel]

DESK_SCALE_TREES = {
    ClassifierKind.RANDOM_FOREST: 100,
    ClassifierKind.EXTRA_TREES: 200,
}


def default_params(kind: ClassifierKind, profile: Profile = Profile.PUBLISHED) -> BaseModel:
    """Published hyperparameters, with reduced forests under the desk-scale profile."""
    if kind == ClassifierKind.CART:
        return TreeParams()
    if kind == ClassifierKind.RANDOM_FOREST:
        params = ForestParams()
    elif kind == ClassifierKind.EXTRA_TREES:
        params = extra_trees_params()
    elif kind == ClassifierKind.ADABOOST:
        return AdaBoostParams()
    elif kind == ClassifierKind.GBM:
        return GbmParams()
    elif kind == ClassifierKind.REGULARIZED_GB:
        return RegularizedGbParams()
    else:
        return MlpParams()
    if profile == Profile.DESK_SCALE:
        params = params.copy(update={"n_estimators": DESK_SCALE_TREES[kind]})
    return params


def resolve_params(spec: ClassifierSpec, profile: Profile = Profile.PUBLISHED) -> BaseModel:
    base = default_params(spec.kind, profile)
    try:
        return base.__class__(**{**base.dict(), **spec.params})
    except (ValidationError, TypeError) as e:
        raise ConfigInvalid(f"classifiers.{spec.kind.value}.params", str(e))


class TrainedModel:
    """A fitted learner of any kind behind one scoring interface."""

    def __init__(self, kind: ClassifierKind, model: Learner, params: BaseModel):
        self.kind = kind
        self.model = model
        self.params = params

    @property
    def label(self) -> str:
        return self.kind.label

    @property
    def n_features(self) -> int:
        return self.model.n_features

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        if isinstance(self.model, Tree):
            X = np.asarray(X, dtype=np.float64)
            return self.model.predict_value(X)
        return self.model.predict_scores(X)

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return self.model.predict_labels(X)

    def predict_one(self, x) -> tuple[int, float]:
        if isinstance(self.model, Tree):
            return predict_tree(self.model, x)
        if isinstance(self.model, MlpModel):
            score = forward(self.model, x)
            return int(score > 0.5), score
        return predict_ensemble(self.model, x)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT_VERSION,
            "kind": self.kind.value,
            "params": self.params.dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedModel":
        if data.get("format") != MODEL_FORMAT_VERSION:
            raise ConfigInvalid("model", f"unsupported model format {data.get('format')}")
        kind = ClassifierKind(data["kind"])
        params = default_params(kind).__class__(**data["params"])
        body = data["model"]
        model: Learner
        if kind == ClassifierKind.CART:
            model = Tree.from_dict(body)
        elif kind in (ClassifierKind.RANDOM_FOREST, ClassifierKind.EXTRA_TREES):
            model = ForestModel.from_dict(body)
        elif kind == ClassifierKind.MLP:
            model = MlpModel.from_dict(body)
        else:
            model = BoostModel.from_dict(body)
        return cls(kind, model, params)


def fit_classifier(
    spec: ClassifierSpec,
    X: np.ndarray,
    y: np.ndarray,
    seed: int,
    profile: Profile = Profile.PUBLISHED,
) -> TrainedModel:
    params = resolve_params(spec, profile)
    kind = spec.kind
    model: Learner
    if kind == ClassifierKind.CART:
        model = fit_cart(X, y, params, seed=seed)
    elif kind == ClassifierKind.RANDOM_FOREST:
        model = fit_random_forest(X, y, params, seed=seed)
    elif kind == ClassifierKind.EXTRA_TREES:
        model = fit_extra_trees(X, y, params, seed=seed)
    elif kind == ClassifierKind.ADABOOST:
        model = fit_adaboost(X, y, params, seed=seed)
    elif kind == ClassifierKind.GBM:
        model = fit_gbm(X, y, params, seed=seed)
    elif kind == ClassifierKind.REGULARIZED_GB:
        model = fit_regularized_gb(X, y, params, seed=seed)
    else:
        model = fit_mlp(X, y, params, seed=seed)
    return TrainedModel(kind, model, params)
