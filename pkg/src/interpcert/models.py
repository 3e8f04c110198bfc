"""Target models, the complex k-NN model, information payloads and losses."""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
import scipy.linalg

from . import kernels
from .data import LabeledDataset
from .errors import (
    DimensionMismatchError,
    EmptyPrototypeError,
    EmptyTrainingError,
    InvalidTargetError,
    RankDeficientError,
    RepresentationError,
    SingleClassError,
)
from .metrics import ErrorEstimate

PIVOT_TOL = 1e-10
LOGISTIC_L2 = 1e-4
LOGISTIC_GTOL = 1e-6
LOGISTIC_MAXITER = 10_000


class Loss(str, enum.Enum):
    ZERO_ONE = "zero_one"
    MAPE_PERCENT = "mape_percent"
    SQUARED_ERROR = "squared_error"
    FEATURE_RECALL_COMPLEMENT = "feature_recall_complement"


# ---------------------------------------------------------------- information


@dataclass(frozen=True)
class FeatureSubset:
    indices: tuple
    tag: ClassVar[str] = "FeatureSubset"

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx) or any(i < 0 for i in idx):
            raise ValueError(f"feature indices must be distinct and non-negative: {idx}")
        object.__setattr__(self, "indices", idx)


@dataclass(frozen=True)
class PrototypeSet:
    indices: tuple
    tag: ClassVar[str] = "PrototypeSet"

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValueError("prototype indices must be non-negative")
        object.__setattr__(self, "indices", idx)


@dataclass(frozen=True, eq=False)
class ParameterAdjustment:
    values: np.ndarray
    tag: ClassVar[str] = "ParameterAdjustment"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("parameter values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class InstanceWeights:
    weights: np.ndarray
    tag: ClassVar[str] = "InstanceWeights"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("instance weights must be finite, non-negative and not all zero")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


INFORMATION_TAGS = ("FeatureSubset", "PrototypeSet", "ParameterAdjustment", "InstanceWeights")


def information_to_json(info) -> dict:
    if isinstance(info, (FeatureSubset, PrototypeSet)):
        return {"tag": info.tag, "indices": list(info.indices)}
    if isinstance(info, ParameterAdjustment):
        return {"tag": info.tag, "values": info.values.tolist()}
    return {"tag": info.tag, "weights": info.weights.tolist()}


# ---------------------------------------------------------------- target models


def _normalized_weights(sample_weight, n):
    if sample_weight is None:
        return None
    w = np.asarray(sample_weight, dtype=np.float64)
    if w.shape != (n,):
        raise DimensionMismatchError(f"{w.shape[0]} instance weights for {n} rows")
    return w * (n / w.sum())


def _check_features(features, d):
    features = tuple(int(i) for i in (range(d) if features is None else features))
    bad = [i for i in features if i < 0 or i >= d]
    if bad:
        raise DimensionMismatchError(f"feature indices {bad} outside 0..{d - 1}")
    if len(set(features)) != len(features):
        raise ValueError("duplicate feature indices")
    return features


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LinearRegressor:
    features: tuple
    weights: np.ndarray
    intercept: float
    n_features_in: int
    loss_id: str = Loss.SQUARED_ERROR.value

    kind: ClassVar[str] = "LinearRegressor"
    accepted_information: ClassVar[frozenset] = frozenset(
        {"FeatureSubset", "ParameterAdjustment", "InstanceWeights"})

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "intercept", float(self.intercept))
        if self.weights.shape != (len(self.features),):
            raise DimensionMismatchError("one weight per selected feature")
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.intercept)):
            raise ValueError("parameters must be finite")

    @property
    def parameters(self):
        return np.append(self.weights, self.intercept)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        return X[:, list(self.features)] @ self.weights + self.intercept

    def to_json(self):
        return {"kind": self.kind, "loss_id": self.loss_id,
                "accepted_information": sorted(self.accepted_information),
                "parameters": {"features": list(self.features), "weights": self.weights.tolist(),
                               "intercept": self.intercept, "n_features_in": self.n_features_in}}


@dataclass(frozen=True, eq=False)
class NearestPrototypeClassifier:
    prototypes: np.ndarray
    labels: np.ndarray
    prototype_indices: tuple | None = None
    loss_id: str = Loss.ZERO_ONE.value

    kind: ClassVar[str] = "NearestPrototypeClassifier"
    accepted_information: ClassVar[frozenset] = frozenset({"PrototypeSet", "ParameterAdjustment"})

    def __post_init__(self):
        P = _frozen(self.prototypes)
        if P.ndim != 2:
            raise ValueError("prototypes must be a 2-D array")
        if P.shape[0] == 0:
            raise EmptyPrototypeError("a nearest prototype classifier needs at least one prototype")
        labels = np.array(self.labels)
        labels.flags.writeable = False
        if labels.shape != (P.shape[0],):
            raise DimensionMismatchError("one label per prototype")
        if not np.all(np.isfinite(P)):
            raise ValueError("prototypes must be finite")
        object.__setattr__(self, "prototypes", P)
        object.__setattr__(self, "labels", labels)

    @property
    def n_features_in(self):
        return self.prototypes.shape[1]

    @property
    def parameters(self):
        return self.prototypes.ravel().copy()

    def predict(self, X):
        return self.labels[kernels.nearest_prototype(np.atleast_2d(X), self.prototypes)]

    def to_json(self):
        return {"kind": self.kind, "loss_id": self.loss_id,
                "accepted_information": sorted(self.accepted_information),
                "parameters": {"prototypes": self.prototypes.tolist(), "labels": self.labels.tolist(),
                               "prototype_indices": None if self.prototype_indices is None
                               else list(self.prototype_indices)}}


@dataclass(frozen=True, eq=False)
class LogisticClassifier:
    features: tuple
    weights: np.ndarray
    intercept: float
    classes: tuple          # (negative label, positive label)
    n_features_in: int
    l2: float = LOGISTIC_L2
    loss_id: str = Loss.ZERO_ONE.value

    kind: ClassVar[str] = "LogisticClassifier"
    accepted_information: ClassVar[frozenset] = frozenset(
        {"FeatureSubset", "ParameterAdjustment", "InstanceWeights"})

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "intercept", float(self.intercept))
        if self.weights.shape != (len(self.features),):
            raise DimensionMismatchError("one weight per selected feature")
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.intercept)):
            raise ValueError("parameters must be finite")

    @property
    def parameters(self):
        return np.append(self.weights, self.intercept)

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        return X[:, list(self.features)] @ self.weights + self.intercept

    def predict(self, X):
        z = self.decision_function(X)
        return np.where(z > 0, self.classes[1], self.classes[0])

    def to_json(self):
        return {"kind": self.kind, "loss_id": self.loss_id,
                "accepted_information": sorted(self.accepted_information),
                "parameters": {"features": list(self.features), "weights": self.weights.tolist(),
                               "intercept": self.intercept, "classes": list(self.classes),
                               "n_features_in": self.n_features_in, "l2": self.l2}}


TARGET_MODELS = (LinearRegressor, NearestPrototypeClassifier, LogisticClassifier)


def model_from_json(doc):
    kind = doc["kind"]
    p = doc["parameters"]
    if kind == "LinearRegressor":
        return LinearRegressor(tuple(p["features"]), p["weights"], p["intercept"],
                               p["n_features_in"], doc["loss_id"])
    if kind == "NearestPrototypeClassifier":
        idx = p.get("prototype_indices")
        return NearestPrototypeClassifier(p["prototypes"], p["labels"],
                                          None if idx is None else tuple(idx), doc["loss_id"])
    if kind == "LogisticClassifier":
        return LogisticClassifier(tuple(p["features"]), p["weights"], p["intercept"],
                                  tuple(p["classes"]), p["n_features_in"], p["l2"], doc["loss_id"])
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------- fitting


def fit_ols(data: LabeledDataset, feature_subset=None, *, sample_weight=None,
            loss_id=Loss.SQUARED_ERROR.value) -> LinearRegressor:
    """Least squares with intercept over the chosen columns.

    Solves the centred normal equations with a column-pivoted QR; a pivot
    smaller than ``PIVOT_TOL`` times the largest one counts as singular.
    """
    features = _check_features(feature_subset, data.d)
    n = data.n
    if n <= len(features):
        raise RankDeficientError(f"{n} rows cannot determine {len(features)} weights and an intercept")
    y = np.asarray(data.targets, dtype=np.float64)
    w = _normalized_weights(sample_weight, n)
    if w is None:
        w = np.ones(n)
    X = data.features[:, list(features)]
    wsum = w.sum()
    x_mean = (w @ X) / wsum
    y_mean = float(w @ y) / wsum
    if not features:
        return LinearRegressor((), np.zeros(0), y_mean, data.d, loss_id)
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ (Xc * w[:, None])
    rhs = Xc.T @ (w * yc)
    Q, R, piv = scipy.linalg.qr(gram, pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0 or diag[-1] <= PIVOT_TOL * diag[0]:
        raise RankDeficientError(
            f"normal equations are singular (pivot ratio {diag[-1] / diag[0] if diag[0] else 0:.3g})")
    coef = np.empty(len(features))
    coef[piv] = scipy.linalg.solve_triangular(R, Q.T @ rhs)
    return LinearRegressor(features, coef, y_mean - float(x_mean @ coef), data.d, loss_id)


def _binary_targets(data):
    classes = np.unique(data.targets)
    if classes.shape[0] < 2:
        raise SingleClassError("logistic regression needs both classes present")
    if classes.shape[0] > 2:
        raise ValueError(f"logistic regression is binary; found {classes.shape[0]} labels")
    return (classes[0].item(), classes[1].item()), (data.targets == classes[1]).astype(np.float64)


def logistic_loss_grad(params, X, y01, l2=LOGISTIC_L2, sample_weight=None):
    """Mean weighted log-loss plus ``l2/2 * |w|^2`` and its gradient.

    ``params`` is the weights followed by the (unpenalised) intercept.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    sw = np.ones(X.shape[0]) if sample_weight is None else sample_weight
    # log(1 + e^z) - y z, computed stably
    loss = np.sum(sw * (np.logaddexp(0.0, z) - y01 * z)) / X.shape[0] + 0.5 * l2 * (w @ w)
    r = sw * (0.5 * (1.0 + np.tanh(0.5 * z)) - y01) / X.shape[0]
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r + l2 * w
    grad[-1] = r.sum()
    return loss, grad


def fit_logistic(data: LabeledDataset, feature_subset=None, *, sample_weight=None,
                 l2=LOGISTIC_L2, gtol=LOGISTIC_GTOL, maxiter=LOGISTIC_MAXITER,
                 loss_id=Loss.ZERO_ONE.value) -> LogisticClassifier:
    """Ridge-penalised logistic regression by full-batch gradient descent.

    Fixed step ``1/L`` with ``L`` the smoothness constant of the objective, so
    the objective never increases. Stops at gradient norm ``gtol`` or after
    ``maxiter`` steps.
    """
    features = _check_features(feature_subset, data.d)
    classes, y01 = _binary_targets(data)
    n = data.n
    sw = _normalized_weights(sample_weight, n)
    X = data.features[:, list(features)]
    A = np.hstack([X, np.ones((n, 1))])
    scale = np.ones(n) if sw is None else sw
    lipschitz = 0.25 * np.linalg.eigvalsh((A * scale[:, None]).T @ A / n)[-1] + l2
    params, _ = kernels.logistic_gd(A, y01, scale, l2, 1.0 / lipschitz, gtol, maxiter)
    return LogisticClassifier(features, params[:-1], params[-1], classes, data.d, l2, loss_id)


# ---------------------------------------------------------------- complex model


@dataclass(frozen=True, eq=False)
class ComplexModel:
    """k-nearest-neighbour model used as a source of information."""

    train: LabeledDataset
    k: int = 5
    task: str = "classification"

    kind: ClassVar[str] = "KNearestNeighbor"

    def __post_init__(self):
        if self.train is None or self.train.n == 0:
            raise EmptyTrainingError("k-NN needs a non-empty training set")
        if not 1 <= self.k <= self.train.n:
            raise ValueError(f"k must lie in 1..{self.train.n}, got {self.k}")
        if self.task not in ("classification", "regression"):
            raise ValueError("task is 'classification' or 'regression'")

    @property
    def n_features_in(self):
        return self.train.d

    def neighbors(self, X):
        d2 = kernels.sq_distances(np.atleast_2d(X), self.train.features)
        return np.argsort(d2, axis=1, kind="stable")[:, :self.k]

    def predict(self, X):
        idx = self.neighbors(X)
        ys = self.train.targets[idx]
        if self.task == "regression":
            return ys.astype(np.float64).mean(axis=1)
        out = []
        for row in ys:
            labels, counts = np.unique(row, return_counts=True)
            out.append(labels[np.argmax(counts)])
        return np.array(out)


def npc_predict(model: NearestPrototypeClassifier, x):
    """Label of the nearest prototype for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features_in:
        raise DimensionMismatchError(f"expected a vector of length {model.n_features_in}")
    return model.predict(x[None, :])[0]


def knn_predict(model: ComplexModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features_in:
        raise DimensionMismatchError(f"expected a vector of length {model.n_features_in}")
    return model.predict(x[None, :])[0]


def predict(model, X):
    return model.predict(np.atleast_2d(np.asarray(X, dtype=np.float64)))


# ---------------------------------------------------------------- evaluation


def evaluate(model, data: LabeledDataset, loss, *, weights=None) -> ErrorEstimate:
    """Mean loss of ``model`` on ``data`` (optionally weighted per row)."""
    loss = Loss(loss)
    if data.d != model.n_features_in:
        raise DimensionMismatchError(f"model expects {model.n_features_in} features, data has {data.d}")
    if loss is Loss.FEATURE_RECALL_COMPLEMENT:
        truth = set(data.provenance.get("truth", ()))
        selected = set(getattr(model, "features", ()))
        value = 0.0 if not truth else 1.0 - len(selected & truth) / len(truth)
        return ErrorEstimate(value, data.n, loss.value)
    w = np.ones(data.n) if weights is None else np.asarray(weights, dtype=np.float64)
    pred = model.predict(data.features)
    y = data.targets
    if loss is Loss.ZERO_ONE:
        value = float(w @ (pred != y)) / w.sum()
    elif loss is Loss.SQUARED_ERROR:
        value = float(w @ (pred - y) ** 2) / w.sum()
    else:
        denom = float(w @ y)
        if denom <= 0:
            raise InvalidTargetError("MAPE is undefined when the summed target is not positive")
        value = 100.0 * float(w @ np.abs(pred - y)) / denom
    return ErrorEstimate(value, data.n, loss.value)


# ---------------------------------------------------------------- information transfer


def _check_indices(indices, n, what):
    bad = [i for i in indices if i >= n]
    if bad:
        raise DimensionMismatchError(f"{what} indices {bad[:5]} outside 0..{n - 1}")


def apply_information(model, info, train: LabeledDataset):
    """Return ``M_T(I)``: a new model of the same kind with ``info`` absorbed.

    Raises :class:`RepresentationError` if the model's hypothesis class has
    no way to use this kind of information.
    """
    if info.tag not in model.accepted_information:
        raise RepresentationError(f"{model.kind} cannot absorb {info.tag}")
    if isinstance(info, ParameterAdjustment):
        if info.values.shape != model.parameters.shape:
            raise DimensionMismatchError(
                f"{model.kind} has {model.parameters.size} parameters, got {info.values.size}")
        if isinstance(model, NearestPrototypeClassifier):
            return dataclasses.replace(model, prototypes=info.values.reshape(model.prototypes.shape))
        return dataclasses.replace(model, weights=info.values[:-1].copy(), intercept=info.values[-1])
    if isinstance(info, PrototypeSet):
        if not info.indices:
            raise EmptyPrototypeError("empty prototype set")
        _check_indices(info.indices, train.n, "prototype")
        idx = list(info.indices)
        return NearestPrototypeClassifier(train.features[idx], train.targets[idx],
                                          info.indices, model.loss_id)
    if isinstance(info, FeatureSubset):
        _check_indices(info.indices, train.d, "feature")
        fit = fit_ols if isinstance(model, LinearRegressor) else fit_logistic
        return fit(train, info.indices, loss_id=model.loss_id)
    if isinstance(info, InstanceWeights):
        if info.weights.shape[0] != train.n:
            raise DimensionMismatchError(f"{info.weights.shape[0]} weights for {train.n} rows")
        fit = fit_ols if isinstance(model, LinearRegressor) else fit_logistic
        return fit(train, model.features, sample_weight=info.weights, loss_id=model.loss_id)
    raise RepresentationError(f"unknown information {info!r}")
