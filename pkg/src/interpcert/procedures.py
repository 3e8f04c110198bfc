"""Interpretable procedures: each one turns data into information for a target model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import LabeledDataset, split
from .errors import InvalidCountError
from .metrics import certify
from .models import (
    ComplexModel,
    FeatureSubset,
    LinearRegressor,
    LogisticClassifier,
    Loss,
    ParameterAdjustment,
    PrototypeSet,
    apply_information,
    evaluate,
    fit_logistic,
    fit_ols,
    information_to_json,
)
from .rng import make_rng
from .robustness import combine_robust, robust_errors

PROCEDURE_KINDS = ("mmd_greedy", "random_prototypes", "stepwise_features", "identity")
BANDWIDTH_SUBSAMPLE = 500


@dataclass(frozen=True)
class ProcedureSpec:
    kind: str
    m: int | None = None
    kernel_bandwidth: float | None = None   # None: median heuristic
    patience: int = 0
    seed: int = 0
    complex_model: dict | None = None       # e.g. {"kind": "knn", "k": 5}
    name: str | None = None

    def __post_init__(self):
        if self.kind not in PROCEDURE_KINDS:
            raise ValueError(f"unknown procedure kind {self.kind!r}; expected one of {PROCEDURE_KINDS}")
        if self.kind != "identity" and (self.m is None or self.m < 1):
            raise InvalidCountError(f"{self.kind} needs m >= 1")
        if self.kernel_bandwidth is not None and not self.kernel_bandwidth > 0:
            raise ValueError("kernel_bandwidth must be > 0")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")

    @property
    def procedure_id(self) -> str:
        if self.name:
            return self.name
        if self.kind == "identity":
            return "identity"
        extra = f",patience={self.patience}" if self.kind == "stepwise_features" else ""
        return f"{self.kind}(m={self.m}{extra})"


# ---------------------------------------------------------------- prototypes


def median_heuristic(X, seed=0, subsample=BANDWIDTH_SUBSAMPLE) -> float:
    """Median pairwise Euclidean distance over at most ``subsample`` rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] > subsample:
        X = X[np.sort(make_rng(seed, "bandwidth").choice(X.shape[0], subsample, replace=False))]
    d2 = kernels.sq_distances(X, X)
    iu = np.triu_indices(X.shape[0], k=1)
    if iu[0].size == 0:
        return 1.0
    h = float(np.sqrt(np.median(d2[iu])))
    return h if h > 0 else 1.0


def rbf_gram(X, bandwidth):
    d2 = kernels.sq_distances(X, X)
    np.fill_diagonal(d2, 0.0)
    return np.exp(-d2 / (2.0 * bandwidth * bandwidth))


def mmd_objective(K, selected) -> float:
    """Greedy objective ``2/(n|S|) sum_{i,s} K - 1/|S|^2 sum_{s,s'} K``.

    Equals ``mean(K) - MMD^2`` between the data and the prototype set, so
    larger is better.
    """
    s = np.asarray(selected, dtype=np.int64)
    n = K.shape[0]
    return 2.0 * K[:, s].sum() / (n * s.size) - K[np.ix_(s, s)].sum() / s.size ** 2


def mmd_greedy_select(data: LabeledDataset, m: int, bandwidth=None, *, seed=0):
    """Greedy MMD prototype selection under an RBF kernel.

    Returns ``(PrototypeSet, bandwidth)``; ``bandwidth=None`` uses the median
    heuristic.
    """
    if not 1 <= m <= data.n:
        raise InvalidCountError(f"cannot pick {m} prototypes from {data.n} rows")
    h = median_heuristic(data.features, seed) if bandwidth is None else float(bandwidth)
    K = rbf_gram(data.features, h)
    return PrototypeSet(tuple(kernels.greedy_mmd(K, m).tolist())), h


def random_prototype_select(data: LabeledDataset, m: int, seed) -> PrototypeSet:
    if not 1 <= m <= data.n:
        raise InvalidCountError(f"cannot pick {m} prototypes from {data.n} rows")
    return PrototypeSet(tuple(make_rng(seed, "random-prototypes").permutation(data.n)[:m].tolist()))


# ---------------------------------------------------------------- features


def _fitter(tm_kind):
    if tm_kind in ("LinearRegressor", "ols", LinearRegressor):
        return fit_ols, Loss.SQUARED_ERROR
    if tm_kind in ("LogisticClassifier", "logistic", LogisticClassifier):
        return fit_logistic, Loss.ZERO_ONE
    raise ValueError(f"stepwise selection needs a linear or logistic target model, got {tm_kind!r}")


def stepwise_feature_select(data: LabeledDataset, tm_kind, loss, m: int, patience: int = 0,
                            seed=0) -> FeatureSubset:
    """Forward selection scored on a seeded 50/50 fit/validation split.

    Each round adds the candidate whose refit model has the lowest
    validation loss (ties to the lower index). Additions that do not beat
    the best loss so far are tolerated ``patience`` times in a row; on
    stopping, those trailing additions are dropped. ``loss`` values with no
    per-row form (feature recall) fall back to the model's natural loss.
    """
    fit, natural = _fitter(tm_kind)
    loss = Loss(loss)
    if loss is Loss.FEATURE_RECALL_COMPLEMENT:
        loss = natural
    if not 1 <= m <= data.d:
        raise InvalidCountError(f"cannot select {m} of {data.d} features")
    fit_half, val_half = split(data, [0.5, 0.5], make_rng(seed, "stepwise").integers(2**63))
    chosen: list[int] = []
    best = evaluate(fit(fit_half, ()), val_half, loss).value
    best_len = 0
    misses = 0
    while len(chosen) < m:
        scores = []
        for f in range(data.d):
            if f in chosen:
                continue
            model = fit(fit_half, chosen + [f])
            scores.append((evaluate(model, val_half, loss).value, f))
        if not scores:
            break
        score, f = min(scores)
        chosen.append(f)
        if score < best:
            best, best_len, misses = score, len(chosen), 0
        else:
            misses += 1
            if misses > patience:
                break
    return FeatureSubset(tuple(chosen[:best_len]))


def identity_procedure(model) -> ParameterAdjustment:
    """Information that leaves ``model`` exactly as it is."""
    return ParameterAdjustment(model.parameters)


# ---------------------------------------------------------------- pipeline


def _procedure_view(spec: ProcedureSpec, train: LabeledDataset) -> LabeledDataset:
    """Training data as seen by the procedure: relabelled by the complex model if one is set."""
    if not spec.complex_model:
        return train
    cfg = dict(spec.complex_model)
    task = cfg.get("task", "classification")
    cm = ComplexModel(train, int(cfg.get("k", 5)), task)
    return LabeledDataset(train.features, cm.predict(train.features), train.feature_names,
                          train.provenance)


def produce_information(spec: ProcedureSpec, tm, train: LabeledDataset, loss, seed):
    """Run the procedure. Returns ``(information, audit details)``."""
    view = _procedure_view(spec, train)
    if spec.kind == "identity":
        return identity_procedure(tm), {}
    if spec.kind == "mmd_greedy":
        info, h = mmd_greedy_select(view, spec.m, spec.kernel_bandwidth, seed=seed)
        return info, {"kernel_bandwidth": h}
    if spec.kind == "random_prototypes":
        return random_prototype_select(view, spec.m, seed), {}
    return stepwise_feature_select(view, tm.kind, loss, spec.m, spec.patience, seed), {}


def run_pipeline(spec: ProcedureSpec, tm, train: LabeledDataset, test: LabeledDataset,
                 robust_sets, loss, *, robustness_id="identity", seed=None, aggregate="mean",
                 target_model_id=None):
    """Evaluate ``tm``, apply the procedure's information, re-evaluate, certify."""
    seed = spec.seed if seed is None else seed
    loss = Loss(loss)
    base_T = evaluate(tm, test, loss)
    base_sets = robust_errors(tm, robust_sets, loss)
    info, details = produce_information(spec, tm, train, loss, seed)
    new = apply_information(tm, info, train)
    new_T = evaluate(new, test, loss)
    new_sets = robust_errors(new, robust_sets, loss)
    details = {
        **details,
        "information": information_to_json(info) if info.tag != "ParameterAdjustment"
        else {"tag": info.tag, "size": int(info.values.size)},
        "robust_errors_base": [e.value for e in base_sets],
        "robust_errors_new": [e.value for e in new_sets],
        "robust_aggregate": aggregate,
    }
    skew_flags = [s.provenance.get("with_replacement") for s in robust_sets]
    if any(flag is not None for flag in skew_flags):
        details["with_replacement"] = any(bool(f) for f in skew_flags)
    return certify(base_T, combine_robust(base_sets, aggregate), new_T,
                   combine_robust(new_sets, aggregate),
                   procedure_id=spec.procedure_id,
                   target_model_id=target_model_id or tm.kind,
                   robustness_id=robustness_id, seed=seed, details=details)
