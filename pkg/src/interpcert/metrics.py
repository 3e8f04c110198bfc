"""Delta/gamma certificates, their aggregation, ordering and grouping."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .errors import (
    ContextMismatchError,
    EmptyInputError,
    LossMismatchError,
    ZeroBaselineError,
)

GAP_TOL = 1e-12
SCHEMA_VERSION = 1


class _Undefined:
    """Marker for a gamma with no finite witness (zero baseline gap, nonzero new gap)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __reduce__(self):
        return (_Undefined, ())


UNDEFINED = _Undefined()


def is_undefined(value) -> bool:
    return value is UNDEFINED


@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    sample_size: int
    loss_id: str

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"error value must be finite and >= 0, got {self.value}")
        if int(self.sample_size) != self.sample_size or self.sample_size < 1:
            raise ValueError(f"sample_size must be a positive integer, got {self.sample_size}")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "sample_size", int(self.sample_size))

    def to_json(self) -> dict:
        return {"value": self.value, "sample_size": self.sample_size, "loss_id": self.loss_id}

    @classmethod
    def from_json(cls, doc: dict) -> "ErrorEstimate":
        return cls(doc["value"], doc["sample_size"], doc["loss_id"])


def _check_losses(*errors: ErrorEstimate) -> str:
    ids = {e.loss_id for e in errors}
    if len(ids) != 1:
        raise LossMismatchError(f"error estimates use different losses: {sorted(ids)}")
    return ids.pop()


def compute_delta(e_base: ErrorEstimate, e_new: ErrorEstimate) -> float:
    """Tightest delta with ``e_new <= delta * e_base``."""
    _check_losses(e_base, e_new)
    if e_base.value == 0:
        raise ZeroBaselineError("baseline error is 0; the target model is already perfect")
    return e_new.value / e_base.value


def compute_gamma(e_base_T, e_base_R, e_new_T, e_new_R):
    """Ratio of the new model's robust-minus-test gap to the baseline's.

    Returns 0 when both gaps are below ``GAP_TOL`` and ``UNDEFINED`` when only
    the baseline gap is. Negative values are returned unchanged.
    """
    _check_losses(e_base_T, e_base_R, e_new_T, e_new_R)
    gap_base = e_base_R.value - e_base_T.value
    gap_new = e_new_R.value - e_new_T.value
    if abs(gap_base) <= GAP_TOL:
        return 0.0 if abs(gap_new) <= GAP_TOL else UNDEFINED
    return gap_new / gap_base


@dataclass(frozen=True)
class InterpretabilityCertificate:
    delta: float
    gamma: Any  # float or UNDEFINED
    e_base_T: ErrorEstimate
    e_new_T: ErrorEstimate
    e_base_R: ErrorEstimate
    e_new_R: ErrorEstimate
    procedure_id: str
    target_model_id: str
    robustness_id: str
    seed: int | None = None
    details: dict = field(default_factory=dict, compare=False)

    @property
    def loss_id(self) -> str:
        return self.e_base_T.loss_id

    @property
    def cert_id(self) -> str:
        return self.procedure_id if self.seed is None else f"{self.procedure_id}/seed={self.seed}"

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "delta": self.delta,
            "gamma": "undefined" if is_undefined(self.gamma) else self.gamma,
            "errors": {
                "base_T": self.e_base_T.to_json(),
                "base_R": self.e_base_R.to_json(),
                "new_T": self.e_new_T.to_json(),
                "new_R": self.e_new_R.to_json(),
            },
            "ids": {
                "procedure": self.procedure_id,
                "target_model": self.target_model_id,
                "robustness": self.robustness_id,
            },
            "seed": self.seed,
            "details": self.details,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "InterpretabilityCertificate":
        errs = {k: ErrorEstimate.from_json(v) for k, v in doc["errors"].items()}
        gamma = doc["gamma"]
        return cls(
            delta=float(doc["delta"]),
            gamma=UNDEFINED if gamma == "undefined" else float(gamma),
            e_base_T=errs["base_T"],
            e_new_T=errs["new_T"],
            e_base_R=errs["base_R"],
            e_new_R=errs["new_R"],
            procedure_id=doc["ids"]["procedure"],
            target_model_id=doc["ids"]["target_model"],
            robustness_id=doc["ids"]["robustness"],
            seed=doc.get("seed"),
            details=doc.get("details", {}),
        )


def certify(e_base_T, e_base_R, e_new_T, e_new_R, *, procedure_id="procedure",
            target_model_id="target_model", robustness_id="identity", seed=None,
            details=None) -> InterpretabilityCertificate:
    """Package the performance and robustness ratios with the errors behind them."""
    delta = compute_delta(e_base_T, e_new_T)
    gamma = compute_gamma(e_base_T, e_base_R, e_new_T, e_new_R)
    return InterpretabilityCertificate(
        delta=delta,
        gamma=gamma,
        e_base_T=e_base_T,
        e_new_T=e_new_T,
        e_base_R=e_base_R,
        e_new_R=e_new_R,
        procedure_id=procedure_id,
        target_model_id=target_model_id,
        robustness_id=robustness_id,
        seed=seed,
        details=dict(details or {}),
    )


def cv_error(fold_errors: Sequence[ErrorEstimate]) -> ErrorEstimate:
    """Unweighted mean over folds; sample sizes add up."""
    fold_errors = list(fold_errors)
    if not fold_errors:
        raise EmptyInputError("cv_error needs at least one fold")
    loss_id = _check_losses(*fold_errors)
    # offset by the first fold so a constant sequence averages to itself exactly
    ref = fold_errors[0].value
    mean = max(0.0, ref + math.fsum(e.value - ref for e in fold_errors) / len(fold_errors))
    return ErrorEstimate(mean, sum(e.sample_size for e in fold_errors), loss_id)


def aggregate_multi_distribution(values: Iterable):
    """Worst case over several distributions. Any UNDEFINED entry wins."""
    values = list(values)
    if not values:
        raise EmptyInputError("nothing to aggregate")
    if any(is_undefined(v) for v in values):
        return UNDEFINED
    return max(values)


def aggregate_certificates(certs: Sequence[InterpretabilityCertificate], *, seed=None,
                           procedure_id=None) -> InterpretabilityCertificate:
    """Certificate from errors averaged across resamples (cross-validation style)."""
    certs = list(certs)
    if not certs:
        raise EmptyInputError("no certificates to aggregate")
    first = certs[0]
    return certify(
        cv_error([c.e_base_T for c in certs]),
        cv_error([c.e_base_R for c in certs]),
        cv_error([c.e_new_T for c in certs]),
        cv_error([c.e_new_R for c in certs]),
        procedure_id=procedure_id or first.procedure_id,
        target_model_id=first.target_model_id,
        robustness_id=first.robustness_id,
        seed=seed,
        details={"seeds": [c.seed for c in certs]},
    )


class Order(enum.Enum):
    """Outcome of comparing certificate ``a`` with ``b``."""

    A_DOMINATES = "a<=b"
    B_DOMINATES = "b<=a"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


def _gamma_key(g) -> float:
    return math.inf if is_undefined(g) else float(g)


def dominates(a: InterpretabilityCertificate, b: InterpretabilityCertificate) -> Order:
    """Componentwise comparison on (delta, gamma); smaller is better."""
    if a.loss_id != b.loss_id or a.robustness_id != b.robustness_id:
        raise ContextMismatchError(
            f"cannot compare ({a.loss_id}, {a.robustness_id}) with ({b.loss_id}, {b.robustness_id})"
        )
    ga, gb = _gamma_key(a.gamma), _gamma_key(b.gamma)
    a_le = a.delta <= b.delta and ga <= gb
    b_le = b.delta <= a.delta and gb <= ga
    if a_le and b_le:
        return Order.EQUAL
    if a_le:
        return Order.A_DOMINATES
    if b_le:
        return Order.B_DOMINATES
    return Order.INCOMPARABLE


@dataclass(frozen=True)
class CertificateSet:
    certificates: tuple
    alpha: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "certificates", tuple(self.certificates))
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        ids = [c.cert_id for c in self.certificates]
        if len(set(ids)) != len(ids):
            raise ValueError("certificate ids must be unique within a set")


def equivalence_classes(cset: CertificateSet) -> list[tuple[str, ...]]:
    """Connected components of the graph joining certificates with |delta_i - delta_j| <= alpha.

    In one dimension the components are the runs of the delta-sorted list
    whose consecutive gaps stay within alpha. Classes come out in order of
    their smallest delta.
    """
    certs = cset.certificates
    if not certs:
        return []
    order = sorted(range(len(certs)), key=lambda i: (certs[i].delta, i))
    groups = [[order[0]]]
    for prev, cur in zip(order, order[1:]):
        if certs[cur].delta - certs[prev].delta <= cset.alpha:
            groups[-1].append(cur)
        else:
            groups.append([cur])
    return [tuple(certs[i].cert_id for i in sorted(g)) for g in groups]


def hasse_edges(certs: Sequence[InterpretabilityCertificate]) -> list[tuple[str, str]]:
    """Covering pairs ``(better, worse)`` of the strict dominance order."""
    certs = list(certs)
    n = len(certs)
    below = [[dominates(certs[i], certs[j]) is Order.A_DOMINATES for j in range(n)] for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(n):
            if not below[i][j]:
                continue
            if any(below[i][k] and below[k][j] for k in range(n)):
                continue
            edges.append((certs[i].cert_id, certs[j].cert_id))
    return edges
