"""Adversarial test-set generators and the robust error they feed into gamma."""
from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .data import LabeledDataset
from .errors import EmptyInputError, InsufficientClassError, InvalidEpsilonError
from .metrics import ErrorEstimate
from .models import evaluate
from .rng import make_rng


@dataclass(frozen=True)
class Identity:
    """D_R = D_T: the robust set is the test set itself."""

    label_text: ClassVar[str] = "Identity"

    @property
    def robustness_id(self):
        return "identity"


@dataclass(frozen=True)
class ClassSkew:
    """Sets that each contain a single class.

    With ``label=None`` the sets cycle through the sorted class labels, so
    ``count`` equal to the number of classes gives one set per class.
    ``set_size=None`` takes every instance of the class.
    """

    set_size: int | None = None
    label: object = None
    seed: int = 0

    label_text: ClassVar[str] = "Skewed"

    def __post_init__(self):
        if self.set_size is not None and self.set_size < 1:
            raise ValueError("skewed set size must be >= 1")

    @property
    def robustness_id(self):
        size = "all" if self.set_size is None else self.set_size
        which = "each" if self.label is None else self.label
        return f"class_skew(class={which},size={size})"


@dataclass(frozen=True)
class AdditivePerturbation:
    """Gaussian noise per instance, rescaled to norm exactly ``epsilon``."""

    epsilon: float
    norm: str = "l2"
    seed: int = 0

    label_text: ClassVar[str] = "Perturbed"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidEpsilonError(f"epsilon must be > 0, got {self.epsilon}")
        if self.norm not in ("l2", "linf"):
            raise ValueError("norm is 'l2' or 'linf'")

    @property
    def robustness_id(self):
        return f"perturb({self.norm},eps={self.epsilon:g})"


def generator_label(gen) -> str:
    return gen.label_text


def generator_from_json(doc):
    kind = doc.get("kind", "identity")
    if kind == "identity":
        return Identity()
    if kind == "class_skew":
        return ClassSkew(doc.get("set_size"), doc.get("label"), doc.get("seed", 0))
    if kind == "perturbation":
        return AdditivePerturbation(float(doc["epsilon"]), doc.get("norm", "l2"), doc.get("seed", 0))
    raise ValueError(f"unknown robustness generator {kind!r}")


def generate_robust_sets(gen, source: LabeledDataset, count: int, seed=None) -> list[LabeledDataset]:
    """``count`` robust samples built from ``source``.

    ``seed`` overrides the generator's own seed (pipelines pass the run seed).
    Skewed sets drawn with replacement carry ``provenance["with_replacement"]``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    seed = getattr(gen, "seed", 0) if seed is None else seed
    if isinstance(gen, Identity):
        return [source] * count
    if isinstance(gen, ClassSkew):
        classes = np.unique(source.targets)
        sets = []
        for i in range(count):
            cls = gen.label if gen.label is not None else classes[i % classes.shape[0]]
            pool = np.flatnonzero(source.targets == cls)
            if pool.shape[0] == 0:
                raise InsufficientClassError(f"class {cls!r} does not occur in the source")
            if gen.set_size is None:
                chosen, replace = pool, False
            else:
                replace = pool.shape[0] < gen.set_size
                rng = make_rng(seed, "class-skew", i)
                chosen = rng.choice(pool, size=gen.set_size, replace=replace)
            part = source.take(chosen)
            sets.append(LabeledDataset(part.features, part.targets, part.feature_names, {
                **source.provenance, "skew_class": np.asarray(cls).item(),
                "with_replacement": bool(replace)}))
        return sets
    if isinstance(gen, AdditivePerturbation):
        sets = []
        for i in range(count):
            rng = make_rng(seed, "perturb", i)
            noise = rng.standard_normal(source.features.shape)
            if gen.norm == "l2":
                size = np.linalg.norm(noise, axis=1)
            else:
                size = np.abs(noise).max(axis=1)
            noise *= (gen.epsilon / size)[:, None]
            sets.append(LabeledDataset(source.features + noise, source.targets, source.feature_names,
                                       {**source.provenance, "perturbation": gen.robustness_id}))
        return sets
    raise ValueError(f"unknown robustness generator {gen!r}")


def robust_errors(model, sets, loss) -> list[ErrorEstimate]:
    if not sets:
        raise EmptyInputError("no robust sets")
    return [evaluate(model, s, loss) for s in sets]


def robust_error(model, sets, loss, aggregate="mean") -> ErrorEstimate:
    """Mean (default) or worst-case error over the robust sets."""
    per_set = robust_errors(model, sets, loss)
    return combine_robust(per_set, aggregate)


def combine_robust(per_set, aggregate="mean") -> ErrorEstimate:
    if not per_set:
        raise EmptyInputError("no robust sets")
    values = [e.value for e in per_set]
    if aggregate == "mean":
        value = float(np.mean(values))
    elif aggregate == "max":
        value = max(values)
    else:
        raise ValueError(f"aggregate is 'mean' or 'max', got {aggregate!r}")
    return ErrorEstimate(value, sum(e.sample_size for e in per_set), per_set[0].loss_id)
