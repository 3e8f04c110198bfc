"""Datasets: CSV and IDX ingestion, synthetic generators, splitting."""
from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CountMismatchError,
    EmptyPartError,
    MagicMismatchError,
    MissingColumnError,
    ParseError,
    TruncatedFileError,
)
from .rng import make_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.targets)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-D array, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"targets shape {y.shape} does not match {X.shape[0]} rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite entries")
        if y.dtype.kind == "f" and not np.all(np.isfinite(y)):
            raise ValueError("targets contain non-finite entries")
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != X.shape[1]:
                raise ValueError("feature_names length differs from feature count")
            object.__setattr__(self, "feature_names", names)
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, index) -> "LabeledDataset":
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(self.features[index], self.targets[index], self.feature_names,
                              self.provenance)

    def __len__(self):
        return self.n


# ---------------------------------------------------------------- CSV


def _parse_float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite value")
    return value


def load_csv(path, target, features=None) -> LabeledDataset:
    """Read a headed, comma-separated UTF-8 file.

    ``features`` defaults to every column except ``target``. Line numbers in
    :class:`ParseError` are 1-based physical lines, the header being line 1.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, None, "file is empty; a header row is required") from None
        header = [h.strip() for h in header]
        if target not in header:
            raise MissingColumnError(f"target column {target!r} not in header of {path}")
        if features is None:
            features = [h for h in header if h != target]
        missing = [f for f in features if f not in header]
        if missing:
            raise MissingColumnError(f"feature columns {missing} not in header of {path}")
        cols = [header.index(f) for f in features]
        tcol = header.index(target)
        rows, ys = [], []
        for record in reader:
            line = reader.line_num
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if len(record) != len(header):
                raise ParseError(line, None, f"expected {len(header)} fields, found {len(record)}")
            values = []
            for c in cols + [tcol]:
                try:
                    values.append(_parse_float(record[c]))
                except ValueError:
                    raise ParseError(line, header[c], f"cannot parse {record[c]!r} as a finite number") from None
            rows.append(values[:-1])
            ys.append(values[-1])
    if not rows:
        raise ParseError(reader.line_num + 1, None, "no data rows")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(cols))
    return LabeledDataset(X, np.array(ys), tuple(features),
                          {"source": "csv", "path": str(path), "target": target})


# ---------------------------------------------------------------- IDX


def _read_maybe_gzip(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _idx_header(buf, path, magic, ndim):
    if len(buf) < 4:
        raise TruncatedFileError(f"{path}: {len(buf)} bytes, too short for a magic number")
    (found,) = struct.unpack(">I", buf[:4])
    if found != magic:
        raise MagicMismatchError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    end = 4 + 4 * ndim
    if len(buf) < end:
        raise TruncatedFileError(f"{path}: header promises {ndim} dimensions but file ends early")
    dims = struct.unpack(">" + "I" * ndim, buf[4:end])
    size = int(np.prod(dims, dtype=np.int64))
    if len(buf) < end + size:
        raise TruncatedFileError(f"{path}: header promises {size} data bytes, found {len(buf) - end}")
    return dims, np.frombuffer(buf, dtype=np.uint8, count=size, offset=end)


def load_idx(images_path, labels_path) -> LabeledDataset:
    """MNIST-style IDX pair (optionally gzipped); pixels scaled into [0, 1]."""
    (count, rows, cols), pixels = _idx_header(_read_maybe_gzip(images_path), images_path,
                                              IDX_IMAGES_MAGIC, 3)
    (nlab,), labels = _idx_header(_read_maybe_gzip(labels_path), labels_path, IDX_LABELS_MAGIC, 1)
    if count != nlab:
        raise CountMismatchError(f"{count} images but {nlab} labels")
    X = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return LabeledDataset(X, labels.astype(np.int64), None, {
        "source": "idx", "images": str(images_path), "labels": str(labels_path),
        "image_shape": [rows, cols],
    })


def _write_bytes(path, payload):
    path = Path(path)
    if path.suffix == ".gz":
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)


def save_idx(dataset: LabeledDataset, images_path, labels_path, image_shape=None):
    """Inverse of :func:`load_idx` (exact for data that came from 8-bit pixels)."""
    if image_shape is None:
        image_shape = dataset.provenance.get("image_shape")
    if image_shape is None:
        side = math.isqrt(dataset.d)
        if side * side != dataset.d:
            raise ValueError("image_shape is required for non-square feature counts")
        image_shape = (side, side)
    rows, cols = image_shape
    pixels = np.rint(dataset.features * 255.0)
    if pixels.min() < 0 or pixels.max() > 255:
        raise ValueError("features outside [0, 1] cannot be stored as 8-bit pixels")
    head = struct.pack(">IIII", IDX_IMAGES_MAGIC, dataset.n, rows, cols)
    _write_bytes(images_path, head + pixels.astype(np.uint8).tobytes())
    head = struct.pack(">II", IDX_LABELS_MAGIC, dataset.n)
    _write_bytes(labels_path, head + np.asarray(dataset.targets).astype(np.uint8).tobytes())


# ---------------------------------------------------------------- finite domain


@dataclass(frozen=True, eq=False)
class FiniteDomainSpec:
    """Exactly enumerable distribution over K points with conditional labels."""

    points: np.ndarray          # (K, d)
    probs: np.ndarray           # (K,)
    label_values: np.ndarray    # (L,)
    conditional: np.ndarray     # (K, L), rows are p(y | x)
    seed: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        p = np.array(self.probs, dtype=np.float64)
        labels = np.array(self.label_values)
        cond = np.array(self.conditional, dtype=np.float64)
        if p.shape != (pts.shape[0],) or cond.shape != (pts.shape[0], labels.shape[0]):
            raise ValueError("inconsistent finite-domain shapes")
        if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("point probabilities must lie in [0, 1] and sum to 1")
        if np.any(cond < 0) or np.any(np.abs(cond.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each row of the conditional label table must sum to 1")
        for name, value in (("points", pts), ("probs", p), ("label_values", labels), ("conditional", cond)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def to_json(self) -> dict:
        return {"points": self.points.tolist(), "probs": self.probs.tolist(),
                "label_values": self.label_values.tolist(),
                "conditional": self.conditional.tolist(), "seed": self.seed}

    @classmethod
    def from_json(cls, doc):
        return cls(doc["points"], doc["probs"], doc["label_values"], doc["conditional"],
                   doc.get("seed", 0))


def sample_finite_domain(spec: FiniteDomainSpec, n: int, seed=None) -> LabeledDataset:
    """``n`` i.i.d. draws; ``seed`` overrides the domain's own seed for resampling."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(spec.seed if seed is None else seed, "finite-domain")
    which = rng.choice(spec.size, size=n, p=spec.probs)
    u = rng.random(n)
    cdf = np.cumsum(spec.conditional, axis=1)
    lab = np.minimum((u[:, None] >= cdf[which]).sum(axis=1), spec.label_values.shape[0] - 1)
    # zero-probability labels at the top of the cdf are never drawn
    ok = spec.conditional[which, lab] > 0
    if not np.all(ok):
        lab[~ok] = np.argmax(spec.conditional[which[~ok]] > 0, axis=1)
    return LabeledDataset(spec.points[which], spec.label_values[lab], None,
                          {"source": "finite_domain", "domain_index": which.tolist()})


def domain_table(spec: FiniteDomainSpec):
    """Every (point, label) pair with its joint probability, as (dataset, weights)."""
    K, L = spec.conditional.shape
    rows = np.repeat(np.arange(K), L)
    labs = np.tile(np.arange(L), K)
    weights = (spec.probs[:, None] * spec.conditional).ravel()
    data = LabeledDataset(spec.points[rows], spec.label_values[labs], None,
                          {"source": "finite_domain_table"})
    return data, weights


def exact_expected_error(spec: FiniteDomainSpec, model, loss):
    """True expected loss of ``model`` under ``spec`` by enumeration."""
    from .metrics import ErrorEstimate
    from .models import Loss, predict

    loss = Loss(loss)
    pred = np.asarray(predict(model, spec.points), dtype=np.float64)
    y = spec.label_values.astype(np.float64)
    if loss is Loss.ZERO_ONE:
        per = (pred[:, None] != y[None, :]).astype(np.float64)
    elif loss is Loss.SQUARED_ERROR:
        per = (pred[:, None] - y[None, :]) ** 2
    elif loss is Loss.MAPE_PERCENT:
        mean_y = float(spec.probs @ (spec.conditional @ y))
        if mean_y <= 0:
            from .errors import InvalidTargetError
            raise InvalidTargetError("MAPE needs a positive mean target")
        per = np.abs(pred[:, None] - y[None, :]) * (100.0 / mean_y)
    else:
        raise ValueError(f"{loss.value} has no distributional form")
    value = float(np.sum(spec.probs * np.sum(spec.conditional * per, axis=1)))
    return ErrorEstimate(value, spec.size, loss.value)


# ---------------------------------------------------------------- synthetic linear


@dataclass(frozen=True)
class SyntheticLinearSpec:
    d: int
    relevant: tuple
    coefficients: tuple | None = None   # defaults to 1.0 per relevant feature
    noise: float = 0.1
    n: int = 200
    seed: int = 0

    def __post_init__(self):
        rel = tuple(int(i) for i in self.relevant)
        if any(i < 0 or i >= self.d for i in rel) or len(set(rel)) != len(rel):
            raise ValueError(f"relevant indices must be distinct and within 0..{self.d - 1}")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        coef = (1.0,) * len(rel) if self.coefficients is None else tuple(map(float, self.coefficients))
        if len(coef) != len(rel):
            raise ValueError("one coefficient per relevant feature")
        object.__setattr__(self, "relevant", rel)
        object.__setattr__(self, "coefficients", coef)


def synth_linear(spec: SyntheticLinearSpec) -> LabeledDataset:
    """Standard-normal features, target linear in ``spec.relevant`` plus Gaussian noise."""
    rng = make_rng(spec.seed, "synth-linear")
    X = rng.standard_normal((spec.n, spec.d))
    y = X[:, list(spec.relevant)] @ np.array(spec.coefficients) if spec.relevant else np.zeros(spec.n)
    y = y + spec.noise * rng.standard_normal(spec.n)
    names = tuple(f"x{i}" for i in range(spec.d))
    return LabeledDataset(X, y, names, {"source": "synthetic_linear", "truth": list(spec.relevant)})


# ---------------------------------------------------------------- splitting


def split(data: LabeledDataset, fractions, seed) -> tuple[LabeledDataset, ...]:
    """Seeded permutation cut into contiguous parts.

    ``fractions`` summing to 1 are converted to sizes by rounding cumulative
    boundaries. Integer sizes are used as given; rows beyond their sum are
    dropped.
    """
    fractions = list(fractions)
    n = data.n
    if all(isinstance(f, (int, np.integer)) for f in fractions):
        sizes = [int(f) for f in fractions]
        if sum(sizes) > n:
            raise EmptyPartError(f"sizes {sizes} exceed the {n} available rows")
    else:
        if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
            raise ValueError(f"fractions must be non-negative and sum to 1, got {fractions}")
        bounds = np.rint(np.cumsum([0.0] + fractions) * n).astype(int)
        bounds[-1] = n
        sizes = np.diff(bounds).tolist()
    if any(s < 1 for s in sizes):
        raise EmptyPartError(f"split of {n} rows into {fractions} leaves an empty part")
    perm = make_rng(seed, "split").permutation(n)
    parts, start = [], 0
    for s in sizes:
        parts.append(data.take(perm[start:start + s]))
        start += s
    return tuple(parts)


def kfold(data: LabeledDataset, k: int, seed) -> list[LabeledDataset]:
    """``k`` disjoint folds covering ``data``."""
    if k < 1 or k > data.n:
        raise EmptyPartError(f"cannot cut {data.n} rows into {k} non-empty folds")
    perm = make_rng(seed, "kfold").permutation(data.n)
    return [data.take(idx) for idx in np.array_split(perm, k)]
