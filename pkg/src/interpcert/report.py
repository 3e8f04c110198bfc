"""Run specs, end-to-end execution and reporting."""
from __future__ import annotations

import json
import os
import platform
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import BACKEND
from .data import (
    FiniteDomainSpec,
    LabeledDataset,
    SyntheticLinearSpec,
    kfold,
    load_csv,
    load_idx,
    sample_finite_domain,
    split,
    synth_linear,
)
from .errors import ContextMismatchError, SpecValidationError
from .metrics import (
    CertificateSet,
    InterpretabilityCertificate,
    aggregate_certificates,
    certify,
    dominates,
    equivalence_classes,
    hasse_edges,
    is_undefined,
)
from .models import Loss, NearestPrototypeClassifier, fit_logistic, fit_ols
from .procedures import PROCEDURE_KINDS, ProcedureSpec, run_pipeline
from .rng import make_rng
from .robustness import AdditivePerturbation, ClassSkew, Identity, generate_robust_sets

DATA_DIR_ENV = "INTERP_CERT_DATA_DIR"
METRIC_NAMES = {
    Loss.ZERO_ONE: "Classification error",
    Loss.MAPE_PERCENT: "MAPE",
    Loss.SQUARED_ERROR: "Squared error",
    Loss.FEATURE_RECALL_COMPLEMENT: "Feature Recall",
}
TM_KINDS = {"npc": "NPC", "ols": "OLS", "logistic": "SLR"}


# ---------------------------------------------------------------- run spec


@dataclass(frozen=True)
class RunSpec:
    dataset: dict
    target_model: dict
    procedures: tuple
    robustness: object
    robust_count: int
    loss: Loss
    split: dict
    seeds: tuple
    alpha: float = 0.0
    aggregation: str = "mean"
    name: str = "run"
    base_dir: str = "."

    @property
    def dataset_label(self):
        return self.dataset.get("label") or self.dataset["kind"]


def _resolve(path, base_dir):
    p = Path(path)
    if p.is_absolute():
        return p
    root = os.environ.get(DATA_DIR_ENV)
    return Path(root) / p if root else Path(base_dir) / p


def parse_run_spec(doc: dict, base_dir=".", seeds=None) -> RunSpec:
    """Validate a run-spec document, collecting every problem with its field path."""
    problems = []

    def need(cond, path, msg):
        if not cond:
            problems.append((path, msg))
        return cond

    if not isinstance(doc, dict):
        raise SpecValidationError([("$", "run spec must be a JSON object")])

    ds = doc.get("dataset")
    if need(isinstance(ds, dict), "dataset", "required object"):
        kind = ds.get("kind")
        if kind == "idx":
            for key in ("images", "labels"):
                if need(isinstance(ds.get(key), str), f"dataset.{key}", "path required"):
                    need(_resolve(ds[key], base_dir).is_file(), f"dataset.{key}",
                         f"file not found: {_resolve(ds[key], base_dir)}")
        elif kind == "csv":
            if need(isinstance(ds.get("path"), str), "dataset.path", "path required"):
                need(_resolve(ds["path"], base_dir).is_file(), "dataset.path",
                     f"file not found: {_resolve(ds['path'], base_dir)}")
            need(isinstance(ds.get("target"), str), "dataset.target", "target column name required")
        elif kind == "synthetic_linear":
            for key in ("d", "relevant", "n"):
                need(key in ds, f"dataset.{key}", "required")
        elif kind == "finite_domain":
            need(isinstance(ds.get("spec"), dict), "dataset.spec", "finite-domain spec object required")
            need(isinstance(ds.get("n"), int) and ds.get("n", 0) >= 1, "dataset.n", "positive integer required")
        else:
            problems.append(("dataset.kind", f"unknown dataset kind {kind!r}"))

    tm = doc.get("target_model")
    if need(isinstance(tm, dict), "target_model", "required object"):
        if need(tm.get("kind") in TM_KINDS, "target_model.kind", f"one of {sorted(TM_KINDS)}"):
            if tm["kind"] == "npc":
                need(isinstance(tm.get("prototypes"), int) and tm["prototypes"] >= 1,
                     "target_model.prototypes", "positive integer required")

    procs = []
    raw = doc.get("procedures")
    if need(isinstance(raw, list) and raw, "procedures", "non-empty list required"):
        for i, p in enumerate(raw):
            path = f"procedures[{i}]"
            if not need(isinstance(p, dict), path, "object required"):
                continue
            if not need(p.get("kind") in PROCEDURE_KINDS, f"{path}.kind", f"one of {PROCEDURE_KINDS}"):
                continue
            try:
                procs.append(ProcedureSpec(
                    kind=p["kind"], m=p.get("m"), kernel_bandwidth=p.get("kernel_bandwidth"),
                    patience=int(p.get("patience", 0)), seed=int(p.get("seed", 0)),
                    complex_model=p.get("complex_model"), name=p.get("name")))
            except (ValueError, TypeError) as exc:
                problems.append((path, str(exc)))
        ids = [p.procedure_id for p in procs]
        need(len(set(ids)) == len(ids), "procedures", "procedure ids must be unique (set 'name')")

    rob_doc = doc.get("robustness", {"kind": "identity"})
    gen, count = None, 1
    if need(isinstance(rob_doc, dict), "robustness", "object required"):
        kind = rob_doc.get("kind", "identity")
        try:
            if kind == "identity":
                gen = Identity()
            elif kind == "class_skew":
                gen = ClassSkew(rob_doc.get("set_size"), rob_doc.get("label"))
                count = int(rob_doc.get("count", 10))
            elif kind == "perturbation":
                gen = AdditivePerturbation(float(rob_doc.get("epsilon", 0)), rob_doc.get("norm", "l2"))
                count = int(rob_doc.get("count", 1))
            else:
                problems.append(("robustness.kind", f"unknown generator {kind!r}"))
        except (ValueError, TypeError) as exc:
            problems.append(("robustness", str(exc)))
        need(count >= 1, "robustness.count", "must be >= 1")

    loss = None
    try:
        loss = Loss(doc.get("loss", ""))
    except ValueError:
        problems.append(("loss", f"one of {[l.value for l in Loss]}"))

    sp = doc.get("split", {"train": 0.7, "test": 0.3})
    if need(isinstance(sp, dict), "split", "object required"):
        if "folds" in sp:
            need(isinstance(sp["folds"], int) and sp["folds"] >= 2, "split.folds", "integer >= 2 required")
        else:
            need("train" in sp and "test" in sp, "split", "needs 'train' and 'test' (or 'folds')")

    if seeds is None:
        seeds = doc.get("seeds", [0])
    need(isinstance(seeds, (list, tuple)) and seeds and all(isinstance(s, int) for s in seeds),
         "seeds", "non-empty list of integers required")
    alpha = doc.get("alpha", 0.0)
    need(isinstance(alpha, (int, float)) and alpha >= 0, "alpha", "number >= 0 required")
    agg = doc.get("aggregation", "mean")
    need(agg in ("mean", "max"), "aggregation", "'mean' or 'max'")

    if problems:
        raise SpecValidationError(problems)
    return RunSpec(dataset=ds, target_model=tm, procedures=tuple(procs), robustness=gen,
                   robust_count=count, loss=loss, split=sp, seeds=tuple(seeds), alpha=float(alpha),
                   aggregation=agg, name=str(doc.get("name", "run")), base_dir=str(base_dir))


def load_run_spec(path, seeds=None) -> RunSpec:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_run_spec(doc, path.parent, seeds)


# ---------------------------------------------------------------- execution


def load_dataset(spec: RunSpec, seed) -> LabeledDataset:
    ds = spec.dataset
    kind = ds["kind"]
    if kind == "idx":
        return load_idx(_resolve(ds["images"], spec.base_dir), _resolve(ds["labels"], spec.base_dir))
    if kind == "csv":
        return load_csv(_resolve(ds["path"], spec.base_dir), ds["target"], ds.get("features"))
    if kind == "synthetic_linear":
        return synth_linear(SyntheticLinearSpec(
            d=ds["d"], relevant=tuple(ds["relevant"]), coefficients=ds.get("coefficients"),
            noise=ds.get("noise", 0.1), n=ds["n"], seed=ds.get("seed", seed)))
    fd = FiniteDomainSpec.from_json(ds["spec"])
    return sample_finite_domain(fd, ds["n"], seed=ds.get("seed", seed))


def build_target_model(spec: RunSpec, train: LabeledDataset, seed):
    cfg = spec.target_model
    kind = cfg["kind"]
    loss_id = spec.loss.value
    if kind == "npc":
        m = cfg["prototypes"]
        idx = make_rng(seed, "baseline-prototypes").permutation(train.n)[:m]
        return NearestPrototypeClassifier(train.features[idx], train.targets[idx],
                                          tuple(idx.tolist()), loss_id)
    features = cfg.get("features")
    if cfg.get("random_features") is not None:
        k = int(cfg["random_features"])
        features = sorted(make_rng(seed, "baseline-features").permutation(train.d)[:k].tolist())
    fit = fit_ols if kind == "ols" else fit_logistic
    return fit(train, features, loss_id=loss_id)


def target_model_id(spec: RunSpec) -> str:
    cfg = spec.target_model
    label = TM_KINDS[cfg["kind"]]
    if cfg["kind"] == "npc":
        return f"{label}[random {cfg['prototypes']}]"
    if cfg.get("random_features") is not None:
        return f"{label}[random {cfg['random_features']} features]"
    return label


def _folds(spec: RunSpec, data: LabeledDataset, seed):
    sp = spec.split
    if "folds" in sp:
        parts = kfold(data, sp["folds"], seed)
        for i, test in enumerate(parts):
            train = LabeledDataset(
                np.vstack([p.features for j, p in enumerate(parts) if j != i]),
                np.concatenate([p.targets for j, p in enumerate(parts) if j != i]),
                data.feature_names, data.provenance)
            yield train, test
    else:
        train, test = split(data, [sp["train"], sp["test"]], seed)
        yield train, test


def run_one(spec: RunSpec, proc_index: int, seed: int) -> InterpretabilityCertificate:
    """Certificate for one (procedure, seed) pair, averaged over folds if any."""
    proc = spec.procedures[proc_index]
    data = load_dataset(spec, seed)
    certs = []
    for fold, (train, test) in enumerate(_folds(spec, data, seed)):
        fold_seed = seed if fold == 0 else int(make_rng(seed, "fold", fold).integers(2**31))
        tm = build_target_model(spec, train, fold_seed)
        robust = generate_robust_sets(spec.robustness, test, spec.robust_count, fold_seed)
        certs.append(run_pipeline(proc, tm, train, test, robust, spec.loss,
                                  robustness_id=spec.robustness.robustness_id, seed=seed,
                                  aggregate=spec.aggregation, target_model_id=target_model_id(spec)))
    if len(certs) == 1:
        return certs[0]
    agg = aggregate_certificates(certs, seed=seed)
    details = {**agg.details, "fold_deltas": [c.delta for c in certs],
               "folds": [c.details for c in certs]}
    return InterpretabilityCertificate(agg.delta, agg.gamma, agg.e_base_T, agg.e_new_T, agg.e_base_R,
                                       agg.e_new_R, agg.procedure_id, agg.target_model_id,
                                       agg.robustness_id, seed, details)


def _run_task(args):
    spec, proc_index, seed = args
    try:
        return proc_index, seed, run_one(spec, proc_index, seed), None
    except Exception as exc:  # isolated per procedure; reported, never raised
        return proc_index, seed, None, f"{type(exc).__name__}: {exc}"


@dataclass
class Report:
    name: str
    certificates: list                 # per (procedure, seed), procedure-major order
    aggregated: list                   # one per procedure that produced certificates
    dominance_edges: list
    equivalence_classes: list
    failures: list
    spread: dict
    alpha: float
    metric: str
    dataset_label: str
    robustness_label: str
    environment: dict = field(default_factory=dict)


def _spread(certs):
    deltas = [c.delta for c in certs]
    gammas = [c.gamma for c in certs if not is_undefined(c.gamma)]
    return {"delta_std": float(np.std(deltas)) if len(deltas) > 1 else 0.0,
            "gamma_std": float(np.std(gammas)) if len(gammas) > 1 else 0.0,
            "delta_min": min(deltas), "delta_max": max(deltas)}


def execute(spec: RunSpec, jobs: int = 1) -> Report:
    """Run every (procedure, seed) pipeline and assemble a report.

    Pipelines may run in parallel; assembly order is procedure then seed.
    A failing procedure is recorded in ``failures`` and does not stop the rest.
    """
    tasks = [(spec, i, s) for i in range(len(spec.procedures)) for s in spec.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]

    certificates, failures, aggregated, spread = [], [], [], {}
    for i, proc in enumerate(spec.procedures):
        mine = [r for r in results if r[0] == i]
        ok = [c for _, _, c, err in mine if err is None]
        for _, seed, _, err in mine:
            if err is not None:
                failures.append({"procedure": proc.procedure_id, "seed": seed, "error": err})
        certificates.extend(ok)
        if ok and len(ok) == len(mine):
            if len(ok) == 1:
                agg = certify(ok[0].e_base_T, ok[0].e_base_R, ok[0].e_new_T, ok[0].e_new_R,
                              procedure_id=proc.procedure_id, target_model_id=ok[0].target_model_id,
                              robustness_id=ok[0].robustness_id, details={"seeds": [ok[0].seed]})
            else:
                try:
                    agg = aggregate_certificates(ok)
                except Exception as exc:
                    failures.append({"procedure": proc.procedure_id, "seed": None,
                                     "error": f"{type(exc).__name__}: {exc}"})
                    continue
            aggregated.append(agg)
            spread[proc.procedure_id] = _spread(ok)

    edges, classes = [], []
    if aggregated:
        edges = hasse_edges(aggregated)
        classes = equivalence_classes(CertificateSet(aggregated, spec.alpha))
    return Report(
        name=spec.name, certificates=certificates, aggregated=aggregated, dominance_edges=edges,
        equivalence_classes=classes, failures=failures, spread=spread, alpha=spec.alpha,
        metric=METRIC_NAMES[spec.loss], dataset_label=spec.dataset_label,
        robustness_label=spec.robustness.label_text,
        environment={"interpcert_version": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "backend": BACKEND, "seeds": list(spec.seeds),
                     "aggregation": spec.aggregation,
                     "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())},
    )


# ---------------------------------------------------------------- output


def _fmt(x):
    if is_undefined(x):
        return "undef"
    if x == 0:
        return "0"
    return f"{x:.3f}"


def _slug(text):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_")


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_table(report: Report) -> str:
    """Plain-text table, one row per procedure. The sd columns are per-seed spread."""
    header = ["Interpretable Procedure", "TM", "delta", "gamma", "D_R", "Dataset (S_T)",
              "Performance Metric", "delta sd*", "gamma sd*"]
    rows = []
    for cert in report.aggregated:
        sp = report.spread.get(cert.procedure_id, {})
        rows.append([cert.procedure_id, cert.target_model_id, _fmt(cert.delta), _fmt(cert.gamma),
                     report.robustness_label, report.dataset_label, report.metric,
                     f"{sp.get('delta_std', 0.0):.3f}", f"{sp.get('gamma_std', 0.0):.3f}"])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: " | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    out = [line(header), "-+-".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    out.append("* per-seed standard deviation; not part of the certificate itself")
    for f in report.failures:
        out.append(f"FAILED {f['procedure']} seed={f['seed']}: {f['error']}")
    return "\n".join(out) + "\n"


def write_report(report: Report, out_dir) -> Path:
    out = Path(out_dir)
    (out / "certificates").mkdir(parents=True, exist_ok=True)
    (out / "aggregated").mkdir(exist_ok=True)
    for cert in report.certificates:
        name = f"{_slug(cert.procedure_id)}__seed{cert.seed}.json"
        (out / "certificates" / name).write_text(dumps(cert.to_json()), encoding="utf-8")
    for cert in report.aggregated:
        (out / "aggregated" / f"{_slug(cert.procedure_id)}.json").write_text(
            dumps(cert.to_json()), encoding="utf-8")
    summary = {
        "schema_version": 1,
        "name": report.name,
        "alpha": report.alpha,
        "metric": report.metric,
        "dataset": report.dataset_label,
        "robustness": report.robustness_label,
        "aggregated": [c.to_json() for c in report.aggregated],
        "per_seed_spread": report.spread,
        "dominance_edges": [list(e) for e in report.dominance_edges],
        "equivalence_classes": [list(c) for c in report.equivalence_classes],
        "failures": report.failures,
        "environment": report.environment,
    }
    (out / "summary.json").write_text(dumps(summary), encoding="utf-8")
    (out / "table.txt").write_text(render_table(report), encoding="utf-8")
    return out


def _recertify(cert: InterpretabilityCertificate) -> InterpretabilityCertificate:
    """Rebuild a certificate from its stored errors, so numbers are never taken on trust."""
    return certify(cert.e_base_T, cert.e_base_R, cert.e_new_T, cert.e_new_R,
                   procedure_id=cert.procedure_id, target_model_id=cert.target_model_id,
                   robustness_id=cert.robustness_id, seed=cert.seed, details=cert.details)


def read_report(in_dir) -> Report:
    in_dir = Path(in_dir)
    summary = json.loads((in_dir / "summary.json").read_text(encoding="utf-8"))
    aggregated = [_recertify(InterpretabilityCertificate.from_json(d)) for d in summary["aggregated"]]
    certs = [_recertify(InterpretabilityCertificate.from_json(json.loads(p.read_text(encoding="utf-8"))))
             for p in sorted((in_dir / "certificates").glob("*.json"))]
    return Report(
        name=summary["name"], certificates=certs, aggregated=aggregated,
        dominance_edges=[tuple(e) for e in summary["dominance_edges"]],
        equivalence_classes=[tuple(c) for c in summary["equivalence_classes"]],
        failures=summary["failures"], spread=summary["per_seed_spread"], alpha=summary["alpha"],
        metric=summary["metric"], dataset_label=summary["dataset"],
        robustness_label=summary["robustness"], environment=summary["environment"])


def load_certificates(paths) -> list[InterpretabilityCertificate]:
    """Certificates from report directories (their aggregated ones) or JSON files."""
    certs = []
    for p in map(Path, paths):
        if p.is_dir():
            if (p / "summary.json").is_file():
                certs.extend(read_report(p).aggregated)
            else:
                files = sorted(p.glob("*.json"))
                certs.extend(_recertify(InterpretabilityCertificate.from_json(
                    json.loads(f.read_text(encoding="utf-8")))) for f in files)
        else:
            certs.append(_recertify(InterpretabilityCertificate.from_json(
                json.loads(p.read_text(encoding="utf-8")))))
    return certs


def compare(certs, alpha=0.0) -> dict:
    """Dominance (covering) edges and alpha-equivalence classes for comparable certificates."""
    certs = list(certs)
    for other in certs[1:]:
        dominates(certs[0], other)  # raises ContextMismatchError on differing context
    if len({c.cert_id for c in certs}) != len(certs):
        raise ContextMismatchError("duplicate certificate ids; compare certificates from one context")
    return {
        "edges": hasse_edges(certs),
        "classes": equivalence_classes(CertificateSet(certs, alpha)),
        "certificates": {c.cert_id: (c.delta, c.gamma) for c in certs},
    }


def render_compare(summary: dict) -> str:
    lines = ["certificates:"]
    for cid, (d, g) in summary["certificates"].items():
        lines.append(f"  {cid}: delta={_fmt(d)} gamma={_fmt(g)}")
    lines.append("dominance (better -> worse):")
    lines += [f"  {a} -> {b}" for a, b in summary["edges"]] or ["  (none)"]
    lines.append("equivalence classes:")
    lines += ["  {" + ", ".join(c) + "}" for c in summary["classes"]]
    return "\n".join(lines) + "\n"
