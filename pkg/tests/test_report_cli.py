import json
import shutil

import pytest

from conftest import MNIST_IMAGES, MNIST_LABELS, SPECS, cert
from interpcert.cli import main
from interpcert.errors import ContextMismatchError, SpecValidationError
from interpcert.metrics import UNDEFINED, ErrorEstimate, certify
from interpcert.report import Report, compare, execute, parse_run_spec, render_table

FR_SPEC = {
    "name": "fr",
    "dataset": {"kind": "synthetic_linear", "d": 6, "relevant": [1, 4], "noise": 0.1, "n": 120},
    "split": {"train": 0.75, "test": 0.25},
    "target_model": {"kind": "ols", "random_features": 2},
    "procedures": [{"kind": "stepwise_features", "m": 3, "name": "Stepwise"},
                   {"kind": "identity", "name": "Identity"}],
    "loss": "squared_error",
    "seeds": [0, 1],
}


def _write(tmp_path, doc, name="spec.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.json"))}


# ---------------------------------------------------------------- run spec validation


def test_spec_bad_path_names_field(tmp_path):
    doc = {**FR_SPEC, "dataset": {"kind": "idx", "images": "nope.gz", "labels": "nope2.gz"}}
    with pytest.raises(SpecValidationError) as info:
        parse_run_spec(doc, tmp_path)
    paths = [p for p, _ in info.value.problems]
    assert "dataset.images" in paths and "dataset.labels" in paths


def test_spec_collects_all_problems():
    doc = {**FR_SPEC, "procedures": [], "loss": "bogus", "alpha": -1}
    with pytest.raises(SpecValidationError) as info:
        parse_run_spec(doc)
    assert {"procedures", "loss", "alpha"} <= {p for p, _ in info.value.problems}


def test_spec_data_dir_env(tmp_path, monkeypatch):
    shutil.copy(MNIST_IMAGES, tmp_path / "i.gz")
    shutil.copy(MNIST_LABELS, tmp_path / "l.gz")
    doc = {**FR_SPEC, "dataset": {"kind": "idx", "images": "i.gz", "labels": "l.gz"}}
    with pytest.raises(SpecValidationError):
        parse_run_spec(doc, "/")
    monkeypatch.setenv("INTERP_CERT_DATA_DIR", str(tmp_path))
    assert parse_run_spec(doc, "/").dataset["images"] == "i.gz"


# ---------------------------------------------------------------- execution


def test_identity_only_spec(tmp_path):
    doc = {**FR_SPEC, "procedures": [{"kind": "identity"}]}
    report = execute(parse_run_spec(doc))
    assert all(c.delta == 1.0 and c.gamma == 0.0 for c in report.certificates)
    assert len(report.certificates) == 2


def test_aggregates_reproducible_from_members():
    report = execute(parse_run_spec(FR_SPEC))
    for agg in report.aggregated:
        members = [c for c in report.certificates if c.procedure_id == agg.procedure_id]
        mean = sum(c.e_new_T.value for c in members) / len(members)
        base = sum(c.e_base_T.value for c in members) / len(members)
        assert agg.delta == pytest.approx(mean / base, rel=1e-12)


def test_folds_plan():
    doc = {**FR_SPEC, "split": {"folds": 3}, "seeds": [0]}
    report = execute(parse_run_spec(doc))
    stepwise = report.certificates[0]
    assert len(stepwise.details["fold_deltas"]) == 3
    assert stepwise.e_base_T.sample_size == 120


def test_failure_isolated():
    doc = {**FR_SPEC, "procedures": [{"kind": "stepwise_features", "m": 3},
                                     {"kind": "mmd_greedy", "m": 500},
                                     {"kind": "identity"}]}
    report = execute(parse_run_spec(doc))
    assert {f["procedure"] for f in report.failures} == {"mmd_greedy(m=500)"}
    assert {c.procedure_id for c in report.aggregated} == {"stepwise_features(m=3,patience=0)", "identity"}


def test_parallel_matches_serial():
    spec = parse_run_spec(FR_SPEC)
    a, b = execute(spec, jobs=1), execute(spec, jobs=2)
    assert [c.to_json() for c in a.certificates] == [c.to_json() for c in b.certificates]


# ---------------------------------------------------------------- rendering


def _report(certs, metric="MAPE", robustness="Identity"):
    return Report("r", certs, certs, [], [], [], {}, 0.0, metric, "EDC", robustness)


def test_table_edc_row():
    e = lambda v: ErrorEstimate(v, 100, "mape_percent")  # noqa: E731
    c = certify(e(103.64), e(103.64), e(95.83), e(95.83), procedure_id="EDC selection",
                target_model_id="OLS")
    row = render_table(_report([c])).splitlines()[2]
    cells = [x.strip() for x in row.split("|")]
    assert cells[:7] == ["EDC selection", "OLS", "0.925", "0", "Identity", "EDC", "MAPE"]


def test_table_undefined_gamma():
    c = cert(0.5, UNDEFINED, "x")
    assert "undef" in render_table(_report([c])).splitlines()[2].split("|")[3]


def test_compare_examples():
    one = compare([cert(0.50, 0.9, "a"), cert(0.52, 1.0, "b")], alpha=0.05)
    assert one["classes"] == [("a", "b")]
    assert one["edges"] == [("a", "b")]
    with pytest.raises(ContextMismatchError):
        compare([cert(0.5, 0.9, "a"), cert(0.5, 0.9, "b", loss="squared_error")])


# ---------------------------------------------------------------- CLI


def test_cli_determinism(tmp_path, capsys):
    spec = _write(tmp_path, FR_SPEC)
    assert main(["evaluate", "--spec", str(spec), "--out", str(tmp_path / "a")]) == 0
    assert main(["evaluate", "--spec", str(spec), "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    summary_a = json.loads(a.pop("summary.json"))
    summary_b = json.loads(b.pop("summary.json"))
    assert a == b
    for s in (summary_a, summary_b):
        s["environment"].pop("created")
    assert summary_a == summary_b
    assert (tmp_path / "a" / "table.txt").read_text() == (tmp_path / "b" / "table.txt").read_text()


def test_cli_seed_override(tmp_path):
    spec = _write(tmp_path, FR_SPEC)
    main(["evaluate", "--spec", str(spec), "--out", str(tmp_path / "o"), "--seed", "7"])
    names = sorted(p.name for p in (tmp_path / "o" / "certificates").iterdir())
    assert names == ["Identity__seed7.json", "Stepwise__seed7.json"]


def test_cli_report_and_compare(tmp_path, capsys):
    spec = _write(tmp_path, FR_SPEC)
    main(["evaluate", "--spec", str(spec), "--out", str(tmp_path / "o")])
    table = (tmp_path / "o" / "table.txt").read_text()
    capsys.readouterr()
    assert main(["report", "--in", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out == table
    assert main(["compare", "--in", str(tmp_path / "o"), "--alpha", "0.05"]) == 0
    out = capsys.readouterr().out
    assert "Stepwise -> Identity" in out


def test_cli_spec_error_exit_2(tmp_path, capsys):
    doc = {**FR_SPEC, "dataset": {"kind": "csv", "path": "missing.csv", "target": "y"}}
    assert main(["evaluate", "--spec", str(_write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 2
    assert "dataset.path" in capsys.readouterr().err


def test_cli_partial_failure_exit_3(tmp_path):
    doc = {**FR_SPEC, "procedures": [{"kind": "identity"}, {"kind": "mmd_greedy", "m": 1000}]}
    assert main(["evaluate", "--spec", str(_write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 3
    assert "FAILED mmd_greedy(m=1000)" in (tmp_path / "o" / "table.txt").read_text()


def test_cli_io_error_exit_4(tmp_path):
    assert main(["report", "--in", str(tmp_path / "absent")]) == 4


def test_cli_compare_mismatch_exit_2(tmp_path):
    a = cert(0.5, 0.9, "a")
    b = cert(0.5, 0.9, "b", loss="squared_error")
    for c in (a, b):
        (tmp_path / f"{c.procedure_id}.json").write_text(json.dumps(c.to_json()))
    assert main(["compare", "--in", str(tmp_path / "a.json"), "--in", str(tmp_path / "b.json")]) == 2


def test_bundled_specs_parse():
    for p in SPECS.glob("*.json"):
        parse_run_spec(json.loads(p.read_text()), SPECS)
