import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from finslerlab.cli import main
from finslerlab.report import SCHEMA, SCHEMA_VERSION, payload_bytes


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# --- report -------------------------------------------------------------------------------

def test_report_funk(capsys):
    code, out, _ = run(["report", "--metric", "funk", "--dim", "2", "--samples", "10", "--seed", "7"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == SCHEMA and doc["schema_version"] == SCHEMA_VERSION
    assert doc["command"] == "report" and doc["status"] == {"passed": True, "exit_code": 0}
    blocks = doc["payload"]["samples"]
    assert len(blocks) == 10
    for b in blocks:
        for key in ("x", "y", "F", "g", "C", "I", "G", "G^i_j", "Gamma", "R^i_k", "Ric_ij", "tau", "S", "E",
                    "H", "L", "J", "flag_curvature"):
            assert key in b
        assert np.max(np.abs(np.array(b["flag_curvature"]) + 0.25)) <= 1e-5


def test_report_euclidean_non_riemannian_blocks_zero(capsys):
    code, out, _ = run(["report", "--metric", "euclidean", "--dim", "2", "--samples", "3"], capsys)
    assert code == 0
    for b in json.loads(out)["payload"]["samples"]:
        for key in ("C", "A", "I", "S", "E", "H", "L", "J", "tau"):
            assert np.max(np.abs(np.array(b[key], dtype=float))) <= 1e-10, key


def test_report_missing_dim_is_config_error(capsys):
    code, _, err = run(["report", "--metric", "funk"], capsys)
    assert code == 2
    assert "--dim" in err and "usage:" in err


def test_report_to_file(tmp_path, capsys):
    path = tmp_path / "r.json"
    code, out, _ = run(["report", "--metric", "randers", "--dim", "3", "--samples", "2", "--out", str(path)], capsys)
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["payload"]["dim"] == 3


def test_custom_metric_expression(capsys):
    code, out, _ = run(["report", "--metric-expr", "sqrt(y1^2 + y2^2) + 0.2*y2", "--dim", "2", "--samples", "2"],
                       capsys)
    assert code == 0
    assert json.loads(out)["payload"]["metric"] == "custom"
    code, _, err = run(["report", "--metric-expr", "sqrt(y1^2 +", "--dim", "2"], capsys)
    assert code == 2 and "config error" in err


# --- verify -------------------------------------------------------------------------------

def test_verify_lemma31_c_family(capsys):
    code, out, _ = run(["verify", "--suite", "lemma31", "--metric", "euclidean", "--dim", "2",
                        "--field", "c-projective"], capsys)
    assert code == 0
    items = [line.split()[2] for line in out.splitlines() if line.startswith("    ") and ": item" in line]
    assert {f"item{k}" for k in range(1, 10)} <= set(items)
    assert "BAD" not in out


def test_verify_core_quartic(capsys):
    code, out, _ = run(["verify", "--suite", "core-identities", "--metric", "quartic_minkowski", "--dim", "2"],
                       capsys)
    assert code == 0 and "[PASS] core-identities" in out


def test_verify_failure_exit_and_worst_sample(capsys):
    code, out, _ = run(["verify", "--suite", "core-identities", "--metric", "funk", "--dim", "2",
                        "--tol-jet", "1e-300", "--tol-flow", "1e-300", "--tol-quadrature", "1e-300"], capsys)
    assert code == 1
    assert "[FAIL]" in out and "worst sample: x =" in out


def test_verify_custom_field_and_json(tmp_path, capsys):
    path = tmp_path / "v.json"
    code, _, _ = run(["verify", "--suite", "lemma31", "--metric", "euclidean", "--dim", "2",
                      "--field", "spin=-x2;x1", "--out", str(path)], capsys)
    assert code == 0
    doc = json.loads(path.read_text())
    names = [i["name"] for i in doc["payload"]["suites"][0]["items"]]
    assert names and all(n.startswith("spin:") for n in names)


def test_verify_is_deterministic(capsys):
    argv = ["verify", "--suite", "nonriemannian", "--metric", "funk", "--dim", "2", "--seed", "3", "--out", "-"]
    code1, out1, _ = run(argv, capsys)
    code2, out2, _ = run(argv, capsys)
    assert code1 == code2 == 0
    assert payload_bytes(json.loads(out1)) == payload_bytes(json.loads(out2))


# --- classify -----------------------------------------------------------------------------

def _rows(out):
    rows = {}
    for line in out.splitlines()[1:]:
        parts = line.split()
        if len(parts) == 9:
            rows[parts[1]] = parts[2:]
    return rows


def test_classify_examples(capsys):
    code, out, _ = run(["classify", "--metric", "euclidean", "--dim", "2", "--field", "rotation",
                        "--field", "c-projective"], capsys)
    assert code == 0
    rows = _rows(out)
    assert rows["rotation"] == ["Y"] * 7
    proj, aff, _, _, e_inv, _, _ = rows["c-projective"]
    assert (proj, aff, e_inv) == ("Y", "N", "Y")
    code, out, _ = run(["classify", "--metric", "funk", "--dim", "2", "--field", "cubic"], capsys)
    assert code == 0 and _rows(out)["cubic"] == ["N"] * 7


def test_classify_insufficient_samples(capsys):
    code, _, err = run(["classify", "--metric", "funk", "--dim", "2", "--samples", "5"], capsys)
    assert code == 2 and "at least 20" in err


# --- geodesic -----------------------------------------------------------------------------

def test_geodesic_funk_probe_csv(tmp_path, capsys):
    path = tmp_path / "g.csv"
    code, out, _ = run(["geodesic", "--metric", "funk", "--dim", "2", "--x0", "0.1,-0.2", "--y0", "0.5,0.3",
                        "--steps", "100", "--csv", str(path)], capsys)
    assert code == 0 and "flag_curvature mean" in out
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 101
    K = np.array([float(r["flag_curvature"]) for r in rows])
    assert np.max(np.abs(K + 0.25)) <= 1e-5


def test_geodesic_euclidean_line_to_stdout(capsys):
    code, out, err = run(["geodesic", "--metric", "euclidean", "--dim", "2", "--y0", "1,2", "--T", "1",
                          "--steps", "10", "--probe", "none"], capsys)
    assert code == 0 and "F drift" in err
    rows = list(csv.reader(out.splitlines()))
    assert rows[0] == ["t", "x1", "x2", "y1", "y2", "F"]
    assert [float(v) for v in rows[-1][:3]] == pytest.approx([1.0, 1.0, 2.0], abs=1e-14)


def test_geodesic_leaving_funk_domain(capsys):
    code, _, err = run(["geodesic", "--metric", "funk", "--dim", "2", "--y0", "1,0", "--T", "-1"], capsys)
    assert code == 3
    t = float(err.strip().rsplit("=", 1)[1])
    assert t == pytest.approx(-np.log(2), abs=1e-6)


def test_geodesic_bad_vector_length(capsys):
    code, _, _ = run(["geodesic", "--metric", "funk", "--dim", "2", "--x0", "0,0,0"], capsys)
    assert code == 2


# --- catalog and config -------------------------------------------------------------------

def test_catalog_listing(capsys):
    code, out, _ = run(["catalog"], capsys)
    assert code == 0
    for label in ("euclidean", "sphere_chart", "randers", "randers_poly", "funk", "quartic_minkowski",
                  "rotation", "c-projective"):
        assert label in out


def test_config_file_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nmetric = funk\ndim = 2\nsamples = 4\nseed = 5\n\n[tolerances]\njet = 1e-8\n")
    code, out, _ = run(["report", "--config", str(cfg)], capsys)
    doc = json.loads(out)
    assert code == 0 and len(doc["payload"]["samples"]) == 4 and doc["config"]["seed"] == 5
    code, out, _ = run(["report", "--config", str(cfg), "--samples", "2", "--metric", "euclidean"], capsys)
    doc = json.loads(out)
    assert len(doc["payload"]["samples"]) == 2 and doc["payload"]["metric"] == "euclidean"


@pytest.mark.parametrize("text", ["[run]\ndim = two\n", "[bogus]\nx = 1\n", "[run]\ncolour = red\n",
                                  "[tolerances]\njet = 1e-3\nflow = 1e-5\n"])
def test_bad_config_files(tmp_path, capsys, text):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text + ("[run]\nmetric = funk\ndim = 2\n" if text.startswith("[tol") else ""))
    code, _, err = run(["report", "--config", str(cfg)], capsys)
    assert code == 2 and "config error" in err


def test_unknown_suite_and_metric(capsys):
    assert run(["verify", "--suite", "everything", "--metric", "funk", "--dim", "2"], capsys)[0] == 2
    assert run(["report", "--metric", "hilbert", "--dim", "2"], capsys)[0] == 2
    assert run(["report", "--metric", "funk", "--dim", "9"], capsys)[0] == 2


@pytest.mark.skipif(shutil.which("finslerlab") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["finslerlab", "catalog", "--dim", "3"], capture_output=True, text=True, timeout=120)
    assert res.returncode == 0 and "funk" in res.stdout
