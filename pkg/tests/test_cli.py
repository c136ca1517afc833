import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from holinear.cli import clean, parse_builtin, parse_sweep, run
from holinear.errors import ParseError


def report(out):
    return json.loads((out / "report.json").read_text())


def test_parse_helpers():
    assert parse_builtin("hartman:4,3,0.5,1") == ("hartman", [4.0, 3.0, 0.5, 1.0])
    assert parse_builtin("sternberg") == ("sternberg", [])
    with pytest.raises(ParseError):
        parse_builtin("hartman:4,x")
    name, lam = parse_sweep("lambda:0:0.1:21")
    assert name == "lambda" and len(lam) == 21 and lam[-1] == pytest.approx(0.1)
    with pytest.raises(ParseError):
        parse_sweep("lambda:0:0.1")


def test_clean_non_finite():
    assert clean({"a": np.float64(np.inf), "b": np.arange(2), "c": np.nan}) == {"a": "inf", "b": [0, 1], "c": "nan"}


def test_classify_resonant_hartman(tmp_path):
    code = run(["classify", "--builtin", "hartman:4,2,0.5,1", "--out", str(tmp_path)])
    assert code == 0
    rep = report(tmp_path)
    assert rep["schema_version"] == 1
    cls = rep["result"]["classification"]
    assert cls["alpha_hyperbolic"] is False
    assert len(rep["input_digest"]) == 64
    assert (tmp_path / "timings.json").exists()


def test_classify_non_hyperbolic_exit(tmp_path):
    doc = {"dim": 2, "L": [[1.0, 0.0], [0.0, 0.5]], "terms": []}
    path = tmp_path / "map.json"
    path.write_text(json.dumps(doc))
    assert run(["classify", "--input", str(path), "--out", str(tmp_path)]) == 3
    assert report(tmp_path)["error"]["type"] == "NonHyperbolic"


def test_bad_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"dim": 2,\n  "L": [1, }')
    assert run(["classify", "--input", str(path), "--out", str(tmp_path)]) == 2
    err = report(tmp_path)["error"]
    assert err["type"] == "ParseError"
    assert err["diagnostic"]["line"] == 2


def test_bad_arguments_exit_2(tmp_path):
    assert run(["linearize", "--builtin", "hartman:4,3,0.5,1", "--alpha", "-1", "--out", str(tmp_path)]) == 2
    assert run(["linearize", "--out", str(tmp_path)]) == 2
    assert run(["linearize", "--builtin", "nosuch:1", "--out", str(tmp_path)]) == 2


def test_linearize_hartman_files_round_trip(tmp_path):
    code = run(["linearize", "--builtin", "hartman:4,3,0.5,1", "--samples", "500", "--out", str(tmp_path)])
    assert code == 0
    rep = report(tmp_path)
    ver = rep["result"]["verification"]
    assert ver["residual_sup"] <= 1e-8
    with open(tmp_path / "conjugacy_samples.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "x3", "R1", "R2", "R3", "residual"]
    data = np.array(rows[1:], dtype=float)
    assert len(data) == ver["residual_samples"]
    assert data[:, 6].max() == ver["residual_sup"]
    # the written R values reproduce when the map is linearized again in-process
    from holinear.maps import builtin
    from holinear.pipeline import linearize_map

    res = linearize_map(builtin("hartman", [4, 3, 0.5, 1]), 0.5, n_samples=500, certificate=False)
    assert_allclose(res.R(data[:50, :3]), data[:50, 3:6], rtol=0, atol=1e-12)
    with open(tmp_path / "derivative_pairs.csv") as fh:
        head = next(csv.reader(fh))
    assert head[:2] == ["pair", "member"] and len(head) == 2 + 3 + 9


def test_linearize_resonant_exit_5(tmp_path):
    code = run(["linearize", "--builtin", "hartman:4,2,0.5,1", "--samples", "200", "--out", str(tmp_path)])
    assert code == 5
    err = report(tmp_path)["error"]
    assert err["type"] == "SeriesDiverged"
    assert err["diagnostic"]["term_ratio"] >= 0.999


def test_linearize_json_with_fixed_point(tmp_path):
    # T(x) = 0.5 x + 0.1 x^2 + c with its fixed point p passed in the document
    p = 0.2
    c = p - 0.5 * p - 0.1 * p * p
    doc = {"dim": 1, "L": [[0.5]], "terms": [[0.1, [2], 0], [c, [0], 0]], "fixed_point": [p], "delta": 0.2}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    assert run(["linearize", "--input", str(path), "--samples", "300", "--out", str(tmp_path)]) == 0
    res = report(tmp_path)["result"]
    assert res["route"] == "contracting"
    (re, im), = res["classification"]["eigenvalues"]
    assert re == pytest.approx(0.5 + 0.2 * p) and im == 0.0


def test_flow_builtin(tmp_path):
    code = run(["flow", "--builtin", "saddle_focus", "--out", str(tmp_path)])
    assert code == 0
    body = report(tmp_path)["result"]
    assert body["shilnikov"]["holds"] is True
    assert body["time_one"]["exp_error"] <= 1e-6


def test_flow_linearize_linear_saddle(tmp_path):
    code = run(["flow", "--builtin", "linear_saddle", "--linearize", "--samples", "300", "--out", str(tmp_path)])
    assert code == 0
    assert report(tmp_path)["result"]["linearization"]["verification"]["residual_sup"] <= 1e-12


def test_sweep_quadratic(tmp_path):
    code = run(["sweep", "--builtin", "quadratic", "--sweep", "lambda:0:0.02:5", "--samples", "64",
                "--out", str(tmp_path)])
    assert code == 0
    body = report(tmp_path)["result"]
    assert body["refinement_ratio"] == pytest.approx(0.5, abs=0.05)
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    lam = np.array([float(r["lambda"]) for r in rows])
    p = np.array([float(r["p1"]) for r in rows])
    assert_allclose(p, (0.5 - np.sqrt(0.25 - 0.4 * lam)) / 0.2, atol=1e-12)


def test_sweep_needs_spec(tmp_path):
    assert run(["sweep", "--builtin", "quadratic", "--out", str(tmp_path)]) == 2


def test_examples_only_and_unknown(tmp_path, capsys):
    assert run(["examples", "--only", "contracting-1d", "--out", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out
    items = report(tmp_path)["result"]["items"]
    assert list(items) == ["contracting-1d"]
    assert run(["examples", "--only", "nope", "--out", str(tmp_path / "x")]) == 2


def test_examples_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["examples", "--only", "hartman-nonresonant", "--out", str(d)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
