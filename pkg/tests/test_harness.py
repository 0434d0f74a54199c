import csv
import io
import json

import numpy as np
import pytest

from gaussimage import harness as H
from gaussimage import pipeline as PL
from gaussimage.cli import main

SPHERE = {
    "name": "custom_sphere",
    "ambient": {"kind": "euclidean", "k": 0, "dim": 3},
    "n": 2,
    "coords": ["sin(u1)*cos(u2)", "sin(u1)*sin(u2)", "cos(u1)"],
    "domain": [[0, "pi"], [0, "2*pi"]],
    "samples": {"grid": 2},
}


def write(tmp_path, data, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_builtin_clifford():
    sc = H.load_scenario("clifford_torus")
    assert sc.model.kind == "sphere" and sc.model.k == 1.0
    assert sc.n == 2 and sc.model.chart_dim == 4


def test_catalog():
    entries = H.list_builtins()
    assert len(entries) >= 10
    assert sum(e["expect_failure"] is not None for e in entries) >= 3
    required = {
        "round_sphere_r2", "sphere_in_s3", "clifford_torus", "torus_of_revolution", "product_torus_r4",
        "helix", "equidistant_surface_h3", "cylinder", "complex_curve_r4", "degenerate_map",
    }
    assert required <= {e["name"] for e in entries}
    for e in entries:
        assert e["ambient"] in ("euclidean", "sphere", "hyperbolic") and e["n"] >= 1 and e["m"] >= 1
        assert H.load_scenario(e["name"]).name == e["name"]


def test_dimension_error(tmp_path):
    data = dict(SPHERE, ambient={"kind": "euclidean", "dim": 4})
    with pytest.raises(H.ScenarioError, match="dimension error"):
        H.load_scenario(write(tmp_path, data))


def test_expression_validation_error(tmp_path):
    data = dict(SPHERE, coords=["sin(u3)", "0", "1"])
    with pytest.raises(H.ScenarioError, match=r"coords\.0.*u3"):
        H.load_scenario(write(tmp_path, data))


def test_parse_error_carries_offset(tmp_path):
    data = dict(SPHERE, coords=["sin(u1) +", "0", "1"])
    with pytest.raises(H.ScenarioError, match="byte 9"):
        H.load_scenario(write(tmp_path, data))


def test_schema_errors_name_field_paths(tmp_path):
    data = dict(SPHERE, ambient={"kind": "torus", "dim": 3})
    with pytest.raises(H.ScenarioError, match=r"ambient\.kind"):
        H.load_scenario(write(tmp_path, data))
    data = {k: v for k, v in SPHERE.items() if k != "coords"}
    with pytest.raises(H.ScenarioError, match="coords"):
        H.load_scenario(write(tmp_path, data))
    data = dict(SPHERE, tolerances={"no_such_check": 1.0})
    with pytest.raises(H.ScenarioError, match="no_such_check"):
        H.load_scenario(write(tmp_path, data))


def test_points_outside_domain_rejected(tmp_path):
    data = dict(SPHERE, samples={"points": [[4.0, 0.1]]})
    with pytest.raises(H.ScenarioError, match="outside"):
        H.load_scenario(write(tmp_path, data))


def test_default_grid_is_shrunk():
    sc = H.load_scenario("torus_of_revolution")
    pts = sc.sample_points()
    assert pts.shape == (25, 2)
    assert pts[:, 1].min() == pytest.approx(-2.8 + 0.05 * 5.6)
    assert pts[:, 0].max() == pytest.approx(2 * np.pi * 0.95)


def test_explicit_points_appended():
    pts = H.load_scenario("round_sphere_r2").sample_points()
    assert pts.shape == (26, 2)
    np.testing.assert_allclose(pts[-1], [np.pi / 3, np.pi / 4])


def test_custom_scenario_runs(tmp_path):
    sc = H.load_scenario(write(tmp_path, SPHERE))
    report = H.run_checks(sc)
    assert report.passed
    assert [c.name for c in report.points[0].checks] == list(PL.CHECK_NAMES)


def test_tolerance_override_and_scale(tmp_path):
    data = dict(SPHERE, tolerances={"codazzi": 1e-3})
    sc = H.load_scenario(write(tmp_path, data))
    rep = H.run_checks(sc, tol_scale=10.0)
    rec = rep.points[0].check("codazzi")
    assert rec.tolerance == pytest.approx(1e-2)
    assert rep.points[0].check("w_regularity").tolerance == 1.0


@pytest.mark.parametrize("name", ["cylinder", "complex_curve_r4", "degenerate_map"])
def test_negative_fixtures_pass_as_negatives(name):
    rep = H.run_checks(H.load_scenario(name))
    assert rep.passed
    summary = rep.summary()["expected_failure"]
    assert summary["fired_at"] == len(rep.points)
    assert summary["other_first_failures"] == []


def test_unexpected_failure_fails_scenario(tmp_path):
    data = {
        "name": "cyl_without_tag",
        "ambient": {"kind": "euclidean", "dim": 3},
        "n": 2,
        "coords": ["cos(u1)", "sin(u1)", "u2"],
        "domain": [[0, 1], [0, 1]],
        "samples": {"grid": 2},
    }
    rep = H.run_checks(H.load_scenario(write(tmp_path, data)))
    assert not rep.passed
    data["expect_failure"] = "normal-not-flat"  # wrong tag: a different check fires
    rep = H.run_checks(H.load_scenario(write(tmp_path, data)))
    assert not rep.passed


def test_report_determinism_and_threads():
    sc = H.load_scenario("ellipse_product_r4")

    def body(rep):
        d = rep.to_json()
        d.pop("metadata")
        return json.dumps(d, indent=2)

    a = body(H.run_checks(sc, seed=3, threads=1))
    b = body(H.run_checks(sc, seed=3, threads=1))
    c = body(H.run_checks(sc, seed=3, threads=4))
    assert a == b == c
    assert json.loads(a)["schema_version"] == H.SCHEMA_VERSION


def test_report_is_strict_json():
    rep = H.run_checks(H.load_scenario("cylinder"))
    text = rep.dumps()
    assert "NaN" not in text and "Infinity" not in text
    data = json.loads(text)
    assert data["points"][0]["checks"][6]["residual"] == "inf"


def test_sweep_sphere():
    sc = H.load_scenario("round_sphere_r2")
    text = H.sweep(sc, (3, 4), ["scalar_III", "w_min"])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 12
    assert list(rows[0]) == ["u1", "u2", "scalar_III", "w_min", "flag"]
    for r in rows:
        assert float(r["scalar_III"]) == pytest.approx(2.0, abs=1e-8)
        assert r["flag"] == "ok"


def test_sweep_flags_irregular_points():
    text = H.sweep(H.load_scenario("cylinder"), (2, 2), ["scalar_III"])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert all(r["flag"] == "w_regularity" and r["scalar_III"] == "nan" for r in rows)


def test_sweep_rejects_unknown_quantity():
    with pytest.raises(H.ScenarioError, match="unknown quantity"):
        H.sweep(H.load_scenario("round_sphere_r2"), (2, 2), ["bogus"])
    with pytest.raises(H.ScenarioError):
        H.parse_grid("1x4", 2)


def test_eval_tensor():
    sc = H.load_scenario("round_sphere_r2")
    out = H.eval_tensor(sc, H.parse_point("pi/3,pi/4", 2), "III")
    np.testing.assert_allclose(out["values"], [[1.0, 0.0], [0.0, 0.75]], atol=1e-14)
    out = H.eval_tensor(sc, [1.0, 0.5], "scalar")
    assert out["value"] == pytest.approx(2.0)


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["check", "clifford_torus", "--json", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["passed"] is True
    assert main(["check", "cylinder"]) == 0
    assert main(["check", "no_such_scenario"]) == 2
    bad = dict(SPHERE, coords=["cos(u1)", "sin(u1)", "u2"], samples={"grid": 2})
    assert main(["check", str(write(tmp_path, bad))]) == 1
    assert main(["list"]) == 0
    assert "clifford_torus" in capsys.readouterr().out
    with pytest.raises(SystemExit) as exc:
        main(["check"])
    assert exc.value.code == 2
    assert main(["eval", "helix", "--point", "0.5,0.5", "--tensor", "W"]) == 2


def test_cli_sweep_and_eval(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["sweep", "clifford_torus", "--grid", "2x3", "--quantities", "scalar_III,scalar_I", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 7
    assert main(["sweep", "clifford_torus", "--grid", "2x3", "--quantities", "nope", "--out", str(out)]) == 2
    capsys.readouterr()
    assert main(["eval", "round_sphere_r2", "--point", "pi/3,pi/4", "--tensor", "R3", "--literal-p"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["shape"] == [2, 2, 2, 2]
