import csv
import json
import warnings

import numpy as np
import pytest

from conftest import sphere
from lamehardy import harness
from lamehardy.boundary import LipschitzJet
from lamehardy.cli import main
from lamehardy.errors import ConfigError, DomainError
from lamehardy.poly import make_test_solution, random_poly


def test_fit_exponent_recovers_a_clean_power():
    r = np.logspace(-3, -1, 40)
    fit = harness.fit_exponent(np.column_stack([r, r ** 2]))
    assert fit.slope == pytest.approx(2.0, abs=0.01)
    assert fit.r2 > 0.999 and fit.count == 40


def test_fit_exponent_tolerates_noise():
    rng = np.random.default_rng(0)
    r = np.logspace(-3, 0, 200)
    e = r ** 1.5 * np.exp(0.2 * rng.standard_normal(r.size))
    assert harness.fit_exponent(np.column_stack([r, e])).slope == pytest.approx(1.5, abs=0.1)


def test_fit_exponent_flags_constant_residuals():
    r = np.logspace(-2, 0, 30)
    with pytest.warns(RuntimeWarning):
        fit = harness.fit_exponent(np.column_stack([r, np.full_like(r, 0.3)]))
    assert fit.slope == 0.0 and fit.warning


def test_fit_exponent_input_checks():
    r = np.linspace(0.1, 0.5, 30)
    with pytest.raises(DomainError):
        harness.fit_exponent(np.column_stack([r, r]))
    with pytest.raises(DomainError):
        harness.fit_exponent(np.column_stack([r[:5], r[:5]]))
    with pytest.raises(DomainError):
        harness.fit_exponent(np.column_stack([r, np.zeros_like(r)]))


@pytest.mark.parametrize("kw", [dict(m=0), dict(m=7), dict(level=-1), dict(alpha=0.0), dict(alpha=1.5),
                                dict(mu=-1.0), dict(mu=1.0, lam=-1.0)])
def test_run_config_rejects_bad_values(kw):
    with pytest.raises(ConfigError):
        harness.RunConfig(**kw)


def test_surface_suites_check_dimension_and_level():
    with pytest.raises(ConfigError):
        harness.run_suite(harness.RunConfig(m=5, level=1), "cauchy")
    with pytest.raises(ConfigError):
        harness.run_suite(harness.RunConfig(m=3, level=6), "involution")
    with pytest.raises(ConfigError):
        harness.run_suite(harness.RunConfig(), "nope")


def test_oracle_agrees_with_tables():
    for m in range(1, 7):
        assert harness.blade_mismatches(m) == 0


def test_reports_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        assert main(["verify", "--suite", "kernels", "--level", "2", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    rep = json.loads(outs[0])
    assert rep["pass"] is True and "timings" not in rep


def test_timings_flag_adds_timings(tmp_path):
    path = tmp_path / "r.json"
    assert main(["verify", "--suite", "algebra", "--timings", "--out", str(path)]) == 0
    assert "timings" in json.loads(path.read_text())


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    assert main(["verify", "--suite", "algebra", "--out", str(tmp_path / "a.json")]) == 0
    assert main(["verify", "--suite", "algebra", "--mu", "-1"]) == 2
    assert main(["verify", "--suite", "cauchy", "--level", "9"]) == 2
    assert main(["converge", "--suite", "cauchy", "--levels", "2,x"]) == 2

    def failing(cfg, rep):
        rep.add("always_fails", 1.0, 0.5)

    monkeypatch.setitem(harness._RUNNERS, "algebra", failing)
    assert main(["verify", "--suite", "algebra", "--out", str(tmp_path / "b.json")]) == 1
    assert "FAIL" in capsys.readouterr().out
    with pytest.raises(SystemExit) as info:
        main(["verify", "--suite", "unknown"])
    assert info.value.code == 2


def test_converge_writes_csv(tmp_path):
    path = tmp_path / "conv.csv"
    code = main(["converge", "--suite", "cauchy", "--levels", "1,2,3", "--csv", str(path),
                 "--out", str(tmp_path / "conv.json")])
    assert code == 0
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["level"]) for r in rows] == [1, 2, 3]
    res = [float(r["max_residual"]) for r in rows]
    assert res[0] > res[1] > res[2]


def test_converge_rejects_bad_levels():
    with pytest.raises(ConfigError):
        harness.converge(harness.RunConfig(), "cauchy", [3, 2])
    with pytest.raises(ConfigError):
        harness.converge(harness.RunConfig(), "cauchy", [2])
    with pytest.raises(ConfigError):
        harness.converge(harness.RunConfig(), "holder", [1, 2])


def _write(tmp_path, name, fld, level=2):
    path = tmp_path / name
    harness.save_jet(path, LipschitzJet.from_field(fld, sphere(level)))
    return path


def test_decompose_round_trip(tmp_path):
    src = _write(tmp_path, "const.json", make_test_solution("constant", 3))
    prefix = str(tmp_path / "parts")
    assert main(["decompose", "--jet", str(src), "--out-prefix", prefix, "--level", "2"]) == 0
    plus = harness.load_jet(prefix + "_plus.json")
    minus = harness.load_jet(prefix + "_minus.json")
    jet = harness.load_jet(src)
    assert (plus + minus - jet).norm() < 1e-12 * jet.norm()
    rep = json.loads(open(prefix + "_report.json").read())
    assert rep["info"]["minus_norm_fraction"] < 5e-2


def test_decompose_mesh_mismatch_is_a_config_error(tmp_path):
    src = _write(tmp_path, "jet.json", make_test_solution("coordinate", 3))
    assert main(["decompose", "--jet", str(src), "--out-prefix", str(tmp_path / "p"), "--level", "3"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["decompose", "--jet", str(bad), "--out-prefix", str(tmp_path / "q"), "--level", "2"]) == 2


def test_decomposition_is_linear(tmp_path):
    cfg = harness.RunConfig(level=2)
    f, g = random_poly(3, 2, 1), random_poly(3, 2, 2)
    parts = {}
    for name, fld in (("f", f), ("g", g), ("fg", f + g.scale(2))):
        path = _write(tmp_path, f"{name}.json", fld)
        _, plus, minus = harness.decompose(cfg, path, str(tmp_path / name))
        parts[name] = (plus, minus)
    for k in range(2):
        combo = parts["f"][k] + parts["g"][k].scale(2)
        assert (combo - parts["fg"][k]).norm() < 1e-10 * combo.norm()


def test_summary_lines_and_clean_rounding():
    rep = harness.SuiteReport("demo", {})
    rep.add("a", 0.123456789012345, 1.0)
    rep.add("b", float("nan"), 1.0)
    lines = list(rep.summary_lines())
    assert lines[0].startswith("PASS") and lines[1].startswith("FAIL")
    obj = rep.to_json()
    assert obj["checks"][0]["residual"] == 0.123456789
    assert obj["checks"][1]["residual"] == "nan"
    assert not rep.passed
