import json
import subprocess
import sys

import numpy as np
import pytest

from cvp.cli import main
from cvp.jets import Jet, jet_to_csv
from cvp.kernels import builtin_kernel
from cvp.presets import default_measure


def _run(tmp_path, argv, name="out"):
    out = tmp_path / name
    code = main(argv + ["--out-dir", str(out)])
    return code, out


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_el_check(tmp_path, capsys):
    code, out = _run(tmp_path, ["el-check", "--kernel", "gauss1d", "--domain", "-8", "8", "--n", "512"])
    assert code == 0
    rep = _report(out)
    assert rep["max_abs"] < 1e-8
    lines = (out / "el_residual.csv").read_text().splitlines()
    assert lines[0] == "x,ell,abs_ell,interior" and len(lines) == 513
    assert json.loads(capsys.readouterr().out) == rep


def test_spectrum_with_oracle(tmp_path):
    code, out = _run(tmp_path, ["spectrum", "--periodic", "32", "--n", "256"])
    assert code == 0
    rep = _report(out)
    assert rep["oracle_max_rel_err"] < 1e-8
    assert abs(rep["lambda_max"] - 0.5) < 1e-10
    assert (out / "spectrum.csv").read_text().splitlines()[0] == "index,lambda,is_kernel,oracle"


def test_solve_missing_inhomogeneity(tmp_path, capsys):
    code, _ = _run(tmp_path, ["solve"])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and err["error"] == "ConfigError"
    code, _ = _run(tmp_path, ["solve", "--inhomogeneity", str(tmp_path / "nope.csv")])
    assert code == 2


@pytest.mark.parametrize("text", ["{not json", "[1, 2]", '{"bogus": 1}', '{"grid": {"domain": [1, 0], "n": 8}}',
                                  '{"kernel": {"kernel": "gauss1d", "params": {"s": -1}}}'])
def test_invalid_config(tmp_path, text):
    cfg = tmp_path / "c.json"
    cfg.write_text(text)
    code, _ = _run(tmp_path, ["weight", "--config", str(cfg)])
    assert code == 2


def test_missing_config_file(tmp_path):
    assert _run(tmp_path, ["weight", "--config", str(tmp_path / "none.json")])[0] == 2


def test_zero_inhomogeneity_is_numerical_failure(tmp_path):
    k = builtin_kernel("gauss1d")
    m = default_measure(k)
    p = tmp_path / "zero.csv"
    p.write_text(jet_to_csv(m, Jet.zeros(m.n, 1)))
    assert _run(tmp_path, ["solve", "--inhomogeneity", str(p)])[0] == 3


def test_resource_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("CVP_MAX_DOF", "64")
    assert _run(tmp_path, ["spectrum"])[0] == 4


def test_solve_csv_and_preset(tmp_path):
    k = builtin_kernel("hyperplane2d")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kernel": "hyperplane2d",
                               "inhomogeneity": {"preset": "gaussian", "width": 2.0, "components": ["vector"]}}))
    code, out = _run(tmp_path, ["solve", "--config", str(cfg)])
    assert code == 0
    rows = (out / "solution.csv").read_text().splitlines()
    assert rows[0] == "x,x1,scalar,vector0"
    vec = np.array([float(r.split(",")[3]) for r in rows[1:]])
    m = default_measure(k)
    x = m.line - 16.0
    assert np.max(np.abs(vec - 0.5 * np.exp(-x * x / 8))) < 1e-8


def test_sobolev(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sobolev": {"input": {"preset": "random", "seed": 3}, "orders": [0, 1, 2]}}))
    code, out = _run(tmp_path, ["sobolev", "--config", str(cfg)])
    assert code == 0
    n = _report(out)["norms"]
    assert n["0"] <= n["1"] <= n["2"]
    code, _ = _run(tmp_path, ["sobolev", "--input", str(tmp_path / "missing.csv")], "o2")
    assert code == 2


def test_oracle_and_example(tmp_path):
    code, out = _run(tmp_path, ["oracle", "--kernel", "inhomogeneous1d", "--param", "alpha=0.5"])
    assert code == 0
    rep = _report(out)
    assert rep["positivity"]["passed"] and rep["minimizer_identity"]["max_rel_err"] < 1e-6
    code, out = _run(tmp_path, ["example", "--example", "gauss1d"], "ex")
    assert code == 0 and _report(out)["all_passed"]
    assert _run(tmp_path, ["example", "--example", "nope"], "ex2")[0] == 2


def test_resolved_config_roundtrip(tmp_path):
    code, out = _run(tmp_path, ["weight", "--kernel", "nontrivial_weight2d", "--n", "201", "--seed", "5"])
    assert code == 0
    code2, out2 = _run(tmp_path, ["weight", "--config", str(out / "resolved_config.json")], "again")
    assert code2 == 0
    for name in ("resolved_config.json", "report.json", "weight.csv"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_dump_operator(tmp_path):
    dump = tmp_path / "dump"
    code, _ = _run(tmp_path, ["spectrum", "--periodic", "16", "--n", "64", "--dump-operator", str(dump)])
    assert code == 0
    A, H = np.load(dump / "A.npy"), np.load(dump / "H.npy")
    assert A.shape == H.shape == (64, 64)
    assert np.array_equal(A, A.T)
    csvdir = tmp_path / "dumpcsv"
    _run(tmp_path, ["spectrum", "--periodic", "16", "--n", "64", "--dump-operator", str(csvdir),
                    "--dump-format", "csv"], "o3")
    assert np.array_equal(np.loadtxt(csvdir / "A.csv", delimiter=",", skiprows=1), A)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "cvp", "weight", "--out-dir", str(tmp_path / "m")],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["task"] == "weight"
