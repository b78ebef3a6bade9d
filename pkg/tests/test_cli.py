import json
import subprocess
import sys

import numpy as np
import pytest

from simplexlab import __version__
from simplexlab.cli import main
from simplexlab.config import ConfigError, parse_config
from simplexlab.errors import ResolutionWarning

ESTIMATE_CFG = """
[experiment]
kind = estimate
seed = 7

[measure]
source = sierpinski
depth = 5

[mollify]
epsilon = 0.125
halfwidth = 2.5
points = 160

[shape]
type = equilateral

[estimate]
lambdas = 0.2, 0.3
n_samples = 20000
chunk = 4096
"""


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


def test_estimate_writes_contract_csv(tmp_path, capsys):
    cfg = tmp_path / "e.ini"
    cfg.write_text(ESTIMATE_CFG)
    code, _ = run(["run", cfg, "--out", tmp_path / "out"], capsys)
    assert code == 0
    rows = (tmp_path / "out" / "estimates.csv").read_text().splitlines()
    assert rows[0] == "lambda,epsilon,T,std_err,n_samples"
    assert len(rows) == 3
    lam, eps, t, se, n = rows[1].split(",")
    assert float(lam) == 0.2 and float(eps) == 0.125 and float(t) > 0 and float(se) > 0 and n == "20000"


def test_summary_echoes_config_and_version(tmp_path, capsys):
    cfg = tmp_path / "e.ini"
    cfg.write_text(ESTIMATE_CFG)
    assert run(["estimate", cfg, "--out", tmp_path / "o", "--seed", 11], capsys)[0] == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["version"] == __version__ and summary["kind"] == "estimate" and summary["seed"] == 11
    assert summary["config"]["mollify"]["epsilon"] == 0.125
    assert summary["config"]["estimate"]["lambdas"] == [0.2, 0.3]
    assert summary["config"]["experiment"]["out"] == str(tmp_path / "o")


def test_worker_count_does_not_change_outputs(tmp_path, capsys):
    cfg = tmp_path / "e.ini"
    cfg.write_text(ESTIMATE_CFG)
    for threads in (1, 4):
        assert run(["run", cfg, "--out", tmp_path / f"t{threads}", "--threads", threads], capsys)[0] == 0
    a = (tmp_path / "t1" / "estimates.csv").read_bytes()
    b = (tmp_path / "t4" / "estimates.csv").read_bytes()
    assert a == b


def test_negative_epsilon_exits_2_without_outputs(tmp_path, capsys):
    cfg = tmp_path / "e.ini"
    cfg.write_text(ESTIMATE_CFG.replace("epsilon = 0.125", "epsilon = -0.125"))
    code, out = run(["run", cfg, "--out", tmp_path / "bad"], capsys)
    assert code == 2 and "epsilon" in out.err
    assert not (tmp_path / "bad").exists()


def test_unknown_key_and_section_exit_2(tmp_path, capsys):
    assert run(["estimate", "--set", "mollify.epsilonn=0.1", "--out", tmp_path / "x"], capsys)[0] == 2
    cfg = tmp_path / "u.ini"
    cfg.write_text("[nonsense]\na = 1\n")
    assert run(["run", cfg, "--out", tmp_path / "x"], capsys)[0] == 2
    assert run(["search", "--set", "oops", "--out", tmp_path / "x"], capsys)[0] == 2
    assert not (tmp_path / "x").exists()


def test_omega_verify_reports_agreement(tmp_path, capsys):
    code, out = run(["omega-verify", "--out", tmp_path / "o"], capsys)
    assert code == 0
    assert "weight formula agreement" in out.out
    gap = float(out.out.split("relative gap ")[1].split()[0])
    assert gap <= 1e-4
    assert (tmp_path / "o" / "omega.csv").exists()


def test_omega_verify_failure_exits_3(tmp_path, capsys):
    code, out = run(["omega-verify", "--set", "omega.centers=0,0,0,0,0;1,0,0,0,0", "--set", "omega.sq_radii=1,1",
                     "--set", "omega.level=1", "--out", tmp_path / "o"], capsys)
    assert code == 3 and "invariant violated" in out.err
    assert not (tmp_path / "o").exists()


def test_gen_measure_and_search_roundtrip(tmp_path, capsys):
    assert run(["gen-measure", "--set", "measure.depth=3", "--out", tmp_path / "m"], capsys)[0] == 0
    pts = np.loadtxt(tmp_path / "m" / "measure.csv", delimiter=",", skiprows=1, ndmin=2)
    assert len(pts) == 27
    with pytest.warns(ResolutionWarning):
        code, out = run(["search", "--set", f"search.cloud={tmp_path / 'm' / 'measure.csv'}",
                         "--set", "shape.type=simplex", "--set", "shape.vertices=0,0;1,0;0,1",
                         "--set", "search.lam_min=0.2", "--set", "search.lam_max=0.3",
                         "--set", "search.tolerance=1e-9", "--out", tmp_path / "s"], capsys)
    assert code == 0
    rows = (tmp_path / "s" / "matches.csv").read_text().splitlines()
    assert rows[0].startswith("lambda,residual,y0_0")
    assert len(rows) > 1 and f"{len(rows) - 1} matches" in out.out
    assert all(float(r.split(",")[1]) <= 1e-9 for r in rows[1:])


def test_spectral_and_plots(tmp_path, capsys):
    code, out = run(["spectral", "--set", "measure.depth=3", "--set", "spectral.xi_norms=1,2,4,8",
                     "--set", "spectral.n_chains=5000", "--set", "shape.ambient_dim=3", "--set", "experiment.plot=yes",
                     "--out", tmp_path / "sp"], capsys)
    assert code == 0 and "relative gap" in out.out
    assert (tmp_path / "sp" / "spectrum.csv").read_text().startswith("xi0,xi1,re,im,abs2")
    assert (tmp_path / "sp" / "i_lambda.svg").read_text().startswith("<svg")


def test_parse_config_types_and_ranges():
    cfg = parse_config("[shape]\nvertices = 0,0; 1,0; 0,1\nedges = 0-1; 1-2\n", kind="search")
    assert cfg["shape.vertices"] == [[0, 0], [1, 0], [0, 1]] and cfg["shape.edges"] == [(0, 1), (1, 2)]
    assert cfg["shape.eta"] == float("inf")
    with pytest.raises(ConfigError):
        parse_config("[search]\nlam_min = 0.5\nlam_max = 0.2\n", kind="search")
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nkind = estimate\n", kind="search")
    with pytest.raises(ConfigError):
        parse_config("", kind="bogus")


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "simplexlab.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
