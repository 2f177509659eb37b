import functools
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from evoctrl import cli
from evoctrl.checks import check_suite
from evoctrl.experiments import (ConfigError, ExperimentConfig, build_problem, choose_solver,
                                 default_config, load_config, parse_pairs, run_experiment)
from evoctrl.timegrid import IntervalTrajectory, NodeTrajectory, TimeGrid, read_csv

ROOT = Path(__file__).resolve().parents[1]


def write_cfg(path, text):
    path.write_text(text)
    return str(path)


def small_heat(tmp_path, name="heat", extra=""):
    out = tmp_path / name
    return write_cfg(tmp_path / f"{name}.cfg",
                     f"experiment = heat  # comment\nn = 8\nN = 20\nout = {out}\n{extra}"), out


# ----------------------------------------------------------------- config


def test_parse_pairs():
    assert parse_pairs(["# only a comment", "", "a = 1 # trailing", "b=x=y"]) == {"a": "1",
                                                                                 "b": "x=y"}
    with pytest.raises(ConfigError, match="duplicate"):
        parse_pairs(["a = 1", "a = 2"])
    with pytest.raises(ConfigError, match="key = value"):
        parse_pairs(["nonsense"])


def test_shipped_configs_load():
    for name in ("heat", "heat5", "wave"):
        cfg = load_config(ROOT / "configs" / f"{name}.cfg")
        assert cfg.experiment == name
    wave = load_config(ROOT / "configs" / "wave.cfg")
    assert (wave.n, wave.N, wave.T, wave.box_lo, wave.box_hi) == (8, 100, 5.0, -1.0, 1.0)
    assert load_config(ROOT / "configs" / "heat5.cfg").c0 == 5.0


def test_defaults_and_overrides(tmp_path):
    cfg = load_config(write_cfg(tmp_path / "c.cfg", "experiment = heat\n"),
                      ["alpha=0.5", "box_lo = -2", "box_hi=2", "svg = yes"])
    assert (cfg.alpha, cfg.box_lo, cfg.box_hi, cfg.svg) == (0.5, -2.0, 2.0, True)
    assert (cfg.n, cfg.N, cfg.T, cfg.b1, cfg.c0) == (64, 200, 2.0, -1.0, 1.0)
    assert choose_solver(cfg, build_problem(default_config("heat", n=4, N=4))) == "cg"


@pytest.mark.parametrize("text", [
    "experiment = heat\nbogus = 1\n",
    "experiment = nope\n",
    "experiment = heat\nn = two\n",
    "experiment = heat\nscheme = rk4\n",
    "experiment = heat\nbox_lo = 1\n",
    "experiment = heat\nbox_lo = 1\nbox_hi = 0\n",
    "experiment = heat\nalpha = -1\n",
    "experiment = custom\n",
])
def test_config_errors_exit_3(tmp_path, text):
    assert cli.main(["run", write_cfg(tmp_path / "bad.cfg", text)]) == cli.EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert cli.main(["run", str(tmp_path / "absent.cfg")]) == cli.EXIT_CONFIG


def test_typed_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="heat", solver="magic")


# ------------------------------------------------------------------- mesh


def test_mesh_command(tmp_path, capsys):
    assert cli.main(["mesh", "--n", "3", "--out", str(tmp_path / "m")]) == cli.EXIT_OK
    assert "40 vertices, 54 triangles" in capsys.readouterr().out
    lines = (tmp_path / "m" / "vertices.csv").read_text().splitlines()
    assert len(lines) == 41
    assert cli.main(["mesh", "--n", "0", "--out", str(tmp_path / "z")]) == cli.EXIT_CONFIG


# ------------------------------------------------------------------ check


def test_check_passes(capsys):
    assert cli.main(["check"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "all checks passed" in out and "FAIL" not in out


def test_check_detects_corrupted_adjoint(monkeypatch, capsys):
    monkeypatch.setattr(cli, "check_suite", functools.partial(check_suite, corrupt_adjoint=True))
    assert cli.main(["check", "--seed", "3"]) == cli.EXIT_CHECK
    failed = [l for l in capsys.readouterr().out.splitlines() if l.endswith("FAIL")]
    assert failed and all(l.startswith("duality[") for l in failed)


def test_check_report_deterministic():
    assert check_suite(7).text() == check_suite(7).text()


# -------------------------------------------------------------------- run


def test_run_writes_artifacts(tmp_path):
    path, out = small_heat(tmp_path, extra="svg = true\n")
    assert cli.main(["run", path]) == cli.EXIT_OK
    for name in ("control.csv", "output.csv", "state_snapshots.csv", "convergence.csv",
                 "summary.txt", "control.svg", "output.svg"):
        assert (out / name).exists(), name
    summary = dict(l.split(" = ", 1) for l in (out / "summary.txt").read_text().splitlines())
    assert summary["converged"] == "True"
    assert float(summary["cost"]) < float(summary["cost_zero_control"])
    assert float(summary["certificate"]) >= -1e-8


def test_run_deterministic_bytes(tmp_path):
    a, out_a = small_heat(tmp_path, "a")
    b, out_b = small_heat(tmp_path, "b")
    assert cli.main(["run", a]) == cli.main(["run", b]) == cli.EXIT_OK
    for name in ("control.csv", "output.csv", "state_snapshots.csv", "convergence.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_csv_roundtrip_lossless(tmp_path):
    cfg = default_config("heat", n=8, N=20, out=str(tmp_path / "r"))
    outcome = run_experiment(cfg)
    grid = TimeGrid(cfg.T, cfg.N)
    u = read_csv(tmp_path / "r" / "control.csv", grid)
    x = read_csv(tmp_path / "r" / "state_snapshots.csv", grid)
    assert isinstance(u, IntervalTrajectory) and isinstance(x, NodeTrajectory)
    assert np.array_equal(u.values, outcome.result.u_opt.values)
    assert np.array_equal(x.values, outcome.result.x.values)


def test_nonconvergence_exit_2(tmp_path, capsys):
    path, out = small_heat(tmp_path, extra="max_iter = 1\ntol = 1e-14\n")
    assert cli.main(["run", path]) == cli.EXIT_NONCONVERGED
    assert "did not converge" in capsys.readouterr().err
    assert (out / "summary.txt").exists() and (out / "control.csv").exists()


def test_wave_artifacts_small(tmp_path):
    cfg = default_config("wave", n=2, N=20, T=5.0, out=str(tmp_path / "w"))
    outcome = run_experiment(cfg)
    assert outcome.result.converged
    snaps = np.genfromtxt(tmp_path / "w" / "state_snapshots.csv", delimiter=",", names=True)
    assert snaps.dtype.names == ("t", "x", "y", "value")
    assert sorted(set(np.round(snaps["t"], 12))) == [1.5, 2.5, 3.5, 4.5, 5.0]
    energy = np.genfromtxt(tmp_path / "w" / "energy.csv", delimiter=",", names=True)
    assert np.max(np.abs(energy["balance_residual"])) <= 1e-9 * np.max(np.abs(energy["stored"]))
    u = outcome.result.u_opt.values
    assert u.min() >= -1.0 and u.max() <= 1.0


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "evoctrl.cli", "mesh", "--n", "1", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and "8 vertices" in proc.stdout
