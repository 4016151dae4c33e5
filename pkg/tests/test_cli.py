import io
import json
import subprocess
import sys

import pytest

from ultracoral.cli import main


def run(argv, tmp_path=None):
    buf = io.StringIO()
    if tmp_path is not None:
        argv = [*argv, "--out", str(tmp_path)]
    code = main(argv, stdout=buf)
    return code, buf.getvalue()


def test_grow_writes_tree_and_svg(tmp_path):
    code, out = run(["grow", "--seed", "42"], tmp_path)
    assert code == 0
    assert (tmp_path / "tree.json").exists() and (tmp_path / "tree.svg").exists()
    doc = json.loads((tmp_path / "tree.json").read_text())
    assert doc["config"]["growth"]["seed"] == 42
    assert "relative_range=" in out


def test_grow_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["grow", "--seed", "7", "--format", "csv,json,svg,lsys"], d)[0] == 0
    names = sorted(p.name for p in a.iterdir())
    assert "tree.lsys" in names and "events_level0.csv" in names
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_spectrum_command(tmp_path):
    code, out = run(["spectrum", "--set", "model.p=2", "--set", "growth.m_max=4"], tmp_path)
    assert code == 0
    rows = out.strip().splitlines()
    assert rows[0] == "eigenvalue,multiplicity,expected,abs_error"
    assert len(rows) == 1 + 5
    assert all(float(r.split(",")[3]) < 1e-8 for r in rows[1:])
    assert (tmp_path / "spectrum.csv").read_text() == out


def test_react_rejects_positive_beta(tmp_path, capsys):
    code, _ = run(["react", "--set", "model.beta=0.2"], tmp_path)
    assert code == 1
    assert "model.beta" in capsys.readouterr().err


def test_react_outputs(tmp_path):
    code, out = run(["react", "--set", "solver.t_end=20"], tmp_path)
    assert code == 0
    lines = (tmp_path / "timeseries.csv").read_text().splitlines()
    assert lines[0] == "t,u_0,v_0,w_0"
    assert float(lines[-1].split(",")[0]) == 20.0
    events = (tmp_path / "events.csv").read_text().splitlines()
    assert events[0] == "branch,kind,time,u,v,w,omega"
    assert any(",crossing," in e for e in events)


def test_simulate_two_branches(tmp_path):
    code, out = run(["simulate", "--set", "growth.m_max=1", "--set", "model.u0=[10,8]",
                     "--set", "model.v0=[15,13]", "--set", "solver.t_end=10"], tmp_path)
    assert code == 0
    header = (tmp_path / "timeseries.csv").read_text().splitlines()[0]
    assert header == "t,u_0,u_1,v_0,v_1,w_0,w_1"
    assert out.count("crossing") == 2


def test_simulate_wrong_vector_length(tmp_path):
    code, _ = run(["simulate", "--set", "growth.m_max=2", "--set", "model.u0=[10,8]"], tmp_path)
    assert code == 1


def test_matrix_command(tmp_path):
    code, _ = run(["matrix", "--set", "growth.m_max=1"], tmp_path)
    assert code == 0
    rows = [list(map(float, r.split(","))) for r in (tmp_path / "matrix.csv").read_text().split()]
    assert rows[0][1] == pytest.approx(12 / 7) and rows[0][0] == pytest.approx(-12 / 7)


def test_analyze_command(tmp_path):
    code, out = run(["analyze"], tmp_path)
    assert code == 0
    assert "asymptotically stable" in out and "non-hyperbolic" in out
    rows = (tmp_path / "equilibria.csv").read_text().splitlines()
    assert rows[1].split(",")[:4] == ["0.0", "0.0", "-1.2", "-0.04000000000000001"]


def test_unknown_subcommand_and_flag(capsys):
    assert main(["bogus"]) == 1
    assert main(["grow", "--nope"]) == 1
    assert "usage" in capsys.readouterr().err


def test_config_file_and_explicit_flags(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[growth]\nseed = 1\nm_max = 0\n[output]\nformats = ['json']\n")
    code, _ = run(["grow", "--config", str(cfg), "--seed", "3"], tmp_path)
    assert code == 0
    doc = json.loads((tmp_path / "tree.json").read_text())
    assert doc["config"]["growth"]["seed"] == 3
    assert doc["config"]["growth"]["m_max"] == 0
    assert not (tmp_path / "tree.svg").exists()


def test_bad_config_syntax(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("model.sigma = \n")
    assert run(["react", "--config", str(cfg)], tmp_path)[0] == 1
    assert "line 1" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path):
    code, _ = run(["react", "--set", "solver.max_steps=3"], tmp_path)
    assert code == 2


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ULTRACORAL_OUT", str(tmp_path))
    assert main(["analyze"], stdout=io.StringIO()) == 0
    assert (tmp_path / "equilibria.csv").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ultracoral", "analyze", "--format", "json"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and "classification" in proc.stdout
