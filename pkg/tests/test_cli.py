import csv
import subprocess
import sys

import numpy as np
import pytest

from sphere_ot import __version__
from sphere_ot.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, SOLVE_COLUMNS, main, study_levels
from sphere_ot.cloud import read_nodes
from sphere_ot.config import RunConfig
from sphere_ot.exceptions import ConfigError


def data_rows(path):
    lines = [l for l in open(path) if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_generate(tmp_path, capsys):
    out = tmp_path / "nodes.txt"
    obj = tmp_path / "mesh.obj"
    assert main(["generate", "--kind", "icosahedral", "--n", "162", "--out", str(out), "--obj", str(obj)]) == EXIT_OK
    assert read_nodes(out).shape == (162, 3)
    assert obj.read_text().count("\nf ") == 320
    assert main(["generate", "--n", "20"]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 20


def test_generate_errors(capsys):
    assert main(["generate", "--kind", "cube", "--n", "20"]) == EXIT_CONFIG
    assert main(["generate", "--kind", "icosahedral", "--n", "100"]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err
    assert main(["generate", "--kind", "cube", "--n", "20"]) == EXIT_CONFIG
    assert "fibonacci" in capsys.readouterr().err


def test_solve_writes_table(tmp_path, capsys):
    nodes = tmp_path / "nodes.txt"
    main(["generate", "--kind", "fibonacci", "--n", "300", "--out", str(nodes)])
    out = tmp_path / "sol.csv"
    code = main(["solve", "--cloud", str(nodes), "--f1", "vmf:4:0.6", "--renormalize-f2", "--out", str(out)])
    assert code == EXIT_OK
    text = out.read_text()
    assert f"# sphere_ot version: {__version__}" in text
    assert "# config_sha256: " in text and "# report.converged = True" in text
    rows = data_rows(out)
    assert list(rows[0]) == list(SOLVE_COLUMNS)
    assert len(rows) == 300
    u = np.array([float(r["u"]) for r in rows])
    T = np.array([[float(r[k]) for k in ("Tx", "Ty", "Tz")] for r in rows])
    np.testing.assert_allclose(np.linalg.norm(T, axis=1), 1.0, atol=1e-12)
    assert abs(np.mean(u)) < 0.05
    assert "report.v_residual_inf" in capsys.readouterr().out


def test_solve_config_file_and_flags(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("cloud = fibonacci\nn = 200\ncost = log\n")
    out = tmp_path / "sol.csv"
    assert main(["solve", "--config", str(cfg), "--n", "150", "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    assert "# config.n = 150" in text and "# config.cost = log" in text


def test_solve_errors(tmp_path, capsys):
    assert main(["solve", "--cloud", "fibonacci", "--n", "200", "--f1", f"file:{tmp_path / 'nope'}"]) == EXIT_CONFIG
    assert main(["solve", "--cloud", "fibonacci", "--n", "200", "--cost", "squared", "--R", "2"]) == EXIT_CONFIG
    ones = tmp_path / "ones.txt"
    ones.write_text("1.0\n" * 200)
    assert main(["solve", "--cloud", "fibonacci", "--n", "200", "--f1", f"file:{ones}"]) == EXIT_NUMERICAL
    err = capsys.readouterr().err
    assert "numerical failure" in err


def test_solve_non_convergence_exit_code(capsys):
    code = main(["solve", "--cloud", "fibonacci", "--n", "200", "--f1", "twobump:6:0.8", "--renormalize-f2",
                 "--max-iters", "1", "--tol", "1e-14"])
    assert code == EXIT_NUMERICAL
    assert "best residual" in capsys.readouterr().err


def test_study(tmp_path):
    out = tmp_path / "study.csv"
    assert main(["study", "--cloud", "icosahedral", "--levels", "2", "--out", str(out)]) == EXIT_OK
    rows = data_rows(out)
    assert [int(r["n"]) for r in rows] == [162, 642]


def test_study_levels():
    assert study_levels(RunConfig(levels=3)) == [162, 642, 2562]
    assert study_levels(RunConfig(cloud="fibonacci", n=100, levels=2)) == [100, 400]
    with pytest.raises(ConfigError):
        study_levels(RunConfig(cloud="nodes.txt"))
    with pytest.raises(ConfigError):
        study_levels(RunConfig(levels=0))


def test_check_exit_codes(capsys):
    assert main(["check", "--n", "200", "--trials", "200"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PROP ") == 9 and " FAIL" not in out
    assert main(["check", "--n", "200", "--trials", "200", "--broken-eikonal"]) == EXIT_CHECK_FAILED
    assert "PROP monotonicity FAIL" in capsys.readouterr().out


def test_threads_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("SPHERE_OT_THREADS", "1")
    assert main(["check", "--n", "150", "--trials", "100", "--threads", "1"]) == EXIT_OK


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "sphere_ot.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout


def test_generate_small_files(tmp_path):
    out = tmp_path / "cloud.txt"
    assert main(["generate", "--kind", "icosahedral", "--n", "12", "--out", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 12
    assert main(["generate", "--kind", "fibonacci", "--n", "1000", "--out", str(out)]) == EXIT_OK
    np.testing.assert_allclose(np.linalg.norm(read_nodes(out), axis=1), 1.0, atol=1e-15)
