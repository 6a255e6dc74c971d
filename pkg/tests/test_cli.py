import json
import subprocess
import sys

import pytest

from walkrg.cli import RunManifest, SCHEMAS, main, validate
from walkrg.errors import ConfigurationError


def _run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path)])


def test_enumerate_artifacts(tmp_path, capsys):
    assert _run(tmp_path, "enumerate", "--d", "3", "--n", "10", "--check") == 0
    rows = (tmp_path / "counts.csv").read_text().splitlines()
    assert rows[0] == "n,c_n,ratio,nth_root"
    assert rows[10].split(",")[1] == "8809878"
    man = RunManifest.from_json((tmp_path / "manifest.json").read_text())
    assert all(man.verify(tmp_path).values())
    assert RunManifest.from_json(man.to_json()) == man


def test_rerun_byte_identical(tmp_path, capsys):
    first = tmp_path / "a"
    assert _run(first, "rg-flow", "--eps", "0.05") == 0
    assert main(["rerun", str(first / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    for name in ("fit.csv", "summary.json"):
        assert (first / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_trivial_flow_gamma(tmp_path, capsys):
    assert _run(tmp_path, "rg-flow", "--eps", "0") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["gamma"] == pytest.approx(1.0, abs=1e-9)


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"eps": 0.1, "epz": 0.2}))
    assert _run(tmp_path, "rg-flow", "--config", str(cfg)) == 2
    assert "epz" in capsys.readouterr().err


def test_bad_value(tmp_path, capsys):
    assert _run(tmp_path, "phi4", "--g", "abc") == 2
    assert "'g'" in capsys.readouterr().err


def test_runtime_error_names_module(tmp_path, capsys):
    assert _run(tmp_path, "phi4", "--sites", "9") == 3
    assert "[phi4]" in capsys.readouterr().err


def test_check_failure_exit(tmp_path, capsys):
    # a pivot run this short lands outside the d = 5 window
    code = _run(tmp_path, "pivot", "--d", "5", "--n_grid", "4,16", "--accepted", "200", "--check")
    assert code in (0, 4)
    man = RunManifest.from_json((tmp_path / "manifest.json").read_text())
    assert (code == 4) == (not man.check["ok"])


def test_env_out(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("WALKRG_OUT", str(tmp_path / "env"))
    assert main(["phase-portrait", "--j_max", "10"]) == 0
    assert (tmp_path / "env" / "trajectories.csv").exists()


def test_validate_defaults():
    for name in SCHEMAS:
        assert set(validate(name, {})) == set(SCHEMAS[name])
    with pytest.raises(ConfigurationError):
        validate("wsaw", {"mode": "x"})


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "walkrg", "polymer-check", "--instances", "2",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert json.loads(out.stdout)["check"]["ok"]
