import json
import subprocess
import sys
from pathlib import Path

import pytest

import subopt_lfd.pipeline as pl
from subopt_lfd.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"


def test_stage_success_prints_paths(tmp_path, capsys):
    assert main(["demo-gen", "--config", str(SMOKE), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out.split()
    assert out == [str(tmp_path / "demos.json")]
    assert json.loads((tmp_path / "demos.json").read_text())["provenance"]["stage"] == "demo-gen"


def test_seed_flag_changes_output(tmp_path):
    assert main(["demo-gen", "--config", str(SMOKE), "--out", str(tmp_path / "a"), "--seed", "0"]) == EXIT_OK
    assert main(["demo-gen", "--config", str(SMOKE), "--out", str(tmp_path / "b"), "--seed", "1"]) == EXIT_OK
    a = json.loads((tmp_path / "a" / "demos.json").read_text())
    b = json.loads((tmp_path / "b" / "demos.json").read_text())
    assert a["provenance"]["seed"] == 0 and b["provenance"]["seed"] == 1


def test_missing_input_exit_code_names_file(tmp_path, capsys):
    assert main(["airl", "--config", str(SMOKE), "--out", str(tmp_path)]) == EXIT_INVALID
    assert "demos.json" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["demo-gen", "--config", str(tmp_path / "nope.json")]) == EXIT_INVALID
    assert "nope.json" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"env": {"id": "gridnav", "size": 0}}))
    assert main(["demo-gen", "--config", str(bad)]) == EXIT_INVALID
    assert "env" in capsys.readouterr().err


def test_negative_seed_rejected(tmp_path):
    assert main(["demo-gen", "--config", str(SMOKE), "--out", str(tmp_path), "--seed", "-3"]) == EXIT_INVALID


def test_runtime_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(cfg, seed, layout):
        raise RuntimeError("out of luck")

    monkeypatch.setitem(pl.STAGE_FUNCS, "demo-gen", boom)
    assert main(["demo-gen", "--config", str(SMOKE), "--out", str(tmp_path)]) == EXIT_RUNTIME
    assert "out of luck" in capsys.readouterr().err


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["dance", "--config", str(SMOKE)])
    assert e.value.code == EXIT_INVALID


def test_version_via_module():
    res = subprocess.run([sys.executable, "-m", "subopt_lfd.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.strip() == "subopt-lfd v0.1.0"
