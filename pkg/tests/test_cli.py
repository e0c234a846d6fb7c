import subprocess
import sys

import pytest

from twinforge.cli import COMMANDS, build_parser, main

CONFIG = """
[experiment]
workspace = ws
seed = 3

[bank]
aprbs = 7
sinaprbs = 0
multisine = 7
schroeder = 0
step = 1
sine = 0

[evaluation]
test_size = 6
best_k = 1
sin_k = 1
extrapolation = false

[train]
epochs = 10

[grid]
nx = 6
ny = 4
nz = 4
"""


@pytest.fixture
def config(tmp_path, monkeypatch):
    monkeypatch.delenv("TWINFORGE_WORKSPACE", raising=False)
    path = tmp_path / "c.ini"
    path.write_text(CONFIG)
    return path


def test_parser_knows_every_command():
    parser = build_parser()
    for cmd in COMMANDS:
        args = parser.parse_args([cmd, "--config", "x.ini", "--seed", "4", "--jobs", "2"])
        assert args.command == cmd and args.seed == 4 and args.jobs == 2


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "twinforge.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in COMMANDS:
        assert cmd in out.stdout


def test_missing_prerequisite_exit_code(config, capsys):
    assert main(["eval", "--config", str(config)]) == 2
    assert "testset" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[bank]\nunknown = 1\n")
    assert main(["synth", "--config", str(path)]) == 2
    assert "unknown" in capsys.readouterr().err


def test_stage_commands_in_order(config, tmp_path, capsys):
    base = ["--config", str(config)]
    assert main(["synth", *base]) == 0
    assert "15 signals" in capsys.readouterr().out
    assert main(["simulate", "--signals", "ap0", "step", *base]) == 0
    assert "computed 2" in capsys.readouterr().out
    assert main(["simulate", *base]) == 0
    assert "cached 2, computed 13, failed 0" in capsys.readouterr().out
    assert main(["testset", *base]) == 0
    out = capsys.readouterr().out
    assert "AP6: 6 signals" in out and "MS6: 6 signals" in out
    assert main(["train", *base]) == 0
    assert "trained 3" in capsys.readouterr().out
    assert main(["eval", *base]) == 0
    assert main(["kpi", *base]) == 0
    assert "KPI rows" in capsys.readouterr().out
    ws = tmp_path / "ws"
    assert (ws / "eval" / "table.csv").is_file() and (ws / "report" / "kpis.csv").is_file()
    assert (ws / "pipeline.log").read_text().count("command") >= 7


def test_seed_override_changes_bank(config, tmp_path):
    assert main(["synth", "--config", str(config)]) == 0
    a = (tmp_path / "ws" / "signals" / "ap0.csv").read_bytes()
    assert main(["synth", "--config", str(config), "--seed", "99"]) == 0
    assert (tmp_path / "ws" / "signals" / "ap0.csv").read_bytes() != a
