import json
import os
import subprocess
import sys

import pytest

from residual_flow import cli
from residual_flow.errors import RankDeficient


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert cli.main(["simulate", "--out", str(out), "--seed", "42", "--n-bars", "700"]) == 0
    return out


def config_flags():
    return [cli.flag_for(section, key) for section, key, *_ in cli.SETTINGS] + ["--config"]


@pytest.mark.parametrize("command", cli.COMMANDS)
def test_help_lists_every_config_flag(command, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([command, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for flag in config_flags():
        assert flag in out


def test_simulate_prints_identical_digest(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        code, out, _ = run(capsys, "simulate", "--out", str(tmp_path / name), "--seed", "42", "--n-bars", "300")
        assert code == 0
        outs.append(out.split("digest=")[1].strip())
    assert outs[0] == outs[1]
    assert (tmp_path / "a" / "trades.csv").read_bytes() == (tmp_path / "b" / "trades.csv").read_bytes()


def test_simulate_rejects_tiny_n_bars(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--out", str(tmp_path), "--n-bars", "10")
    assert code == 2
    assert "n_bars" in err and ">= 200" in err


def test_unwritable_output_is_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "simulate", "--out", str(blocker / "sub"), "--n-bars", "200")
    assert code == 3
    assert "I/O error" in err


def test_pipeline_is_idempotent(dataset, tmp_path, capsys):
    files = {"ingest": "bars.csv", "residuals": "residuals.csv", "calibrate": "model.json",
             "predict": "predictions.csv", "backtest": "report.json"}
    first = {}
    for command, name in files.items():
        code, out, err = run(capsys, command, "--data", str(dataset), "--out", str(tmp_path))
        assert code == 0, err
        assert out.count("\n") == 1
        first[name] = (tmp_path / name).read_bytes()
    for command, name in files.items():
        assert run(capsys, command, "--data", str(dataset), "--out", str(tmp_path))[0] == 0
        assert (tmp_path / name).read_bytes() == first[name]
    report = json.loads(first["report.json"])
    assert len(report["folds"]) >= 2
    assert (tmp_path / "report.csv").exists()


def test_backtest_summary_line(dataset, tmp_path, capsys):
    code, out, _ = run(capsys, "backtest", "--data", str(dataset), "--out", str(tmp_path), "--method", "ols")
    assert code == 0
    assert out.startswith("folds=") and " mse=" in out and " dir_acc=" in out and " ic=" in out


def test_exclude_feature_flag(dataset, tmp_path, capsys):
    code, _, _ = run(capsys, "calibrate", "--data", str(dataset), "--out", str(tmp_path),
                     "--exclude-feature", "delta_r", "--exclude-feature", "OI")
    assert code == 0
    model = json.loads((tmp_path / "model.json").read_text())
    assert model["lambda"] == 0.0 and model["beta"] == 0.0
    assert model["scaler"]["excluded"] == ["OI", "delta_r"]


def test_config_file_and_flag_precedence(dataset, tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"model": {"method": "ridge", "grid": None, "penalty": 0.5},
                               "data": {"dir": str(dataset)}, "out": str(tmp_path / "o")}))
    assert run(capsys, "calibrate", "--config", str(cfg))[0] == 0
    model = json.loads((tmp_path / "o" / "model.json").read_text())
    assert (model["method"], model["penalty"]) == ("ridge", 0.5)
    assert run(capsys, "calibrate", "--config", str(cfg), "--penalty", "0.25")[0] == 0
    assert json.loads((tmp_path / "o" / "model.json").read_text())["penalty"] == 0.25


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"model": {"methd": "ols"}}))
    code, _, err = run(capsys, "backtest", "--config", str(cfg))
    assert code == 2 and "model.methd" in err


def test_invalid_settings_are_config_errors(dataset, tmp_path, capsys):
    assert run(capsys, "backtest", "--data", str(dataset), "--out", str(tmp_path), "--method", "svr")[0] == 2
    assert run(capsys, "residuals", "--data", str(dataset), "--out", str(tmp_path), "--window", "5")[0] == 2
    assert run(capsys, "ingest", "--data", str(tmp_path / "missing"), "--out", str(tmp_path))[0] == 2
    assert run(capsys, "predict", "--data", str(dataset), "--out", str(tmp_path),
               "--model", str(tmp_path / "none.json"))[0] == 2


def test_bad_data_exit_4(dataset, tmp_path, capsys):
    broken = tmp_path / "broken"
    broken.mkdir()
    for name in ("quotes.csv", "open_interest.csv", "contract.json"):
        (broken / name).write_bytes((dataset / name).read_bytes())
    lines = (dataset / "trades.csv").read_text().splitlines()
    lines[3] = lines[3].replace(lines[3].split(",")[2], "-1.0", 1)
    (broken / "trades.csv").write_text("\n".join(lines) + "\n")
    code, _, err = run(capsys, "ingest", "--data", str(broken), "--out", str(tmp_path))
    assert code == 4
    assert "InvariantViolation" in err and "line 4" in err


def test_too_short_for_backtest_exit_4(dataset, tmp_path, capsys):
    code, _, err = run(capsys, "backtest", "--data", str(dataset), "--out", str(tmp_path), "--train-len", "5000")
    assert code == 4 and "TooFewRows" in err


def test_calibration_failure_exit_5(dataset, tmp_path, capsys, monkeypatch):
    def boom(*args, **kwargs):
        raise RankDeficient("singular")

    monkeypatch.setattr(cli, "fit", boom)
    code, _, err = run(capsys, "calibrate", "--data", str(dataset), "--out", str(tmp_path))
    assert code == 5 and "RankDeficient" in err


def test_console_script_and_log_level(dataset, tmp_path):
    env = dict(os.environ, RESIDUAL_FLOW_LOG="info")
    proc = subprocess.run([sys.executable, "-m", "residual_flow.cli", "residuals", "--data", str(dataset),
                           "--out", str(tmp_path)], capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert proc.stdout.startswith("residuals=")
    assert "wrote" in proc.stderr and "residuals.csv" in proc.stderr
    quiet = subprocess.run([sys.executable, "-m", "residual_flow.cli", "residuals", "--data", str(dataset),
                            "--out", str(tmp_path)], capture_output=True, text=True,
                           env=dict(os.environ, RESIDUAL_FLOW_LOG="error"))
    assert quiet.returncode == 0 and quiet.stderr == ""
