"""Command-line interface: subcommands, output plumbing, exit codes."""
import dataclasses
import json
import subprocess
import sys

import pytest

import steincouplings.cli as cli
from steincouplings.experiments import OUTPUT_DIR_ENV
from steincouplings.zero_bias import read_spool

CONFIG_TOML = """\
[experiment]
construction = "zero-uniform"
id = "cli-zero"
seed = 21
reps = 2500
replicates = 2
lin_reps = 2

[model]
n = 4
scores = "gaussian"
score_seed = 5

[output]
dir = "cfg-dir"
spool = true
"""


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "cli-zero.toml"
    path.write_text(CONFIG_TOML)
    return path


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)


def test_bound_prints_every_variant_class_pair(config_path, capsys):
    assert cli.main(["bound", "--config", str(config_path)]) == 0
    rows = json.loads(capsys.readouterr().out)
    # main expands to both named classes; half-line and interval are pinned
    assert [(r["variant"], r["smoothness"]) for r in rows] == [
        ("main", "half-lines"), ("main", "intervals"),
        ("half-line", "half-lines"), ("interval", "intervals")]
    assert all(r["bound"] > 0 and "formula" in r for r in rows)

    assert cli.main(["bound", "--config", str(config_path),
                     "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("variant,smoothness,bound,vacuous")
    assert len(lines) == 5


def test_verify_writes_report_checks_and_spool(config_path, tmp_path, capsys):
    out_dir = tmp_path / "results"
    code = cli.main(["verify", "--config", str(config_path),
                     "--out", str(out_dir), "--threads", "1"])
    assert code == 0
    out = capsys.readouterr().out
    assert "overall: PASS" in out
    assert all(line.startswith(("PASS ", "FAIL ", "wrote ", "overall:"))
               for line in out.splitlines())

    report = json.loads((out_dir / "cli-zero.json").read_text())
    assert report["experiment_id"] == "cli-zero"
    assert report["passed"] is True
    lines = (out_dir / "cli-zero.checks.jsonl").read_text().splitlines()
    assert len(lines) == len(report["checks"])

    spooled = read_spool(out_dir / "cli-zero.spool.bin")
    assert spooled["y"].size == 2500


def test_verify_format_override_writes_csv_checks(config_path, tmp_path):
    out_dir = tmp_path / "csv-results"
    assert cli.main(["verify", "--config", str(config_path),
                     "--out", str(out_dir), "--threads", "1",
                     "--format", "csv"]) == 0
    assert (out_dir / "cli-zero.checks.csv").exists()
    assert not (out_dir / "cli-zero.checks.jsonl").exists()


def test_output_directory_precedence(config_path, tmp_path, monkeypatch,
                                     capsys):
    monkeypatch.chdir(tmp_path)
    # no flag, no env: the config's output.dir, relative to the cwd
    assert cli.main(["verify", "--config", str(config_path),
                     "--threads", "1"]) == 0
    assert (tmp_path / "cfg-dir" / "cli-zero.json").exists()
    # env overrides the config
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env-dir"))
    assert cli.main(["verify", "--config", str(config_path),
                     "--threads", "1"]) == 0
    assert (tmp_path / "env-dir" / "cli-zero.json").exists()
    # the flag overrides both
    assert cli.main(["verify", "--config", str(config_path),
                     "--out", str(tmp_path / "flag-dir"),
                     "--threads", "1"]) == 0
    assert (tmp_path / "flag-dir" / "cli-zero.json").exists()
    capsys.readouterr()


def test_seed_and_reps_overrides_reach_the_report(config_path, tmp_path,
                                                  capsys):
    out_dir = tmp_path / "o"
    assert cli.main(["verify", "--config", str(config_path), "--seed", "77",
                     "--reps", "800", "--out", str(out_dir),
                     "--threads", "1"]) == 0
    report = json.loads((out_dir / "cli-zero.json").read_text())
    assert report["seed"] == 77
    assert report["reps"] == 800
    assert report["replicates"] == 2
    capsys.readouterr()


def test_simulate_writes_draw_summary(config_path, tmp_path, capsys):
    out_dir = tmp_path / "sims"
    assert cli.main(["simulate", "--config", str(config_path),
                     "--out", str(out_dir), "--threads", "1"]) == 0
    summary = json.loads((out_dir / "cli-zero.draws.json").read_text())
    assert summary["construction"] == "zero-uniform"
    assert set(summary["fields"]["y"]) == {"mean", "min", "max"}
    assert summary["spool"]["records"] == 2500
    assert (out_dir / "cli-zero.spool.bin").exists()
    capsys.readouterr()


def test_sweep_exit_one_on_bad_row(config_path, tmp_path, capsys):
    raw = CONFIG_TOML.replace('reps = 2500', 'reps = 1200') + (
        '\n[sweep]\nparameter = "model.n"\nvalues = [4, 0, 5]\n')
    path = tmp_path / "sweep.toml"
    path.write_text(raw.replace('id = "cli-zero"', 'id = "cli-sweep"'))
    out_dir = tmp_path / "sweep-out"
    code = cli.main(["sweep", "--config", str(path), "--out", str(out_dir),
                     "--threads", "1"])
    assert code == 1  # the n = 0 row fails, others pass
    out = capsys.readouterr().out
    assert "FAIL cli-sweep-001" in out and "ConfigError" in out
    csv_lines = (out_dir / "cli-sweep.sweep.csv").read_text().splitlines()
    assert len(csv_lines) == 4
    assert (out_dir / "cli-sweep-000.json").exists()
    assert not (out_dir / "cli-sweep-001.json").exists()
    assert (out_dir / "cli-sweep-002.json").exists()


def test_verify_exit_one_when_a_check_fails(config_path, tmp_path,
                                            monkeypatch, capsys):
    real_run = cli.run

    def failing_run(config, threads=None, spool_path=None):
        report = real_run(config, threads=threads, spool_path=spool_path)
        return dataclasses.replace(report, passed=False)

    monkeypatch.setattr(cli, "run", failing_run)
    code = cli.main(["verify", "--config", str(config_path),
                     "--out", str(tmp_path / "f"), "--threads", "1"])
    assert code == 1
    assert "overall: FAIL" in capsys.readouterr().out


def test_report_summarizes_and_validates(config_path, tmp_path, monkeypatch,
                                         capsys):
    monkeypatch.chdir(tmp_path)
    out_dir = tmp_path / "reports"
    cli.main(["verify", "--config", str(config_path), "--out", str(out_dir),
              "--threads", "1"])
    cli.main(["simulate", "--config", str(config_path), "--out", str(out_dir),
              "--threads", "1"])  # adds a non-report JSON that must be skipped
    capsys.readouterr()

    assert cli.main(["report", "--out", str(out_dir)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 1
    assert rows[0]["experiment_id"] == "cli-zero"
    assert rows[0]["passed"] is True
    assert rows[0]["checks"] > 0

    assert cli.main(["report", "--out", str(out_dir),
                     "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("experiment_id,construction,seed")
    assert len(lines) == 2

    # report reads the env fallback too
    env_ok = cli.main(["report"])
    assert env_ok == 2  # 'runs' does not exist in this sandbox cwd

    # an invalid stored report is a configuration error
    (out_dir / "zz-broken.json").write_text(
        json.dumps({"experiment_id": "zz", "passed": True}))
    assert cli.main(["report", "--out", str(out_dir)]) == 2
    assert "schema" in capsys.readouterr().err


def test_flag_validation_and_missing_config(config_path, capsys):
    assert cli.main(["verify", "--config", "/nonexistent.toml"]) == 2
    assert "error:" in capsys.readouterr().err
    assert cli.main(["bound", "--config", str(config_path),
                     "--seed", "-4"]) == 2
    assert cli.main(["bound", "--config", str(config_path),
                     "--reps", "0"]) == 2
    assert cli.main(["verify", "--config", str(config_path),
                     "--threads", "0"]) == 2
    capsys.readouterr()
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["frobnicate"])
    assert excinfo.value.code == 2


def test_console_script_entry_point(config_path, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "steincouplings.cli", "bound",
         "--config", str(config_path)],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)
