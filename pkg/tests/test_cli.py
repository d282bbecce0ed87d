import json
import subprocess
import sys

import pytest

from gsl.cli import main
from gsl.config import dump_config
from gsl.orchestrator import GslPlan

from tinyconf import tiny_gridworld


@pytest.fixture()
def tiny_yaml(tmp_path):
    path = tmp_path / "tiny.yaml"
    dump_config(tiny_gridworld(), path)
    return path


def test_gsl_subcommand_full_run(tiny_yaml, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["gsl", "--config", str(tiny_yaml), "--seed", "7",
               "--out", str(out)])
    assert rc == 0
    assert (out / "report.json").exists()
    printed = capsys.readouterr().out
    assert "mean_return_after" in printed
    assert str(out) in printed


def test_out_root_env_var_names_the_run_dir(tiny_yaml, tmp_path, monkeypatch,
                                            capsys):
    monkeypatch.setenv("GSL_OUT_ROOT", str(tmp_path / "root"))
    rc = main(["baseline", "--config", str(tiny_yaml), "--seed", "7"])
    assert rc == 0
    d = tmp_path / "root" / "tiny-grid-baseline-s7"
    assert (d / "report.json").exists()
    assert json.loads((d / "plan.json").read_text())["mode"] == "baseline"


def test_specialists_only_stops_early(tiny_yaml, tmp_path, capsys):
    out = tmp_path / "so"
    assert main(["specialists-only", "--config", str(tiny_yaml),
                 "--out", str(out)]) == 0
    plan = GslPlan.load(out / "plan.json")
    assert plan.phase == "done"
    assert plan.data["stopped_after"] == "specialists"
    assert not (out / "metrics" / "phase2.csv").exists()


def test_resume_finished_run_reports_again(tiny_yaml, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["gsl", "--config", str(tiny_yaml), "--out", str(out)]) == 0
    first = capsys.readouterr().out
    assert main(["gsl", "--resume", str(out)]) == 0
    second = capsys.readouterr().out
    assert "mean_return_after" in second
    line = [l for l in first.splitlines() if "mean_return_after" in l]
    assert line and line[0] in second


def test_set_overrides_reach_the_run(tiny_yaml, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["gsl", "--config", str(tiny_yaml), "--seed", "5",
               "--set", "gsl.n_specialists=1", "--set", "gsl.n_low=1",
               "--out", str(out)])
    assert rc == 0
    plan = GslPlan.load(out / "plan.json")
    assert len(plan.data["subsets"]) == 1
    assert plan.data["seed"] == 5


def test_config_errors_exit_2(tiny_yaml, tmp_path, capsys):
    bad = [
        ["gsl", "--config", str(tiny_yaml), "--set", "ppo.gamma=purple"],
        ["gsl", "--config", str(tmp_path / "missing.yaml")],
        ["gsl", "--config", "no-such-preset"],
        ["gsl", "--config", str(tiny_yaml), "--set", "lfd.method=gail"],
        ["gsl", "--resume", str(tmp_path / "nowhere")],
        ["ablate-k", "--config", str(tiny_yaml), "--ks", "one,two"],
    ]
    for argv in bad:
        assert main(argv) == 2, argv
        assert capsys.readouterr().err != ""


def test_insufficient_demos_exit_4(tiny_yaml, tmp_path, capsys):
    rc = main(["gsl", "--config", str(tiny_yaml), "--set", "lfd.tau=2.0",
               "--out", str(tmp_path / "r")])
    assert rc == 4
    assert "demos" in capsys.readouterr().err


def test_plateau_analyze_prints_trigger(tiny_yaml, tmp_path, capsys):
    out = tmp_path / "run"
    main(["gsl", "--config", str(tiny_yaml), "--out", str(out)])
    capsys.readouterr()
    rc = main(["plateau-analyze", str(out / "metrics" / "phase1.csv"),
               "--kernel", "3", "--window", "4", "--epsilon", "0.05",
               "--guard", "0.1"])
    assert rc == 0
    text = capsys.readouterr().out
    assert "plateau at epoch" in text or "no plateau" in text


def test_plateau_analyze_missing_column_exit_2(tiny_yaml, tmp_path, capsys):
    out = tmp_path / "run"
    main(["baseline", "--config", str(tiny_yaml), "--out", str(out)])
    capsys.readouterr()
    rc = main(["plateau-analyze", str(out / "metrics" / "phase1.csv"),
               "--column", "no_such"])
    assert rc == 2


def test_report_subcommand_writes_tables(tiny_yaml, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["gsl", "--config", str(tiny_yaml), "--out", str(a)])
    main(["baseline", "--config", str(tiny_yaml), "--out", str(b)])
    capsys.readouterr()
    rc = main(["report", str(a), str(b), "--out", str(tmp_path / "rep")])
    assert rc == 0
    for name in ("comparison.csv", "aggregate.csv", f"series_{a.name}.csv"):
        assert (tmp_path / "rep" / name).exists()
    assert "report tables" in capsys.readouterr().out


def test_ablate_k_subcommand(tiny_yaml, tmp_path, capsys):
    out = tmp_path / "k"
    rc = main(["ablate-k", "--config", str(tiny_yaml), "--ks", "2",
               "--out", str(out)])
    assert rc == 0
    data = json.loads((out / "k_sweep.json").read_text())
    assert data["2"]["n_specialists"] == 1


def test_console_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "gsl.cli", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("gsl", "baseline", "specialists-only", "ablate-k",
                "ablate-timing", "ablate-lfd", "plateau-analyze", "report"):
        assert cmd in r.stdout
