"""Plot-ready tables from finished run directories.

Everything here is read-only over the run layout the orchestrator writes, and
every output is plain CSV (plus one JSON echo) so any plotting tool can
consume it. Runs are aligned on a percentage x-axis: each run's generalist
curve (phase I followed by consolidation, when present) is indexed by the
fraction of its own logged epochs, which lets runs of different lengths
average cleanly. Within a run the curve is also smoothed with the same
boundary-renormalized kernel the plateau criterion uses, so the plotted
series matches what the trigger logic saw.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import ConfigError
from .metrics import read_metrics
from .plateau import smooth_returns

GRID = np.linspace(0.0, 100.0, 101)


def _load_run(run_dir):
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.yaml"
    if not cfg_path.exists():
        raise ConfigError(f"{run_dir} is not a run directory (no config snapshot)")
    cfg = load_config(cfg_path)
    plan = {}
    if (run_dir / "plan.json").exists():
        plan = json.loads((run_dir / "plan.json").read_text())
    report = {}
    if (run_dir / "report.json").exists():
        report = json.loads((run_dir / "report.json").read_text())
    return {"dir": run_dir, "name": run_dir.name, "cfg": cfg, "plan": plan,
            "report": report}


def generalist_series(run):
    """Concatenated generalist learning curve for one run.

    Rows: (phase, epoch, cumulative_steps, raw_return); phase I first, then
    the consolidation phase when it exists. Supervised consolidation logs
    zero samples per epoch, so cumulative steps simply hold flat there.
    """
    rows = []
    steps = 0
    for phase in ("phase1", "phase2"):
        path = run["dir"] / "metrics" / f"{phase}.csv"
        if not path.exists():
            continue
        cols = read_metrics(path)
        if cols["epoch"].size == 0:
            continue
        totals = cols["total_samples"]
        for i in range(cols["epoch"].size):
            rows.append((phase, int(cols["epoch"][i]),
                         steps + int(totals[i]), float(cols["mean_return"][i])))
        steps += int(totals[-1])
    return rows


def _series_table(run, kernel):
    rows = generalist_series(run)
    if not rows:
        return []
    raw = np.array([r[3] for r in rows])
    # smooth within each phase so consolidation values never bleed into the
    # tail of phase I through the kernel
    smooth = np.empty_like(raw)
    at = 0
    for phase in ("phase1", "phase2"):
        n = sum(1 for r in rows if r[0] == phase)
        if n:
            smooth[at:at + n] = smooth_returns(raw[at:at + n], kernel)
            at += n
    denom = max(len(rows) - 1, 1)
    out = []
    for i, (phase, epoch, steps, ret) in enumerate(rows):
        out.append({"phase": phase, "epoch": epoch, "cumulative_steps": steps,
                    "percent": 100.0 * i / denom, "raw_return": ret,
                    "smooth_return": float(smooth[i])})
    return out


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _run_label(run):
    if run["plan"].get("mode") == "baseline":
        return "baseline"
    return f"gsl-{run['cfg'].lfd.method}"


def build_report(run_dirs, out_dir):
    """Aggregate one or more finished runs into comparison tables.

    Writes, under out_dir:
      series_<run>.csv   per-run generalist curve (raw + smoothed, % x-axis)
      aggregate.csv      per-label mean +- sample std over the % grid
      comparison.csv     one row per run: final numbers + plateau markers
      ignorance.csv      context/outcome matrices echoed from the reports
    Returns a summary dict with the comparison rows.
    """
    runs = [_load_run(d) for d in run_dirs]
    if not runs:
        raise ConfigError("no run directories given")
    envs = {r["cfg"].env.name for r in runs}
    if len(envs) > 1:
        raise ConfigError(
            f"refusing to aggregate runs from different envs: {sorted(envs)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    series_by_run = {}
    for run in runs:
        table = _series_table(run, run["cfg"].plateau.kernel)
        series_by_run[run["name"]] = table
        _write_csv(out_dir / f"series_{run['name']}.csv",
                   ["phase", "epoch", "cumulative_steps", "percent",
                    "raw_return", "smooth_return"], table)

    # mean +- std across runs sharing a label, interpolated onto the % grid
    agg_rows = []
    by_label = {}
    for run in runs:
        by_label.setdefault(_run_label(run), []).append(run)
    for label in sorted(by_label):
        curves = []
        for run in by_label[label]:
            t = series_by_run[run["name"]]
            if not t:
                continue
            pct = np.array([r["percent"] for r in t])
            val = np.array([r["smooth_return"] for r in t])
            curves.append(np.interp(GRID, pct, val))
        if not curves:
            continue
        stack = np.stack(curves)
        mean = stack.mean(axis=0)
        if stack.shape[0] > 1:
            std = stack.std(axis=0, ddof=1)
        else:
            std = np.full(GRID.size, np.nan)
        for i, p in enumerate(GRID):
            agg_rows.append({"label": label, "percent": float(p),
                             "mean_return": float(mean[i]),
                             "std_return": float(std[i]),
                             "n_runs": stack.shape[0]})
    _write_csv(out_dir / "aggregate.csv",
               ["label", "percent", "mean_return", "std_return", "n_runs"],
               agg_rows)

    comp_rows = []
    for run in runs:
        rep, plan = run["report"], run["plan"]
        phase1 = plan.get("phase1", {}) or {}
        n_rows = len(series_by_run[run["name"]])
        marker = phase1.get("plateau_epoch")
        comp_rows.append({
            "run": run["name"], "label": _run_label(run),
            "seed": run["cfg"].seed,
            "total_steps": rep.get("total_steps", plan.get("counters") and
                                   sum(plan["counters"].values())),
            "plateau_epoch": marker if marker is not None else "",
            "plateau_confirmed_at": phase1.get("confirmed_at") or "",
            "plateau_percent": ("" if marker is None or n_rows < 2 else
                                round(100.0 * marker / (n_rows - 1), 3)),
            "mean_return_after": rep.get("mean_return_after", ""),
            "success_after": rep.get("success_after", ""),
        })
    _write_csv(out_dir / "comparison.csv",
               ["run", "label", "seed", "total_steps", "plateau_epoch",
                "plateau_confirmed_at", "plateau_percent", "mean_return_after",
                "success_after"], comp_rows)

    ign_rows = []
    for run in runs:
        for stage in ("ignorance_before", "ignorance_after"):
            ign = run["report"].get(stage)
            if not ign:
                continue
            for row_i, var in enumerate(ign["variations"]):
                row = {"run": run["name"], "stage": stage.split("_")[1],
                       "variation": var,
                       "concentration": ign["concentration"]}
                for j, frac in enumerate(ign["matrix"][row_i]):
                    key = f"goal_{j}" if j < len(ign["matrix"][row_i]) - 1 else "timeout"
                    row[key] = frac
                ign_rows.append(row)
    if ign_rows:
        fields = [k for k in ign_rows[0] if not k.startswith("goal_") and k != "timeout"]
        goal_cols = sorted({k for r in ign_rows for k in r if k.startswith("goal_")},
                           key=lambda s: int(s.split("_")[1]))
        _write_csv(out_dir / "ignorance.csv",
                   fields + goal_cols + ["timeout"], ign_rows)
    return {"runs": comp_rows, "out_dir": str(out_dir)}
