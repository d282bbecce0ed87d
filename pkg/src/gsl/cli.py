"""Command line front end.

One subcommand per experiment mode plus two offline tools (plateau-analyze,
report). Configs come from a preset name or a YAML path via --config, with
--set key=value overrides applied in order; --seed and --parallel are
shorthands that win over --set. Output lands under --out, or under
$GSL_OUT_ROOT (default ./runs) in a directory named after the config and
mode.

Exit codes: 0 ok, 2 bad config or arguments, 3 runtime failure,
4 not enough demonstrations cleared the return threshold.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

from .config import apply_overrides, resolve_config, validate_config
from .errors import ConfigError, GslError, InsufficientDemosError
from .metrics import read_metrics
from .orchestrator import (DEFAULT_TIMING_THRESHOLD, ablate_k, ablate_lfd,
                           ablate_timing, run_baseline, run_gsl)
from .plateau import PlateauConfig, ReturnCurve, confirmed_trigger, detect_plateau
from .report import build_report

RUN_COMMANDS = ("gsl", "baseline", "specialists-only",
                "ablate-k", "ablate-timing", "ablate-lfd")


def _out_root():
    return Path(os.environ.get("GSL_OUT_ROOT", "runs"))


def _add_run_flags(p):
    p.add_argument("--config", default="brushmaze-ppo-dapg",
                   help="preset name or YAML config path")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="config override, repeatable")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallel", type=int, default=None,
                   help="specialist worker processes")
    p.add_argument("--out", default=None, help="run directory")
    p.add_argument("--resume", default=None, metavar="DIR",
                   help="continue an interrupted run directory")


def build_parser():
    p = argparse.ArgumentParser(prog="gsl")
    sub = p.add_subparsers(dest="command", required=True)

    for name, blurb in (
            ("gsl", "full pipeline: generalist, specialists, consolidation"),
            ("baseline", "generalist only, same total step budget"),
            ("specialists-only", "stop after specialist training"),
            ("ablate-k", "sweep variations-per-specialist"),
            ("ablate-timing", "plateau-init vs from-scratch specialists"),
            ("ablate-lfd", "compare consolidation methods on one shared run")):
        sp = sub.add_parser(name, help=blurb)
        _add_run_flags(sp)
        if name == "ablate-k":
            sp.add_argument("--ks", required=True,
                            help="comma-separated K values, e.g. 1,2,5")
        if name == "ablate-timing":
            sp.add_argument("--threshold", type=float,
                            default=DEFAULT_TIMING_THRESHOLD,
                            help="specialist return counted as solved")
        if name == "ablate-lfd":
            sp.add_argument("--methods", default=None,
                            help="comma-separated subset of dapg,gail,bc")

    pa = sub.add_parser("plateau-analyze",
                        help="offline plateau scan of a metrics CSV")
    pa.add_argument("csv", help="metrics CSV with a mean_return column")
    pa.add_argument("--kernel", type=int, default=10)
    pa.add_argument("--window", type=int, default=50)
    pa.add_argument("--epsilon", type=float, default=0.01)
    pa.add_argument("--guard", type=float, default=0.15)
    pa.add_argument("--budget", type=int, default=None,
                    help="planned phase length in epochs (default: curve length)")
    pa.add_argument("--column", default="mean_return")

    rp = sub.add_parser("report", help="aggregate finished runs into CSV tables")
    rp.add_argument("run_dirs", nargs="+")
    rp.add_argument("--out", default=None, help="output directory")
    return p


def _build_config(args):
    cfg = resolve_config(args.config)
    assignments = list(args.overrides)
    if args.seed is not None:
        assignments.append(f"seed={args.seed}")
    if args.parallel is not None:
        assignments.append(f"parallel={args.parallel}")
    cfg = apply_overrides(cfg, assignments)
    validate_config(cfg)
    return cfg


def _run_dir(args, cfg):
    if args.resume:
        return Path(args.resume)
    if args.out:
        return Path(args.out)
    return _out_root() / f"{cfg.name}-{args.command}-s{cfg.seed}"


def _parse_ints(text):
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}")


def _dispatch(args):
    if args.command == "plateau-analyze":
        return _cmd_plateau_analyze(args)
    if args.command == "report":
        out = Path(args.out) if args.out else _out_root() / "report"
        summary = build_report(args.run_dirs, out)
        for row in summary["runs"]:
            print(f"{row['run']}: label={row['label']} "
                  f"final={row['mean_return_after']}")
        print(f"report tables in {summary['out_dir']}")
        return 0

    resume = args.resume is not None
    if resume:
        run_dir = Path(args.resume)
        if not (run_dir / "plan.json").exists() and args.command in ("gsl", "baseline", "specialists-only"):
            raise ConfigError(f"{run_dir} has no plan to resume")
        # ablations keep per-arm plans in subdirectories; the driver itself
        # restarts from whatever those plans say, so the config must be
        # rebuilt from the same flags as the original invocation
        cfg = _build_config(args)
    else:
        cfg = _build_config(args)
    run_dir = _run_dir(args, cfg)

    if args.command == "gsl":
        report = run_gsl(cfg, run_dir, resume=resume)
    elif args.command == "baseline":
        report = run_baseline(cfg, run_dir, resume=resume)
    elif args.command == "specialists-only":
        report = run_gsl(cfg, run_dir, resume=resume, stop_after="specialists")
    elif args.command == "ablate-k":
        report = ablate_k(cfg, run_dir, _parse_ints(args.ks))
    elif args.command == "ablate-timing":
        report = ablate_timing(cfg, run_dir, threshold=args.threshold)
    elif args.command == "ablate-lfd":
        methods = args.methods.split(",") if args.methods else None
        report = ablate_lfd(cfg, run_dir, methods=methods)
    else:  # pragma: no cover
        raise ConfigError(f"unknown command {args.command}")

    print(json.dumps(_summary_line(args.command, report), indent=2, default=str))
    print(f"run directory: {run_dir}")
    return 0


def _summary_line(command, report):
    """Trim the full report down to what someone scans at the prompt."""
    if not isinstance(report, dict):
        return {"result": report}
    keep = ("mode", "env", "backbone", "lfd_method", "seed", "total_steps",
            "mean_return_after", "success_after", "stopped_after", "phase1",
            "modes", "methods", "ks")
    out = {k: report[k] for k in keep if k in report}
    return out or report


def _cmd_plateau_analyze(args):
    cols = read_metrics(args.csv)
    if args.column not in cols:
        raise ConfigError(f"{args.csv} has no column {args.column!r} "
                          f"(have: {', '.join(cols)})")
    curve = ReturnCurve(cols[args.column])
    cfg = PlateauConfig(kernel=args.kernel, window=args.window,
                        epsilon=args.epsilon, guard=args.guard)
    budget = args.budget if args.budget is not None else len(curve)
    t = detect_plateau(curve, cfg, budget)
    if t is None:
        print(f"no plateau in {len(curve)} epochs (budget {budget})")
        return 0
    confirmed = confirmed_trigger(curve, cfg, budget)
    tail = "confirmed" if confirmed == t else "not yet confirmable at curve end"
    print(f"plateau at epoch {t} ({tail})")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except InsufficientDemosError as e:
        print(f"insufficient demos: {e}", file=sys.stderr)
        return 4
    except GslError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
