"""The generalist-specialist pipeline: one state machine, five phases.

Phase order: generalist-I (train until the plateau criterion confirms or the
phase budget runs out) -> select (per-variation evaluation, pick the weakest
variations, split them into subsets, optionally fine-tune on them) ->
specialists (one job per subset, parallelizable) -> demos (threshold-filtered
trajectories from each specialist plus the generalist on the variations it
keeps) -> generalist-II (resume generalist training with the configured
demonstration mechanism) -> done.

A run directory is self-describing:

    config.yaml          canonical config snapshot
    plan.json            state machine + counters (resumability)
    metrics/*.csv        one file per phase / specialist
    checkpoints/<name>/  parameter bundles (policy.ckpt, value.ckpt, ...)
    demos/*.demo         per-source inventories plus merged.demo
    evals/*.json         specialist evaluation curves
    state/               mid-phase resume snapshots (phase I only)
    report.json          final machine-readable summary

Every random stream is derived from the config seed and a fixed label, so any
phase or job rerun in isolation reproduces its original output regardless of
scheduling. The plan file is written only by the supervising process. Crash
recovery is two-tier: phase I snapshots mid-phase (it holds most of the
budget); every other phase restarts from its committed inputs, which the
labeled streams make bit-reproducible.
"""

from __future__ import annotations

import json
import math
import shutil
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .agents import (
    EnvPool, PpoAgent, ReplayBuffer, SacAgent, train_ppo_phase, train_sac_phase,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    apply_overrides, config_from_dict, config_to_dict, dump_config,
    load_config, validate_config,
)
from .demos import (
    DemoMeta, DemoSampler, load_inventory, merge_and_load, record_and_filter,
    save_inventory,
)
from .envs import make_env
from .envs.base import evaluate_per_variation
from .errors import ConfigError, ContractError
from .lfd import (
    Discriminator, make_demo_hook_factory, make_disc_hook, make_reward_hook,
    bc_update,
)
from .metrics import MetricsWriter, read_metrics
from .nets import MlpSpec
from .optim import AdamState
from .plateau import ReturnCurve, confirmed_trigger, detect_plateau
from .seeding import capture_state, restore_state, stream

PHASES = ("generalist-I", "select", "specialists", "demos", "generalist-II", "done")
PLATEAU_CHECK_EVERY = 10   # epochs between online criterion evaluations
SNAPSHOT_EVERY = 25        # epochs between mid-phase resume snapshots
DEFAULT_TIMING_THRESHOLD = -25.0


# --------------------------------------------------------------- run layout

class RunPaths:

    def __init__(self, root):
        self.root = Path(root)
        self.config = self.root / "config.yaml"
        self.plan = self.root / "plan.json"
        self.metrics = self.root / "metrics"
        self.checkpoints = self.root / "checkpoints"
        self.demos = self.root / "demos"
        self.evals = self.root / "evals"
        self.state = self.root / "state"
        self.report = self.root / "report.json"

    def ensure(self):
        for d in (self.root, self.metrics, self.checkpoints, self.demos,
                  self.evals, self.state):
            d.mkdir(parents=True, exist_ok=True)

    def agent_dir(self, name):
        return self.checkpoints / name

    def phase_csv(self, name):
        return self.metrics / f"{name}.csv"


def _write_json(path, data):
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(data, indent=1, sort_keys=True, default=_jsonable))
    tmp.replace(path)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON-serializable: {type(x)}")


def _tuplize(x):
    if isinstance(x, (list, tuple)):
        return tuple(_tuplize(e) for e in x)
    return x


# ----------------------------------------------------------------- the plan

class GslPlan:
    """Orchestrator state: current phase, selections, and step counters."""

    def __init__(self, data):
        self.data = data

    @classmethod
    def fresh(cls, seed, stop_after=None):
        if stop_after is not None and stop_after not in PHASES:
            raise ContractError(f"unknown stop_after phase {stop_after!r}")
        return cls({
            "version": 1,
            "phase": "generalist-I",
            "seed": int(seed),
            "stop_after": stop_after,
            "counters": {"phase1": 0, "finetune_low": 0, "specialists": 0,
                         "demos": 0, "phase2": 0},
            "phase1": {"epochs": None, "plateau_epoch": None,
                       "confirmed_at": None, "early_exit": False},
            "returns_by_variation": None,
            "e_low": None,
            "subsets": None,
            "finetuned_low": False,
            "specialists_done": [],
            "specialist_results": {},
            "demos_done": False,
            "demo_files": [],
        })

    @classmethod
    def load(cls, path):
        return cls(json.loads(Path(path).read_text()))

    def save(self, path):
        _write_json(path, self.data)

    @property
    def phase(self):
        return self.data["phase"]

    @property
    def total_steps(self):
        return sum(self.data["counters"].values())

    def advance(self, completed, next_phase):
        """Move past `completed`, honoring a configured early stop."""
        if self.data["stop_after"] == completed:
            self.data["phase"] = "done"
            self.data["stopped_after"] = completed
        else:
            self.data["phase"] = next_phase


# ----------------------------------------------------- selection & splitting

def select_lowest_variations(returns_by_variation, n_low):
    """Ids of the n_low worst variations, ties broken by ascending id."""
    items = [(int(v), float(r)) for v, r in dict(returns_by_variation).items()]
    if n_low > len(items):
        raise ContractError(
            f"asked for {n_low} variations but only {len(items)} were scored")
    items.sort(key=lambda vr: (vr[1], vr[0]))
    return sorted(v for v, _ in items[:n_low])


def split_into_subsets(e_low, n_subsets):
    """Contiguous chunks of the sorted ids, sizes within one of each other."""
    ids = sorted(int(v) for v in e_low)
    if n_subsets < 1 or n_subsets > len(ids):
        raise ContractError(
            f"cannot split {len(ids)} variations into {n_subsets} subsets")
    base, rem = divmod(len(ids), n_subsets)
    out, at = [], 0
    for i in range(n_subsets):
        size = base + (1 if i < rem else 0)
        out.append(ids[at:at + size])
        at += size
    return out


def _share(total, n_parts, i):
    """i-th share of `total` split as evenly as the subset rule."""
    base, rem = divmod(int(total), n_parts)
    return base + (1 if i < rem else 0)


# --------------------------------------------------------------- evaluation

def _restricted_ids(cfg, probe):
    if cfg.env.variations is not None:
        return sorted(int(v) for v in cfg.env.variations)
    return list(range(probe.num_variations))


def _eval_policy(cfg, policy_fn, rng, variations):
    env = make_env(cfg.env.name, **cfg.env_kwargs())
    return evaluate_per_variation(policy_fn, env, cfg.gsl.eval_episodes, rng,
                                  variations=variations)


def ignorance_report(policy_fn, env, episodes_per_variation, rng, variations=None):
    """Context-vs-terminal-outcome matrix plus its mode concentration.

    Row i is the fraction of variation-i episodes ending in each terminal
    bucket (one column per variation, last column = never reached any goal).
    Concentration is the largest column mean over the goal columns: 1/n for a
    context-correct policy, 1.0 for a policy that always commits to one goal.
    """
    if episodes_per_variation < 20:
        raise ContractError("ignorance report needs at least 20 episodes per variation")
    ids = list(range(env.num_variations)) if variations is None else sorted(variations)
    res = evaluate_per_variation(policy_fn, env, episodes_per_variation, rng,
                                 variations=ids)
    matrix = res.outcome_counts[ids] / float(episodes_per_variation)
    concentration = float(np.max(np.mean(matrix[:, :env.num_variations], axis=0)))
    return {
        "variations": ids,
        "matrix": [[float(c) for c in row] for row in matrix],
        "episodes_per_variation": int(episodes_per_variation),
        "concentration": concentration,
    }


# ------------------------------------------------------- agents on disk

def _action_width(probe):
    """Policy output width: action dimension, or the action count for
    discrete envs (which expose n_actions instead)."""
    if probe.action_kind == "continuous":
        return int(probe.action_dim)
    return int(probe.n_actions)


def _ppo_specs(cfg, probe):
    head = "gaussian" if probe.action_kind == "continuous" else "categorical"
    policy = MlpSpec(probe.obs_dim, _action_width(probe), cfg.net.hidden,
                     head=head, min_std=cfg.net.min_std, max_std=cfg.net.max_std)
    value = MlpSpec(probe.obs_dim, 1, cfg.net.hidden, head="scalar")
    return policy, value


def fresh_agent(cfg, probe, rng):
    if cfg.backbone == "ppo":
        return PpoAgent.fresh(*_ppo_specs(cfg, probe), rng)
    return SacAgent.fresh(probe.obs_dim, probe.action_dim, cfg.net.hidden, rng,
                          min_std=cfg.net.min_std, max_std=cfg.net.max_std,
                          alpha_init=cfg.sac.alpha_init)


def save_agent(dir_path, agent, meta=None):
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    if isinstance(agent, PpoAgent):
        save_checkpoint(dir_path / "policy.ckpt", agent.policy,
                        agent.policy_opt, meta)
        save_checkpoint(dir_path / "value.ckpt", agent.value, agent.value_opt)
    else:
        save_checkpoint(dir_path / "actor.ckpt", agent.actor, agent.actor_opt, meta)
        save_checkpoint(dir_path / "q1.ckpt", agent.q1, agent.q1_opt)
        save_checkpoint(dir_path / "q2.ckpt", agent.q2, agent.q2_opt)
        save_checkpoint(dir_path / "q1_targ.ckpt", agent.q1_targ)
        save_checkpoint(dir_path / "q2_targ.ckpt", agent.q2_targ)
        save_checkpoint(dir_path / "log_alpha.ckpt", agent.log_alpha, agent.alpha_opt)


def load_agent(cfg, probe, dir_path):
    dir_path = Path(dir_path)
    if cfg.backbone == "ppo":
        pspec, vspec = _ppo_specs(cfg, probe)
        p, p_opt, meta = load_checkpoint(dir_path / "policy.ckpt")
        v, v_opt, _ = load_checkpoint(dir_path / "value.ckpt")
        return PpoAgent(pspec, vspec, p, v, p_opt, v_opt), meta
    actor, a_opt, meta = load_checkpoint(dir_path / "actor.ckpt")
    q1, q1_opt, _ = load_checkpoint(dir_path / "q1.ckpt")
    q2, q2_opt, _ = load_checkpoint(dir_path / "q2.ckpt")
    q1t, _, _ = load_checkpoint(dir_path / "q1_targ.ckpt")
    q2t, _, _ = load_checkpoint(dir_path / "q2_targ.ckpt")
    log_alpha, al_opt, _ = load_checkpoint(dir_path / "log_alpha.ckpt")
    ref = SacAgent.fresh(probe.obs_dim, probe.action_dim, cfg.net.hidden,
                         np.random.default_rng(0), min_std=cfg.net.min_std,
                         max_std=cfg.net.max_std)
    agent = SacAgent(ref.actor_spec, ref.q_spec, actor, q1, q2, q1t, q2t,
                     log_alpha, a_opt, q1_opt, q2_opt, al_opt)
    return agent, meta


def _snapshot_agent(agent):
    """In-memory parameter copy for best-checkpoint tracking."""
    if isinstance(agent, PpoAgent):
        return (agent.policy.copy(), agent.value.copy())
    return (agent.actor.copy(), agent.q1.copy(), agent.q2.copy(),
            agent.q1_targ.copy(), agent.q2_targ.copy(), agent.log_alpha.copy())


def _restore_agent(agent, snap):
    if isinstance(agent, PpoAgent):
        agent.policy, agent.value = snap[0].copy(), snap[1].copy()
    else:
        (agent.actor, agent.q1, agent.q2, agent.q1_targ, agent.q2_targ,
         agent.log_alpha) = tuple(s.copy() for s in snap)


# ------------------------------------------------------ pools, rng plumbing

def _make_pool(cfg, label, seed, variations, num_envs):
    factory = cfg.make_env_fn()
    rngs = [stream(seed, f"{label}-env{i}") for i in range(num_envs)]
    return EnvPool(factory, num_envs, rngs, variations=variations)


def _truncate_metrics(path, rows):
    lines = Path(path).read_text().splitlines()
    Path(path).write_text("\n".join(lines[:rows + 1]) + "\n")


def _pool_state_restore(pool, s):
    s = dict(s)
    s["env_states"] = [_tuplize(e) for e in s["env_states"]]
    pool.set_state(s)


# ---------------------------------------------------------- generic trainer

def _generalist_phase(cfg, paths, plan, *, phase_name, csv_name, variations,
                      step_budget, seed_prefix, agent=None, detect=True,
                      extra=None):
    """Train the generalist for up to step_budget env steps.

    Shared by phase I, the optional weak-variation fine-tune, the baseline
    runner, and phase II (which passes the demonstration hooks via `extra`).
    When `agent` is None the phase owns a fresh net and may snapshot mid-phase
    for resume; when an agent is passed in, a crash restarts the whole phase
    from its committed inputs instead. Returns agent, epochs, steps, and
    trigger info.
    """
    extra = extra or {}
    seed = cfg.seed
    probe = make_env(cfg.env.name, **cfg.env_kwargs())
    backbone_cfg = cfg.ppo_config() if cfg.backbone == "ppo" else cfg.sac_config()
    spe = backbone_cfg.samples_per_epoch
    epoch_budget = step_budget // spe
    pcfg = cfg.plateau_config()
    csv_path = paths.phase_csv(csv_name)
    resume_file = paths.state / f"{phase_name}.resume.json"
    replay_file = paths.state / f"{phase_name}.replay.npz"
    snapshots = agent is None

    act_rng = stream(seed, f"{seed_prefix}-act")
    shuffle_rng = stream(seed, f"{seed_prefix}-shuffle")
    update_rng = stream(seed, f"{seed_prefix}-update")
    pool = _make_pool(cfg, seed_prefix, seed, variations, backbone_cfg.num_envs)
    replay = None
    if cfg.backbone == "sac":
        replay = ReplayBuffer(backbone_cfg.replay_capacity, probe.obs_dim,
                              probe.action_dim)
    sac_counters = {}

    epoch0, steps0 = 0, 0
    if snapshots:
        if resume_file.exists() and csv_path.exists():
            snap = json.loads(resume_file.read_text())
            agent, _ = load_agent(cfg, probe, paths.state / f"{phase_name}_agent")
            restore_state(act_rng, snap["act_rng"])
            restore_state(shuffle_rng, snap["shuffle_rng"])
            restore_state(update_rng, snap["update_rng"])
            _pool_state_restore(pool, snap["pool"])
            if replay is not None and replay_file.exists():
                with np.load(replay_file) as z:
                    replay.set_state({k: z[k] for k in z.files})
            sac_counters.update(snap.get("sac_counters", {}))
            epoch0, steps0 = snap["epoch"], snap["steps"]
            _truncate_metrics(csv_path, epoch0)
        else:
            agent = fresh_agent(cfg, probe, stream(seed, "init"))
            save_agent(paths.agent_dir("init"), agent, {"phase": phase_name})
            if csv_path.exists():
                csv_path.unlink()
    elif csv_path.exists():
        csv_path.unlink()

    writer = MetricsWriter(csv_path, extra_columns=extra.get("columns", ()))
    disc_hook = None
    if extra.get("disc_hook_builder") is not None:
        disc_hook = extra["disc_hook_builder"](replay)

    result = {"plateau_epoch": None, "confirmed_at": None, "early_exit": False}
    ref = cfg.gsl.optimal_return
    bar = None if ref is None else cfg.gsl.early_exit_fraction * ref

    def on_epoch_end(epoch, total_steps):
        stop = False
        returns = read_metrics(csv_path)["mean_return"]
        if bar is not None and len(returns) >= 1:
            recent = float(np.mean(returns[-min(10, len(returns)):]))
            if recent >= bar:
                result["early_exit"] = True
                stop = True
        if (detect and not stop and epoch % PLATEAU_CHECK_EVERY == 0
                and len(returns) >= 2 and np.all(np.isfinite(returns))):
            t = confirmed_trigger(ReturnCurve(returns), pcfg, epoch_budget)
            if t is not None:
                result["plateau_epoch"] = int(t)
                result["confirmed_at"] = int(epoch)
                stop = True
        if (snapshots and not stop and epoch % SNAPSHOT_EVERY == 0
                and epoch < epoch_budget):
            save_agent(paths.state / f"{phase_name}_agent", agent)
            if replay is not None:
                np.savez(replay_file, **replay.get_state())
            _write_json(resume_file, {
                "epoch": epoch, "steps": total_steps,
                "act_rng": capture_state(act_rng),
                "shuffle_rng": capture_state(shuffle_rng),
                "update_rng": capture_state(update_rng),
                "pool": pool.get_state(),
                "sac_counters": dict(sac_counters),
            })
        return stop

    if cfg.backbone == "ppo":
        epochs, steps = train_ppo_phase(
            agent, pool, backbone_cfg, writer, act_rng, shuffle_rng,
            max_epochs=epoch_budget, epoch_offset=epoch0, samples_offset=steps0,
            demo_hook_factory=extra.get("demo_hook_factory"),
            on_epoch_end=on_epoch_end)
    else:
        steps, epochs = train_sac_phase(
            agent, pool, replay, backbone_cfg, writer, act_rng, update_rng,
            total_steps=epoch_budget * spe, steps_offset=steps0,
            epoch_offset=epoch0, reward_hook=extra.get("reward_hook"),
            demo_arrays=extra.get("demo_arrays"),
            demo_fraction=extra.get("demo_fraction", 0.0),
            disc_hook=disc_hook, disc_every=extra.get("disc_every", 100),
            on_epoch_end=on_epoch_end, counters=sac_counters)

    if resume_file.exists():
        resume_file.unlink()
    if replay_file.exists():
        replay_file.unlink()
    agent_snap = paths.state / f"{phase_name}_agent"
    if agent_snap.exists():
        shutil.rmtree(agent_snap)
    result.update({"agent": agent, "epochs": epochs, "steps": steps})
    return result


# ------------------------------------------------------------- phase I

def _run_phase1(cfg, paths, plan):
    probe = make_env(cfg.env.name, **cfg.env_kwargs())
    budget = cfg.phase1_step_budget()
    detect = True
    if cfg.gsl.specialist_launch_epoch is not None:
        budget = min(budget, cfg.gsl.specialist_launch_epoch * cfg.samples_per_epoch)
        detect = False
    out = _generalist_phase(cfg, paths, plan, phase_name="phase1",
                            csv_name="phase1",
                            variations=_restricted_ids(cfg, probe),
                            step_budget=budget, seed_prefix="phase1",
                            detect=detect)
    save_agent(paths.agent_dir("plateau"), out["agent"],
               {"phase": "phase1", "epochs": out["epochs"],
                "plateau_epoch": out["plateau_epoch"]})
    plan.data["counters"]["phase1"] = int(out["steps"])
    plan.data["phase1"] = {
        "epochs": int(out["epochs"]),
        "plateau_epoch": out["plateau_epoch"],
        "confirmed_at": out["confirmed_at"],
        "early_exit": bool(out["early_exit"]),
    }
    if out["early_exit"]:
        save_agent(paths.agent_dir("final"), out["agent"], {"phase": "phase1"})
        plan.data["phase"] = "done"
    else:
        plan.advance("generalist-I", "select")


# ------------------------------------------------------------- select phase

def _run_select(cfg, paths, plan):
    probe = make_env(cfg.env.name, **cfg.env_kwargs())
    ids = _restricted_ids(cfg, probe)
    agent, _ = load_agent(cfg, probe, paths.agent_dir("plateau"))
    res = _eval_policy(cfg, agent.policy_fn(deterministic=True),
                       stream(cfg.seed, "select-eval"), ids)
    returns = {v: float(res.mean_returns[v]) for v in ids}
    e_low = select_lowest_variations(returns, cfg.gsl.n_low)
    subsets = split_into_subsets(e_low, cfg.gsl.n_specialists)
    plan.data["returns_by_variation"] = {str(v): r for v, r in returns.items()}
    plan.data["success_by_variation"] = {str(v): float(res.success_rates[v])
                                         for v in ids}
    plan.data["e_low"] = e_low
    plan.data["subsets"] = subsets

    if cfg.gsl.finetune_low and cfg.gsl.finetune_low_steps > 0:
        out = _generalist_phase(cfg, paths, plan, phase_name="finetune_low",
                                csv_name="finetune_low", variations=e_low,
                                step_budget=cfg.gsl.finetune_low_steps,
                                seed_prefix="flow", agent=agent, detect=False)
        save_agent(paths.agent_dir("finetuned_low"), out["agent"],
                   {"phase": "finetune_low"})
        plan.data["counters"]["finetune_low"] = int(out["steps"])
        plan.data["finetuned_low"] = True
    plan.advance("select", "specialists")


# -------------------------------------------------------- specialist phase

def run_specialist_job(run_dir, cfg_data, job):
    """Train one specialist on its variation subset; fully self-contained.

    Runs in a worker process when parallelism > 1, so everything it needs
    arrives as plain data and everything it produces lands on disk; the
    returned summary is what the supervisor folds into the plan.
    """
    cfg = config_from_dict(cfg_data)
    paths = RunPaths(run_dir)
    probe = make_env(cfg.env.name, **cfg.env_kwargs())
    i = int(job["id"])
    subset = [int(v) for v in job["subset"]]
    seed = cfg.seed
    backbone_cfg = cfg.ppo_config() if cfg.backbone == "ppo" else cfg.sac_config()
    spe = backbone_cfg.samples_per_epoch
    epoch_budget = int(job["steps"]) // spe

    if job["init"] == "fresh":
        agent = fresh_agent(cfg, probe, stream(seed, f"spec{i}-init"))
    else:
        src = "finetuned_low" if job["init"] == "finetuned-low" else "plateau"
        agent, _ = load_agent(cfg, probe, paths.agent_dir(src))

    prefix = f"spec{i}"
    act_rng = stream(seed, f"{prefix}-act")
    shuffle_rng = stream(seed, f"{prefix}-shuffle")
    update_rng = stream(seed, f"{prefix}-update")
    pool = _make_pool(cfg, prefix, seed, subset, backbone_cfg.num_envs)
    csv_path = paths.phase_csv(f"specialist_{i}")
    if csv_path.exists():
        csv_path.unlink()
    writer = MetricsWriter(csv_path)
    eval_env = make_env(cfg.env.name, **cfg.env_kwargs())

    curve = []
    best = {"return": -np.inf, "epoch": -1, "snap": None, "per_variation": None}

    def evaluate(epoch, steps):
        res = evaluate_per_variation(agent.policy_fn(deterministic=True),
                                     eval_env, cfg.gsl.eval_episodes,
                                     stream(seed, f"{prefix}-eval{epoch}"),
                                     variations=subset)
        mean = float(np.mean(res.mean_returns[subset]))
        curve.append({"epoch": int(epoch), "steps": int(steps),
                      "mean_return": mean,
                      "per_variation": {str(v): float(res.mean_returns[v])
                                        for v in subset}})
        if mean > best["return"]:
            best.update({"return": mean, "epoch": int(epoch),
                         "snap": _snapshot_agent(agent),
                         "per_variation": curve[-1]["per_variation"]})

    def on_epoch_end(epoch, steps):
        if epoch % cfg.gsl.eval_every == 0 or epoch == epoch_budget:
            evaluate(epoch, steps)
        return False

    if cfg.backbone == "ppo":
        epochs, steps = train_ppo_phase(agent, pool, backbone_cfg, writer,
                                        act_rng, shuffle_rng,
                                        max_epochs=epoch_budget,
                                        on_epoch_end=on_epoch_end)
    else:
        replay = ReplayBuffer(backbone_cfg.replay_capacity, probe.obs_dim,
                              probe.action_dim)
        steps, epochs = train_sac_phase(agent, pool, replay, backbone_cfg,
                                        writer, act_rng, update_rng,
                                        total_steps=epoch_budget * spe,
                                        on_epoch_end=on_epoch_end)
    if best["snap"] is None:
        evaluate(epochs, steps)
    _restore_agent(agent, best["snap"])
    save_agent(paths.agent_dir(f"specialist_{i}_best"), agent,
               {"specialist": i, "subset": subset, "best_epoch": best["epoch"]})
    summary = {
        "id": i, "subset": subset, "steps": int(steps),
        "best_epoch": best["epoch"], "best_return": best["return"],
        "best_per_variation": best["per_variation"],
    }
    _write_json(paths.evals / f"specialist_{i}.json",
                {"summary": summary, "curve": curve})
    return summary


def _run_specialists(cfg, paths, plan):
    init_mode = cfg.gsl.specialist_init
    if init_mode == "finetuned-low" and not plan.data["finetuned_low"]:
        raise ConfigError("specialist init finetuned-low requested but no "
                          "fine-tuned checkpoint was produced")
    done = set(int(i) for i in plan.data["specialists_done"])
    jobs = []
    for i, subset in enumerate(plan.data["subsets"]):
        if i in done:
            continue
        jobs.append({"id": i, "subset": subset, "init": init_mode,
                     "steps": cfg.gsl.specialist_steps})
    cfg_data = config_to_dict(cfg)

    def fold(summary):
        i = int(summary["id"])
        plan.data["specialist_results"][str(i)] = summary
        done.add(i)
        plan.data["specialists_done"] = sorted(done)
        plan.data["counters"]["specialists"] = int(
            sum(r["steps"] for r in plan.data["specialist_results"].values()))
        plan.save(paths.plan)

    if cfg.parallel == 1 or len(jobs) <= 1:
        for job in jobs:
            fold(run_specialist_job(str(paths.root), cfg_data, job))
    else:
        with ProcessPoolExecutor(max_workers=cfg.parallel) as ex:
            futures = [ex.submit(run_specialist_job, str(paths.root),
                                 cfg_data, job) for job in jobs]
            for f in futures:
                fold(f.result())
    plan.advance("specialists", "demos")


# ------------------------------------------------------------- demos phase

def _run_demos(cfg, paths, plan):
    probe = make_env(cfg.env.name, **cfg.env_kwargs())
    meta = DemoMeta.from_env(probe, cfg.env.name)
    seed = cfg.seed
    n_s = len(plan.data["subsets"])
    attempted_total = 0
    files = []
    for i, subset in enumerate(plan.data["subsets"]):
        target = _share(cfg.gsl.demo_steps_specialists, n_s, i)
        if target == 0:
            continue
        agent, _ = load_agent(cfg, probe, paths.agent_dir(f"specialist_{i}_best"))
        env = make_env(cfg.env.name, **cfg.env_kwargs())
        inv, attempted = record_and_filter(
            agent.policy_fn(deterministic=True), env, subset, target,
            cfg.lfd.tau, stream(seed, f"demo-spec{i}"), meta=meta,
            source="specialist", checkpoint_id=f"specialist_{i}_best")
        path = paths.demos / f"specialist_{i}.demo"
        save_inventory(inv, path)
        files.append(str(path.relative_to(paths.root)))
        attempted_total += attempted

    kept = [v for v in _restricted_ids(cfg, probe)
            if v not in set(plan.data["e_low"])]
    if kept and cfg.gsl.demo_steps_generalist > 0:
        agent, _ = load_agent(cfg, probe, paths.agent_dir("plateau"))
        env = make_env(cfg.env.name, **cfg.env_kwargs())
        inv, attempted = record_and_filter(
            agent.policy_fn(deterministic=True), env, kept,
            cfg.gsl.demo_steps_generalist, cfg.lfd.tau,
            stream(seed, "demo-gen"), meta=meta, source="generalist",
            checkpoint_id="plateau")
        path = paths.demos / "generalist.demo"
        save_inventory(inv, path)
        files.append(str(path.relative_to(paths.root)))
        attempted_total += attempted

    if files:
        merged = merge_and_load([paths.root / f for f in files])
        save_inventory(merged, paths.demos / "merged.demo")
    plan.data["demo_files"] = files
    plan.data["demos_done"] = True
    plan.data["counters"]["demos"] = int(attempted_total)
    plan.advance("demos", "generalist-II")


# ----------------------------------------------------------- phase II

def _run_phase2(cfg, paths, plan):
    probe = make_env(cfg.env.name, **cfg.env_kwargs())
    method = cfg.lfd.method
    if cfg.backbone == "ppo" and method == "gail":
        raise ConfigError("lfd.method: gail needs the off-policy backbone (sac)")
    if cfg.backbone == "sac" and method == "dapg":
        raise ConfigError("lfd.method: dapg needs the on-policy backbone (ppo)")
    agent, _ = load_agent(cfg, probe, paths.agent_dir("plateau"))
    ids = _restricted_ids(cfg, probe)
    budget = cfg.gsl.consolidation_steps

    if method == "bc":
        steps = _consolidate_bc(cfg, paths, agent, probe)
    else:
        extra = {}
        if method == "dapg" and cfg.lfd.omega > 0.0:
            inv = load_inventory(paths.demos / "merged.demo")
            sampler = DemoSampler(inv, stream(cfg.seed, "phase2-demo"))
            extra = {"demo_hook_factory":
                     make_demo_hook_factory(agent, sampler, cfg.dapg_config()),
                     "columns": ("demo_loss",)}
        elif method == "gail" and cfg.lfd.beta < 1.0:
            inv = load_inventory(paths.demos / "merged.demo")
            gcfg = cfg.gail_config()
            disc = Discriminator(probe.obs_dim, probe.action_dim,
                                 cfg.net.hidden, stream(cfg.seed, "disc-init"),
                                 clamp=gcfg.clamp)
            sampler = DemoSampler(inv, stream(cfg.seed, "phase2-demo"))
            extra = {"reward_hook": make_reward_hook(disc, gcfg.beta),
                     "demo_arrays": inv.packed(),
                     "demo_fraction": gcfg.demo_fraction,
                     "disc_hook_builder":
                     lambda replay: make_disc_hook(disc, replay, sampler, gcfg),
                     "disc_every": gcfg.disc_every,
                     "columns": ("disc_loss", "mean_D_policy", "mean_D_demo")}
        out = _generalist_phase(cfg, paths, plan, phase_name="phase2",
                                csv_name="phase2", variations=ids,
                                step_budget=budget, seed_prefix="phase2",
                                agent=agent, detect=False, extra=extra)
        steps = out["steps"]
    save_agent(paths.agent_dir("final"), agent,
               {"phase": "phase2", "method": method})
    plan.data["counters"]["phase2"] = int(steps)
    plan.advance("generalist-II", "done")


def _consolidate_bc(cfg, paths, agent, probe):
    """Supervised consolidation: same gradient-step count as the on-policy
    phase would get, zero environment steps charged."""
    inv = load_inventory(paths.demos / "merged.demo")
    sampler = DemoSampler(inv, stream(cfg.seed, "phase2-demo"))
    pcfg = cfg.ppo_config()
    epochs = cfg.gsl.consolidation_steps // pcfg.samples_per_epoch
    updates_per_epoch = pcfg.inner_epochs * (pcfg.samples_per_epoch // pcfg.minibatch)
    spec = agent.policy_spec if isinstance(agent, PpoAgent) else agent.actor_spec
    params = agent.policy if isinstance(agent, PpoAgent) else agent.actor
    opt = AdamState(params.size)   # new objective, clean optimizer moments
    csv_path = paths.phase_csv("phase2")
    if csv_path.exists():
        csv_path.unlink()
    writer = MetricsWriter(csv_path, extra_columns=("demo_loss",))
    eval_env = make_env(cfg.env.name, **cfg.env_kwargs())
    ids = _restricted_ids(cfg, probe)
    for epoch in range(epochs):
        demo_loss = 0.0
        for _ in range(updates_per_epoch):
            stats = bc_update(spec, params, opt, sampler, cfg.lfd.bc_batch,
                              cfg.lfd.bc_lr)
            demo_loss += stats["demo_loss"]
        res = evaluate_per_variation(agent.policy_fn(deterministic=True),
                                     eval_env, 2,
                                     stream(cfg.seed, f"phase2-eval{epoch}"),
                                     variations=ids)
        rets = np.concatenate([res.episode_returns[v] for v in ids])
        writer.append({
            "epoch": epoch, "total_samples": 0,
            "mean_return": float(np.mean(rets)),
            "std_return": float(np.std(rets)),
            "success_rate": float(np.mean(res.success_rates[ids])),
            "policy_loss": demo_loss / updates_per_epoch,
            "value_loss": 0.0, "entropy": 0.0,
            "demo_loss": demo_loss / updates_per_epoch,
        })
    return 0


# ------------------------------------------------------------ final report

def _finalize(cfg, paths, plan):
    probe = make_env(cfg.env.name, **cfg.env_kwargs())
    ids = _restricted_ids(cfg, probe)
    final_dir = paths.agent_dir("final")
    if not final_dir.exists():
        final_dir = paths.agent_dir("plateau")
    agent, _ = load_agent(cfg, probe, final_dir)
    res = _eval_policy(cfg, agent.policy_fn(deterministic=True),
                       stream(cfg.seed, "final-eval"), ids)
    env = make_env(cfg.env.name, **cfg.env_kwargs())
    eps = max(20, cfg.gsl.eval_episodes)
    report = {
        "env": cfg.env.name,
        "backbone": cfg.backbone,
        "lfd_method": cfg.lfd.method,
        "seed": cfg.seed,
        "variations": ids,
        "total_steps": plan.total_steps,
        "phase_steps": plan.data["counters"],
        "phase1": plan.data["phase1"],
        "stopped_after": plan.data.get("stopped_after"),
        "e_low": plan.data["e_low"],
        "subsets": plan.data["subsets"],
        "returns_before": plan.data["returns_by_variation"],
        "success_before": plan.data.get("success_by_variation"),
        "specialists": plan.data["specialist_results"],
        "returns_after": {str(v): float(res.mean_returns[v]) for v in ids},
        "mean_return_after": float(np.mean(res.mean_returns[ids])),
        "success_after": float(np.mean(res.success_rates[ids])),
        "ignorance_after": ignorance_report(
            agent.policy_fn(deterministic=True), env, eps,
            stream(cfg.seed, "final-ignorance"), variations=ids),
    }
    if plan.data["returns_by_variation"] is not None:
        before = [plan.data["returns_by_variation"][str(v)] for v in ids]
        report["mean_return_before"] = float(np.mean(before))
    if paths.agent_dir("plateau").exists() and plan.data["e_low"] is not None:
        pagent, _ = load_agent(cfg, probe, paths.agent_dir("plateau"))
        report["ignorance_before"] = ignorance_report(
            pagent.policy_fn(deterministic=True), env, eps,
            stream(cfg.seed, "plateau-ignorance"), variations=ids)
    _write_json(paths.report, report)
    return report


# ------------------------------------------------------------- entry points

_PHASE_FNS = {
    "generalist-I": _run_phase1,
    "select": _run_select,
    "specialists": _run_specialists,
    "demos": _run_demos,
    "generalist-II": _run_phase2,
}


def run_gsl(cfg, run_dir, resume=False, stop_after=None):
    """Execute (or continue) the full pipeline; returns the final report."""
    paths = RunPaths(run_dir)
    if resume and paths.plan.exists():
        cfg = load_config(paths.config)
        validate_config(cfg)
        plan = GslPlan.load(paths.plan)
    else:
        validate_config(cfg)
        paths.ensure()
        dump_config(cfg, paths.config)
        plan = GslPlan.fresh(cfg.seed, stop_after)
        plan.save(paths.plan)
    paths.ensure()
    while plan.phase != "done":
        _PHASE_FNS[plan.phase](cfg, paths, plan)
        plan.save(paths.plan)
    return _finalize(cfg, paths, plan)


def run_baseline(cfg, run_dir, resume=False):
    """Generalist-only comparator: the whole budget goes to one phase."""
    paths = RunPaths(run_dir)
    if resume and paths.plan.exists():
        cfg = load_config(paths.config)
        validate_config(cfg)
        plan = GslPlan.load(paths.plan)
    else:
        validate_config(cfg)
        paths.ensure()
        dump_config(cfg, paths.config)
        plan = GslPlan.fresh(cfg.seed, None)
        plan.data["mode"] = "baseline"
        plan.save(paths.plan)
    paths.ensure()
    probe = make_env(cfg.env.name, **cfg.env_kwargs())
    ids = _restricted_ids(cfg, probe)
    if cfg.gsl.total_steps == 0:
        agent = fresh_agent(cfg, probe, stream(cfg.seed, "init"))
        save_agent(paths.agent_dir("init"), agent, {"phase": "baseline"})
        MetricsWriter(paths.phase_csv("phase1"))
        plan.data["phase"] = "done"
        plan.save(paths.plan)
        _write_json(paths.report, {
            "env": cfg.env.name, "backbone": cfg.backbone, "seed": cfg.seed,
            "mode": "baseline", "total_steps": 0,
            "phase_steps": plan.data["counters"],
        })
        return json.loads(paths.report.read_text())
    if plan.phase != "done":
        out = _generalist_phase(cfg, paths, plan, phase_name="phase1",
                                csv_name="phase1", variations=ids,
                                step_budget=cfg.gsl.total_steps,
                                seed_prefix="phase1", detect=False)
        save_agent(paths.agent_dir("final"), out["agent"], {"phase": "baseline"})
        plan.data["counters"]["phase1"] = int(out["steps"])
        plan.data["phase1"] = {"epochs": int(out["epochs"]),
                               "plateau_epoch": None, "confirmed_at": None,
                               "early_exit": bool(out["early_exit"])}
        plan.data["phase"] = "done"
        plan.save(paths.plan)
    # offline trigger on the realized curve, for reporting only
    trigger = None
    rows = read_metrics(paths.phase_csv("phase1"))["mean_return"]
    if rows.size and np.all(np.isfinite(rows)):
        curve = ReturnCurve.from_metrics(paths.phase_csv("phase1"))
        budget = max(cfg.gsl.total_steps // cfg.samples_per_epoch, len(curve))
        trigger = detect_plateau(curve, cfg.plateau_config(), budget)
    agent, _ = load_agent(cfg, probe, paths.agent_dir("final"))
    res = _eval_policy(cfg, agent.policy_fn(deterministic=True),
                       stream(cfg.seed, "final-eval"), ids)
    env = make_env(cfg.env.name, **cfg.env_kwargs())
    report = {
        "env": cfg.env.name, "backbone": cfg.backbone, "seed": cfg.seed,
        "mode": "baseline", "variations": ids,
        "total_steps": plan.total_steps, "phase_steps": plan.data["counters"],
        "phase1": plan.data["phase1"],
        "offline_plateau_epoch": trigger,
        "returns_after": {str(v): float(res.mean_returns[v]) for v in ids},
        "mean_return_after": float(np.mean(res.mean_returns[ids])),
        "success_after": float(np.mean(res.success_rates[ids])),
        "ignorance_after": ignorance_report(
            agent.policy_fn(deterministic=True), env,
            max(20, cfg.gsl.eval_episodes),
            stream(cfg.seed, "final-ignorance"), variations=ids),
    }
    _write_json(paths.report, report)
    return report


# -------------------------------------------------------------- ablations

def _clone_run(src: RunPaths, dst: RunPaths):
    if dst.root.exists():
        shutil.rmtree(dst.root)
    shutil.copytree(src.root, dst.root)


def steps_to_threshold(eval_curve, threshold, budget):
    """First evaluated step count with mean return at or above threshold;
    censored at the full budget when never reached."""
    for row in eval_curve:
        if row["mean_return"] >= threshold:
            return int(row["steps"])
    return int(budget)


def ablate_timing(cfg, run_dir, threshold=DEFAULT_TIMING_THRESHOLD):
    """Plateau-initialized vs from-scratch specialists, shared phase I.

    The from-scratch arm clones the generalist run and retrains only the
    specialist jobs from random nets, so the comparison isolates the init.
    """
    root = Path(run_dir)
    base = RunPaths(root / "plateau-init")
    run_gsl(cfg, base.root, resume=base.plan.exists(), stop_after="specialists")

    fresh_paths = RunPaths(root / "from-scratch")
    if not (fresh_paths.plan.exists()
            and GslPlan.load(fresh_paths.plan).phase == "done"):
        _clone_run(base, fresh_paths)
        fcfg = apply_overrides(load_config(fresh_paths.config),
                               ["gsl.specialist_init=fresh"])
        dump_config(fcfg, fresh_paths.config)
        plan = GslPlan.load(fresh_paths.plan)
        plan.data["phase"] = "specialists"
        plan.data["stop_after"] = "specialists"
        plan.data.pop("stopped_after", None)
        plan.data["specialists_done"] = []
        plan.data["specialist_results"] = {}
        plan.data["counters"]["specialists"] = 0
        plan.save(fresh_paths.plan)
        run_gsl(fcfg, fresh_paths.root, resume=True)

    summary = {"threshold": threshold, "modes": {}}
    for mode, paths in (("plateau-init", base), ("from-scratch", fresh_paths)):
        per_spec = {}
        for f in sorted(paths.evals.glob("specialist_*.json")):
            data = json.loads(f.read_text())
            sid = data["summary"]["id"]
            per_spec[str(sid)] = steps_to_threshold(
                data["curve"], threshold, data["summary"]["steps"])
        vals = list(per_spec.values())
        summary["modes"][mode] = {
            "steps_to_threshold": per_spec,
            "mean_steps": float(np.mean(vals)) if vals else None,
        }
    _write_json(root / "timing.json", summary)
    return summary


def ablate_lfd(cfg, run_dir, methods=None):
    """One shared run through demos, then one consolidation per method."""
    if methods is None:
        methods = ("dapg", "bc") if cfg.backbone == "ppo" else ("gail", "bc")
    for m in methods:
        if m == "gail" and cfg.backbone == "ppo":
            raise ConfigError("lfd.method: gail needs the off-policy backbone (sac)")
        if m == "dapg" and cfg.backbone == "sac":
            raise ConfigError("lfd.method: dapg needs the on-policy backbone (ppo)")
    root = Path(run_dir)
    shared = RunPaths(root / "shared")
    run_gsl(cfg, shared.root, resume=shared.plan.exists(), stop_after="demos")

    results = {}
    for method in methods:
        mp = RunPaths(root / method)
        if not mp.report.exists():
            _clone_run(shared, mp)
            mcfg = apply_overrides(load_config(mp.config),
                                   [f"lfd.method={method}"])
            dump_config(mcfg, mp.config)
            plan = GslPlan.load(mp.plan)
            plan.data["phase"] = "generalist-II"
            plan.data["stop_after"] = None
            plan.data.pop("stopped_after", None)
            plan.save(mp.plan)
            run_gsl(mcfg, mp.root, resume=True)
        results[method] = json.loads(mp.report.read_text())
    comparison = {m: {"mean_return_after": r["mean_return_after"],
                      "success_after": r["success_after"]}
                  for m, r in results.items()}
    _write_json(root / "lfd_comparison.json", comparison)
    return comparison


def ablate_k(cfg, run_dir, ks):
    """Sweep variations-per-specialist: n_specialists = ceil(n_low / K)."""
    root = Path(run_dir)
    out = {}
    for k in ks:
        if k < 1 or k > cfg.gsl.n_low:
            raise ConfigError(f"K must be in 1..{cfg.gsl.n_low}, got {k}")
        n_s = math.ceil(cfg.gsl.n_low / k)
        kcfg = apply_overrides(cfg, [f"gsl.n_specialists={n_s}"])
        sub = RunPaths(root / f"k{k}")
        report = run_gsl(kcfg, sub.root, resume=sub.plan.exists())
        out[str(k)] = {"n_specialists": n_s,
                       "mean_return_after": report["mean_return_after"],
                       "success_after": report["success_after"]}
    _write_json(root / "k_sweep.json", out)
    return out
