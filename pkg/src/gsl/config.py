"""Experiment configuration: dataclass blocks, YAML snapshots, named presets.

A config file mirrors these dataclasses one level deep (block.field). Every
field has a default, so a file only lists what it changes. The snapshot
written into a run directory is canonical: parse -> dump -> parse is the
identity, and re-running any tool on a run directory never needs the original
file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .envs import make_env
from .errors import ConfigError, GslError
from .lfd import DapgConfig, GailConfig
from .plateau import PlateauConfig
from .agents import PpoConfig, SacConfig


@dataclass
class EnvBlock:
    name: str = "brushmaze"
    horizon: int = 150
    # restriction to a subset of variation ids (None = all); used by the
    # one-goal runs and by specialist workers
    variations: tuple | None = None
    # gridworld-only knobs, ignored by brushmaze
    num_variations: int = 16
    size: int = 9
    wall_density: float = 0.25
    seed_base: int = 0

    def __post_init__(self):
        if self.variations is not None:
            v = self.variations
            if isinstance(v, int):
                v = (v,)
            try:
                self.variations = tuple(int(x) for x in v)
            except (TypeError, ValueError):
                raise ConfigError(
                    f"env.variations: expected variation ids, got {self.variations!r}")


@dataclass
class NetBlock:
    hidden: tuple = (256, 256)
    min_std: float = 0.01
    max_std: float = 2.0


@dataclass
class PpoBlock:
    lr: float = 3e-4
    gamma: float = 0.95
    lam: float = 0.97
    clip: float = 0.2
    c_ent: float = 0.01
    inner_epochs: int = 4
    minibatch: int = 2000
    samples_per_epoch: int = 10_000
    num_envs: int = 5


@dataclass
class SacBlock:
    lr: float = 3e-4
    gamma: float = 0.95
    polyak: float = 0.005
    minibatch: int = 200
    replay_capacity: int = 2_000_000
    update_every: int = 64
    updates_per_round: int = 4
    start_steps: int = 1000
    num_envs: int = 4
    samples_per_epoch: int = 10_000
    alpha_mode: str = "auto"
    alpha_init: float = 0.2


@dataclass
class LfdBlock:
    method: str = "dapg"            # dapg | gail | bc
    tau: float = -30.0              # demo return threshold
    # dapg
    omega: float = 0.5
    advantage_floor: float = 1e-3
    density_cap: float = 1e3
    demo_batch: int = 2000
    # gail
    beta: float = 0.5
    disc_clamp: float = 0.1
    disc_updates: int = 5
    disc_every: int = 100
    disc_lr: float = 3e-4
    disc_batch: int = 200
    demo_fraction: float = 0.25
    # bc
    bc_batch: int = 2000
    bc_lr: float = 3e-4


@dataclass
class PlateauBlock:
    kernel: int = 10
    window: int = 50
    epsilon: float = 0.01
    guard: float = 0.15


@dataclass
class GslBlock:
    total_steps: int = 5_000_000
    n_specialists: int = 5
    n_low: int = 5
    specialist_steps: int = 500_000
    consolidation_steps: int = 1_000_000
    demo_steps_specialists: int = 7500   # summed across specialists
    demo_steps_generalist: int = 0       # on the variations kept from specialists
    finetune_low: bool = False
    finetune_low_steps: int = 100_000
    specialist_init: str = "plateau"     # plateau | finetuned-low | fresh
    # timing-ablation override: force specialist launch at this phase-I epoch
    # instead of the confirmed plateau (None = at plateau)
    specialist_launch_epoch: int | None = None
    eval_episodes: int = 20              # per variation, evaluation & reports
    eval_every: int = 10                 # epochs between specialist best-checkpoint evals
    early_exit_fraction: float = 0.95
    optimal_return: float | None = None  # reference for the early exit; None disables


@dataclass
class ExperimentConfig:
    name: str = "custom"
    backbone: str = "ppo"               # ppo | sac
    seed: int = 0
    parallel: int = 1
    out: str | None = None
    env: EnvBlock = field(default_factory=EnvBlock)
    net: NetBlock = field(default_factory=NetBlock)
    ppo: PpoBlock = field(default_factory=PpoBlock)
    sac: SacBlock = field(default_factory=SacBlock)
    lfd: LfdBlock = field(default_factory=LfdBlock)
    plateau: PlateauBlock = field(default_factory=PlateauBlock)
    gsl: GslBlock = field(default_factory=GslBlock)

    # -- derived views consumed by the training code ------------------------

    def env_kwargs(self):
        e = self.env
        if e.name == "brushmaze":
            return {"horizon": e.horizon}
        return {"num_variations": e.num_variations, "seed_base": e.seed_base,
                "size": e.size, "wall_density": e.wall_density,
                "horizon": e.horizon}

    def make_env_fn(self):
        name, kwargs = self.env.name, self.env_kwargs()
        return lambda: make_env(name, **kwargs)

    def ppo_config(self):
        b = self.ppo
        return PpoConfig(lr=b.lr, gamma=b.gamma, lam=b.lam, clip=b.clip,
                         c_ent=b.c_ent, inner_epochs=b.inner_epochs,
                         minibatch=b.minibatch,
                         samples_per_epoch=b.samples_per_epoch,
                         num_envs=b.num_envs)

    def sac_config(self):
        b = self.sac
        return SacConfig(lr=b.lr, gamma=b.gamma, polyak=b.polyak,
                         minibatch=b.minibatch,
                         replay_capacity=b.replay_capacity,
                         update_every=b.update_every,
                         updates_per_round=b.updates_per_round,
                         start_steps=b.start_steps, num_envs=b.num_envs,
                         samples_per_epoch=b.samples_per_epoch,
                         alpha_mode=b.alpha_mode, alpha_init=b.alpha_init)

    def plateau_config(self):
        b = self.plateau
        return PlateauConfig(kernel=b.kernel, window=b.window,
                             epsilon=b.epsilon, guard=b.guard)

    def dapg_config(self):
        b = self.lfd
        return DapgConfig(omega=b.omega, advantage_floor=b.advantage_floor,
                          density_cap=b.density_cap, demo_batch=b.demo_batch)

    def gail_config(self):
        b = self.lfd
        return GailConfig(beta=b.beta, clamp=b.disc_clamp,
                          disc_updates=b.disc_updates, disc_every=b.disc_every,
                          disc_lr=b.disc_lr, disc_batch=b.disc_batch,
                          demo_fraction=b.demo_fraction)

    @property
    def samples_per_epoch(self):
        return (self.ppo if self.backbone == "ppo" else self.sac).samples_per_epoch

    def demo_budget(self):
        return self.gsl.demo_steps_specialists + self.gsl.demo_steps_generalist

    def phase1_step_budget(self):
        """Steps left for phase I after reserving every later phase's budget."""
        g = self.gsl
        reserved = (g.n_specialists * g.specialist_steps + g.consolidation_steps
                    + self.demo_budget()
                    + (g.finetune_low_steps if g.finetune_low else 0))
        return g.total_steps - reserved

    def phase1_epoch_budget(self):
        return self.phase1_step_budget() // self.samples_per_epoch


# ------------------------------------------------------------ dict plumbing

_BLOCK_TYPES = {"env": EnvBlock, "net": NetBlock, "ppo": PpoBlock,
                "sac": SacBlock, "lfd": LfdBlock, "plateau": PlateauBlock,
                "gsl": GslBlock}


def _coerce(value, default, path):
    """Bend a YAML/CLI value to the shape of the field's default."""
    if value is None:
        return None
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or int(value) != value:
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple) or (default is None and isinstance(value, (list, tuple))):
        return tuple(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    # default None with a scalar value (out, optimal_return, launch epoch)
    return value


def _build_block(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    proto = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(data[f.name], getattr(proto, f.name),
                                     f"{path}.{f.name}")
    return cls(**kwargs)


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    top = ExperimentConfig()
    kwargs = {}
    for key, value in data.items():
        if key in _BLOCK_TYPES:
            kwargs[key] = _build_block(_BLOCK_TYPES[key], value, key)
        elif key == "out":
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"out: expected a path string, got {value!r}")
            kwargs[key] = value
        elif key in ("name", "backbone", "seed", "parallel"):
            kwargs[key] = _coerce(value, getattr(top, key), key)
        else:
            raise ConfigError(f"{key}: unknown field")
    return ExperimentConfig(**kwargs)


def config_to_dict(cfg):
    def plain(x):
        if isinstance(x, tuple):
            return list(x)
        return x
    out = {"name": cfg.name, "backbone": cfg.backbone, "seed": cfg.seed,
           "parallel": cfg.parallel, "out": cfg.out}
    for block in _BLOCK_TYPES:
        sub = getattr(cfg, block)
        out[block] = {f.name: plain(getattr(sub, f.name))
                      for f in dataclasses.fields(sub)}
    return out


def load_config(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML ({e})")
    return config_from_dict(data or {})


def dump_config(cfg, path):
    """Write the canonical snapshot (stable key order)."""
    text = yaml.safe_dump(config_to_dict(cfg), sort_keys=True,
                          default_flow_style=False)
    Path(path).write_text(text)
    return text


# ----------------------------------------------------------- CLI overrides

def _parse_override_value(text, default, path):
    """Parse the right-hand side of --set key=value against the field type."""
    if text.lower() in ("none", "null"):
        return None
    if isinstance(default, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{path}: expected true/false, got {text!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{path}: expected an integer, got {text!r}")
    if isinstance(default, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {text!r}")
    if isinstance(default, tuple):
        items = [s for s in text.split(",") if s != ""]
        try:
            return tuple(int(s) for s in items)
        except ValueError:
            raise ConfigError(f"{path}: expected comma-separated integers, got {text!r}")
    if default is None:
        # untyped optional: try int, then float, then comma list, then string
        for cast in (int, float):
            try:
                return cast(text)
            except ValueError:
                pass
        if "," in text:
            try:
                return tuple(int(s) for s in text.split(",") if s != "")
            except ValueError:
                pass
        return text
    return text


def apply_overrides(cfg, assignments):
    """Apply repeatable --set key=value pairs; returns a new config."""
    data = config_to_dict(cfg)
    for raw in assignments:
        if "=" not in raw:
            raise ConfigError(f"override {raw!r} is not of the form key=value")
        dotted, text = raw.split("=", 1)
        parts = dotted.split(".")
        if len(parts) == 1 and parts[0] in ("name", "backbone", "seed", "parallel", "out"):
            default = getattr(ExperimentConfig(), parts[0])
            if parts[0] == "out":
                data["out"] = None if text.lower() in ("none", "null") else text
            else:
                data[parts[0]] = _parse_override_value(text, default, dotted)
            continue
        if len(parts) != 2 or parts[0] not in _BLOCK_TYPES:
            raise ConfigError(f"override key {dotted!r} does not name a config field")
        block, name = parts
        proto = _BLOCK_TYPES[block]()
        if not hasattr(proto, name):
            raise ConfigError(f"override key {dotted!r} does not name a config field")
        data[block][name] = _parse_override_value(text, getattr(proto, name), dotted)
    return config_from_dict(data)


# ---------------------------------------------------------------- presets

def _brushmaze_ppo_dapg():
    cfg = ExperimentConfig(name="brushmaze-ppo-dapg", backbone="ppo")
    cfg.lfd.method = "dapg"
    cfg.gsl.optimal_return = -9.4   # mean scripted-policy return over the 5 goals
    return cfg


def _brushmaze_sac_gail():
    cfg = ExperimentConfig(name="brushmaze-sac-gail", backbone="sac")
    cfg.lfd.method = "gail"
    cfg.gsl.total_steps = 2_000_000
    cfg.gsl.specialist_steps = 150_000
    cfg.gsl.consolidation_steps = 600_000
    cfg.plateau.window = 20
    cfg.gsl.optimal_return = -9.4
    return cfg


PRESETS = {
    "brushmaze-ppo-dapg": _brushmaze_ppo_dapg,
    "brushmaze-sac-gail": _brushmaze_sac_gail,
}


def preset(name):
    if name not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown preset {name!r} (have: {known})")
    return PRESETS[name]()


def resolve_config(source):
    """Accept a preset name or a path to a YAML file."""
    if source in PRESETS:
        return preset(source)
    if Path(source).exists():
        return load_config(source)
    raise ConfigError(f"{source!r} is neither a preset nor a config file")


# -------------------------------------------------------------- validation

def validate_config(cfg):
    """Raise ConfigError naming the offending field; returns cfg unchanged."""
    if cfg.backbone not in ("ppo", "sac"):
        raise ConfigError(f"backbone: must be ppo or sac, got {cfg.backbone!r}")
    if cfg.lfd.method not in ("dapg", "gail", "bc"):
        raise ConfigError(f"lfd.method: must be dapg, gail, or bc, got {cfg.lfd.method!r}")
    if cfg.lfd.method == "dapg" and cfg.backbone != "ppo":
        raise ConfigError("lfd.method: dapg needs the on-policy backbone (ppo)")
    if cfg.lfd.method == "gail" and cfg.backbone != "sac":
        raise ConfigError("lfd.method: gail needs the off-policy backbone (sac)")
    if cfg.seed < 0:
        raise ConfigError(f"seed: must be >= 0, got {cfg.seed}")
    if cfg.parallel < 1:
        raise ConfigError(f"parallel: must be >= 1, got {cfg.parallel}")

    try:
        probe = make_env(cfg.env.name, **cfg.env_kwargs())
    except GslError as e:
        raise ConfigError(f"env.name: {e}")
    if cfg.backbone == "sac" and probe.action_kind != "continuous":
        raise ConfigError(
            f"backbone: sac requires continuous actions, but env {cfg.env.name!r} "
            f"has {probe.action_kind} actions")
    n_var = probe.num_variations
    if cfg.env.variations is not None:
        bad = [v for v in cfg.env.variations if not 0 <= v < n_var]
        if bad:
            raise ConfigError(f"env.variations: ids {bad} outside 0..{n_var - 1}")
        if len(set(cfg.env.variations)) != len(cfg.env.variations):
            raise ConfigError("env.variations: duplicate ids")
        n_var = len(cfg.env.variations)

    g = cfg.gsl
    if g.total_steps < 0:
        raise ConfigError(f"gsl.total_steps: must be >= 0, got {g.total_steps}")
    for name in ("n_specialists", "n_low", "specialist_steps",
                 "consolidation_steps", "eval_episodes", "eval_every"):
        if getattr(g, name) < 1:
            raise ConfigError(f"gsl.{name}: must be >= 1, got {getattr(g, name)}")
    for name in ("demo_steps_specialists", "demo_steps_generalist",
                 "finetune_low_steps"):
        if getattr(g, name) < 0:
            raise ConfigError(f"gsl.{name}: must be >= 0, got {getattr(g, name)}")
    if g.n_low < g.n_specialists:
        raise ConfigError(
            f"gsl.n_low: {g.n_specialists} specialists need at least "
            f"{g.n_specialists} variations, got {g.n_low}")
    if g.n_low > n_var:
        raise ConfigError(
            f"gsl.n_low: only {n_var} variations available, got {g.n_low}")
    if g.specialist_init not in ("plateau", "finetuned-low", "fresh"):
        raise ConfigError(
            f"gsl.specialist_init: must be plateau, finetuned-low, or fresh, "
            f"got {g.specialist_init!r}")
    if g.specialist_init == "finetuned-low" and not g.finetune_low:
        raise ConfigError(
            "gsl.specialist_init: finetuned-low requires gsl.finetune_low: true")
    if not 0.0 < g.early_exit_fraction <= 1.0:
        raise ConfigError(
            f"gsl.early_exit_fraction: must be in (0, 1], got {g.early_exit_fraction}")
    if g.specialist_launch_epoch is not None and g.specialist_launch_epoch < 0:
        raise ConfigError("gsl.specialist_launch_epoch: must be >= 0")
    if cfg.lfd.tau != cfg.lfd.tau:  # NaN guard
        raise ConfigError("lfd.tau: must be a number")
    if not cfg.net.hidden or any(h < 1 for h in cfg.net.hidden):
        raise ConfigError(f"net.hidden: layer sizes must be >= 1, got {cfg.net.hidden}")
    if not 0 < cfg.net.min_std <= cfg.net.max_std:
        raise ConfigError("net: need 0 < min_std <= max_std")

    # module blocks re-validate themselves; surface their complaints with paths
    try:
        cfg.plateau_config()
    except GslError as e:
        raise ConfigError(f"plateau: {e}")
    try:
        cfg.dapg_config()
    except GslError as e:
        raise ConfigError(f"lfd: {e}")
    try:
        cfg.gail_config()
    except GslError as e:
        raise ConfigError(f"lfd: {e}")
    for block, name in ((cfg.ppo, "ppo"), (cfg.sac, "sac")):
        for f in ("lr", "gamma"):
            if getattr(block, f) <= 0:
                raise ConfigError(f"{name}.{f}: must be positive")
    if cfg.ppo.samples_per_epoch % cfg.ppo.num_envs != 0:
        raise ConfigError("ppo.samples_per_epoch: must divide by ppo.num_envs")
    if cfg.lfd.bc_batch < 1 or cfg.lfd.bc_lr <= 0:
        raise ConfigError("lfd: bc_batch must be >= 1 and bc_lr positive")

    if g.total_steps > 0 and cfg.phase1_epoch_budget() < 1:
        raise ConfigError(
            f"gsl.total_steps: {g.total_steps} leaves no phase-I budget after "
            f"reserving {g.total_steps - cfg.phase1_step_budget()} steps for "
            f"later phases")
    return cfg
