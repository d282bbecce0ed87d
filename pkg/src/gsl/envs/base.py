"""Environment interface, context partitions, and per-variation evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True)
class ContextSpace:
    """Partition of a context set into indexed environment variations.

    kind "real-interval": subsets are half-open (lo, hi] intervals, contiguous
    and ascending. kind "integer-seed-set": subsets are disjoint seed tuples.
    Variation ids are the list positions, so they are contiguous from 0.
    """

    kind: str
    subsets: tuple

    def __post_init__(self):
        if self.kind == "real-interval":
            for a, b in zip(self.subsets, self.subsets[1:]):
                if a[1] != b[0]:
                    raise ContractError("interval subsets must tile the context range")
            if any(lo >= hi for lo, hi in self.subsets):
                raise ContractError("empty context interval")
        elif self.kind == "integer-seed-set":
            flat = [s for sub in self.subsets for s in sub]
            if len(flat) != len(set(flat)):
                raise ContractError("seed subsets overlap")
        else:
            raise ContractError(f"unknown context kind {self.kind!r}")

    @property
    def num_variations(self):
        return len(self.subsets)


@dataclass
class Transition:
    obs: np.ndarray
    action: object
    reward: float
    next_obs: np.ndarray
    done: bool
    variation: int

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ContractError("non-finite reward")


class Env:
    """Single-threaded environment instance.

    Subclasses set obs_dim, action_kind ("discrete" | "continuous"),
    n_actions or action_dim, horizon, and context_space, and implement
    reset/step plus get_state/set_state for snapshot-based resume.
    """

    obs_dim: int
    action_kind: str
    horizon: int
    context_space: ContextSpace

    @property
    def num_variations(self):
        return self.context_space.num_variations

    def reset(self, rng, variation=None):
        raise NotImplementedError

    def step(self, action):
        raise NotImplementedError

    def get_state(self):
        raise NotImplementedError

    def set_state(self, state):
        raise NotImplementedError

    def terminal_bucket(self):
        """Classification of the current (ended) episode for outcome histograms:
        a column in [0, num_variations] where the last column means timeout."""
        raise NotImplementedError


@dataclass
class EvalResult:
    mean_returns: np.ndarray      # (V,)
    success_rates: np.ndarray     # (V,)
    episode_returns: list = field(default_factory=list)   # list of per-variation arrays
    outcome_counts: np.ndarray = None  # (V, num_variations + 1), last column = timeout

    @property
    def overall_mean(self):
        return float(np.mean(self.mean_returns))

    @property
    def overall_success(self):
        return float(np.mean(self.success_rates))


def run_episode(env, policy_fn, rng, variation=None):
    """One full episode; returns (total return, success flag, steps)."""
    obs = env.reset(rng, variation=variation)
    total = 0.0
    success = False
    steps = 0
    done = False
    while not done:
        obs, r, done, info = env.step(policy_fn(obs, rng))
        total += r
        steps += 1
        success = success or info.get("success", False)
    return total, success, steps


def evaluate_per_variation(policy_fn, env, episodes_per_variation, rng, variations=None):
    """Roll out policy_fn on each variation and aggregate.

    policy_fn(obs, rng) -> action. Deterministic given the rng seed: resets and
    any policy stochasticity both draw from the supplied generator.
    """
    if episodes_per_variation < 1:
        raise ContractError("need at least one episode per variation")
    ids = list(range(env.num_variations)) if variations is None else list(variations)
    mean_returns = np.zeros(env.num_variations)
    success_rates = np.zeros(env.num_variations)
    episode_returns = [np.array([]) for _ in range(env.num_variations)]
    counts = np.zeros((env.num_variations, env.num_variations + 1), dtype=np.int64)
    for v in ids:
        rets = []
        succ = 0
        for _ in range(episodes_per_variation):
            total, ok, _ = run_episode(env, policy_fn, rng, variation=v)
            rets.append(total)
            succ += bool(ok)
            counts[v, env.terminal_bucket()] += 1
        mean_returns[v] = np.mean(rets)
        success_rates[v] = succ / episodes_per_variation
        episode_returns[v] = np.asarray(rets)
    return EvalResult(mean_returns, success_rates, episode_returns, counts)
