"""Seed-procedural grid world: many variations keyed by integer seeds.

Stands in for procedurally-generated level suites. Each variation is one
seed; the seed fully determines the wall layout and goal cell. Observations
are normalized agent/goal coordinates plus a per-variation context scalar.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..seeding import stream
from .base import ContextSpace, Env

# up, down, left, right, no-op
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))


@dataclass
class GridWorldSpec:
    seed: int
    size: int
    wall_density: float
    goal: tuple
    horizon: int
    walls: np.ndarray  # (size, size) bool

    start = (0, 0)


def _reachable(walls, start, goal):
    n = walls.shape[0]
    seen = {start}
    q = deque([start])
    while q:
        r, c = q.popleft()
        if (r, c) == goal:
            return True
        for dr, dc in MOVES[:4]:
            nr, nc = r + dr, c + dc
            if 0 <= nr < n and 0 <= nc < n and not walls[nr, nc] and (nr, nc) not in seen:
                seen.add((nr, nc))
                q.append((nr, nc))
    return False


def gridworld_generate(seed, size=9, wall_density=0.25, horizon=50):
    """Deterministic layout for a seed; walls redrawn until the goal is reachable."""
    if seed < 0:
        raise ContractError("seed must be non-negative")
    rng = stream(seed, "gridworld-layout")
    for _ in range(1000):
        walls = rng.random((size, size)) < wall_density
        walls[0, 0] = False
        free = [(r, c) for r in range(size) for c in range(size)
                if not walls[r, c] and (r, c) != (0, 0)]
        if not free:
            continue
        goal = free[int(rng.integers(len(free)))]
        if _reachable(walls, (0, 0), goal):
            return GridWorldSpec(seed, size, wall_density, goal, horizon, walls)
    raise ContractError(f"no reachable layout found for seed {seed}; lower wall_density")


class GridWorldEnv(Env):

    action_kind = "discrete"
    n_actions = 5
    obs_dim = 5

    def __init__(self, num_variations=16, seed_base=0, size=9, wall_density=0.25, horizon=50):
        self.horizon = horizon
        self.size = size
        self.context_space = ContextSpace(
            "integer-seed-set", tuple((seed_base + v,) for v in range(num_variations)))
        self._specs = [gridworld_generate(seed_base + v, size, wall_density, horizon)
                       for v in range(num_variations)]
        self._var = 0
        self._pos = (0, 0)
        self._steps = 0
        self._reached = False

    def reset(self, rng, variation=None):
        if variation is None:
            variation = int(rng.integers(self.num_variations))
        elif not 0 <= variation < self.num_variations:
            raise ContractError(f"variation {variation} out of range")
        self._var = variation
        self._pos = (0, 0)
        self._steps = 0
        self._reached = False
        return self._obs()

    def step(self, action):
        a = int(action)
        if not 0 <= a < 5:
            raise ContractError(f"action {action} out of range")
        spec = self._specs[self._var]
        dr, dc = MOVES[a]
        nr, nc = self._pos[0] + dr, self._pos[1] + dc
        if 0 <= nr < self.size and 0 <= nc < self.size and not spec.walls[nr, nc]:
            self._pos = (nr, nc)
        self._steps += 1
        success = self._pos == spec.goal
        self._reached = self._reached or success
        reward = -0.01 + (1.0 if success else 0.0)
        done = success or self._steps >= self.horizon
        return self._obs(), reward, done, {"variation": self._var, "success": success}

    def _obs(self):
        spec = self._specs[self._var]
        d = self.size - 1
        return np.array([
            self._pos[0] / d, self._pos[1] / d,
            spec.goal[0] / d, spec.goal[1] / d,
            (self._var + 1) / self.num_variations,
        ])

    def get_state(self):
        return (self._var, self._pos, self._steps, self._reached)

    def set_state(self, state):
        self._var, self._pos, self._steps, self._reached = state

    def terminal_bucket(self):
        return self._var if self._reached else self.num_variations
