"""Point-mass maze: one long corridor feeding five goal branches.

The agent starts at the left end of a horizontal corridor and must enter the
branch named by its goal context c, observed as the fifth input dimension.
The context interval (0, 1] splits into five variations C_i = ((i-1)/5, i/5],
goal index i = ceil(5c). Reward is the negative approximate geodesic distance
to the goal, so the only way to tell the five variations apart is to read c.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .base import ContextSpace, Env

GOAL_XS = (0.1, 0.3, 0.5, 0.7, 0.9)
BRANCH_HALF_WIDTH = 0.05
CORRIDOR_Y = (0.45, 0.55)
CORRIDOR_MID = 0.5
GOAL_Y = 0.95
START = (0.02, 0.5)
SPEED_CAP = 0.05
GOAL_RADIUS = 0.02


def in_free_space(x, y):
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        return False
    if CORRIDOR_Y[0] <= y <= CORRIDOR_Y[1]:
        return True
    if y > CORRIDOR_Y[1]:
        return any(abs(x - gx) <= BRANCH_HALF_WIDTH for gx in GOAL_XS)
    return False


def goal_index(c):
    """1-based goal index for context c in (0, 1]: smallest i with c <= i/5.

    Equivalent to ceil(5c) but robust at the interval edges, where 5*c can
    round to just above the integer (5 * 0.4 -> 2.0000000000000004).
    """
    if not (0.0 < c <= 1.0):
        raise ContractError(f"context {c} outside (0, 1]")
    for i in range(1, 6):
        if c <= i / 5.0:
            return i
    raise AssertionError("unreachable")


def geodesic_distance(position, goal):
    """Approximate shortest-path distance from position to goal i (1-based).

    Piecewise analytic with the corridor collapsed to its midline: corridor
    points pay the x-leg plus the full branch climb; points up a wrong branch
    pay the climb down, the corridor leg, and the climb up.
    """
    x, y = position
    if not in_free_space(x, y):
        raise ContractError(f"position {position} is inside a wall")
    gx = GOAL_XS[goal - 1]
    if y <= CORRIDOR_Y[1]:
        return abs(x - gx) + (GOAL_Y - CORRIDOR_MID)
    j = min(range(5), key=lambda k: abs(x - GOAL_XS[k]))
    if j == goal - 1:
        return abs(GOAL_Y - y)
    return (y - CORRIDOR_MID) + abs(GOAL_XS[j] - gx) + (GOAL_Y - CORRIDOR_MID)


class BrushMazeEnv(Env):

    obs_dim = 5
    action_kind = "continuous"
    action_dim = 2

    def __init__(self, horizon=150):
        self.horizon = horizon
        self.context_space = ContextSpace(
            "real-interval", tuple((i / 5.0, (i + 1) / 5.0) for i in range(5)))
        self._x = self._y = self._vx = self._vy = 0.0
        self._c = 1.0
        self._goal = 1
        self._steps = 0

    def reset(self, rng, variation=None):
        if variation is None:
            variation = int(rng.integers(5))
        elif not 0 <= variation <= 4:
            raise ContractError(f"variation {variation} outside 0..4")
        lo, hi = self.context_space.subsets[variation]
        # (lo, hi]: subtract a [0, 1) draw from the upper edge
        self._c = hi - rng.random() * (hi - lo)
        self._goal = goal_index(self._c)
        assert self._goal == variation + 1
        self._x, self._y = START
        self._vx = self._vy = 0.0
        self._steps = 0
        return self._obs()

    def step(self, action):
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (2,):
            raise ContractError("action must be a 2-vector")
        speed = float(np.hypot(a[0], a[1]))
        if speed > SPEED_CAP:
            a = a * (SPEED_CAP / speed)
        self._vx, self._vy = float(a[0]), float(a[1])

        nx, ny = self._x + self._vx, self._y + self._vy
        if in_free_space(nx, ny):
            self._x, self._y = nx, ny
        else:
            # slide: keep each axis component that stays in free space
            if in_free_space(nx, self._y):
                self._x = nx
            if in_free_space(self._x, ny):
                self._y = ny

        self._steps += 1
        dist = geodesic_distance((self._x, self._y), self._goal)
        success = dist < GOAL_RADIUS
        done = success or self._steps >= self.horizon
        info = {"variation": self._goal - 1, "success": success, "distance": dist}
        return self._obs(), -dist, done, info

    def _obs(self):
        return np.array([self._x, self._y, self._vx, self._vy, self._c])

    def get_state(self):
        return (self._x, self._y, self._vx, self._vy, self._c, self._goal, self._steps)

    def set_state(self, state):
        (self._x, self._y, self._vx, self._vy, self._c, self._goal, self._steps) = state

    def terminal_bucket(self):
        """Branch the episode ended in (nearest goal), or 5 if it never left
        the corridor. Episodes that time out at the mouth of a wrong goal still
        count toward that goal, which is what exposes context-blind policies."""
        dists = [geodesic_distance((self._x, self._y), g) for g in range(1, 6)]
        nearest = int(np.argmin(dists))
        if dists[nearest] >= GOAL_Y - CORRIDOR_MID:
            return 5
        return nearest
