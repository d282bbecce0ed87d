from .base import ContextSpace, Env, EvalResult, Transition, evaluate_per_variation, run_episode
from .brushmaze import BrushMazeEnv, geodesic_distance, goal_index, in_free_space
from .gridworld import GridWorldEnv, gridworld_generate

from ..errors import ConfigError


def make_env(name, **kwargs):
    """Environment factory used by config plumbing and specialist workers."""
    if name == "brushmaze":
        return BrushMazeEnv(horizon=kwargs.get("horizon", 150))
    if name == "gridworld":
        return GridWorldEnv(
            num_variations=kwargs.get("num_variations", 16),
            seed_base=kwargs.get("seed_base", 0),
            size=kwargs.get("size", 9),
            wall_density=kwargs.get("wall_density", 0.25),
            horizon=kwargs.get("horizon", 50),
        )
    raise ConfigError(f"unknown env {name!r}")
