"""Learning-from-demonstrations heads for the consolidation phase."""

from .bc import bc_loss, bc_update
from .dapg import DapgConfig, demo_loss_term, make_demo_hook_factory
from .gail import (
    Discriminator, GailConfig, discriminator_loss, discriminator_update,
    make_disc_hook, make_reward_hook, mixed_reward,
)

__all__ = [
    "DapgConfig", "demo_loss_term", "make_demo_hook_factory",
    "bc_loss", "bc_update",
    "Discriminator", "GailConfig", "discriminator_loss",
    "discriminator_update", "make_disc_hook", "make_reward_hook",
    "mixed_reward",
]
