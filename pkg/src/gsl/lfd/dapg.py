"""Demonstration-augmented policy gradient: the demo term added to PPO.

The consolidation loss is the usual clipped surrogate plus
omega * A_hat * (-mean_D pi(a|s)): raising the policy's probability (or
clamped density, for continuous actions) on demonstration pairs lowers the
loss, scaled by the epoch's top normalized advantage so the pull tracks the
scale of the on-policy gradient.
"""

from dataclasses import dataclass

from .. import autodiff as ad
from ..errors import ContractError
from ..nets import head_density, mlp_forward


@dataclass(frozen=True)
class DapgConfig:
    omega: float = 0.5             # demo-term weight, held constant
    advantage_floor: float = 1e-3  # keeps the pull attractive on all-negative epochs
    density_cap: float = 1e3       # gaussian densities are otherwise unbounded
    demo_batch: int = 2000         # pairs drawn from the store per epoch

    def __post_init__(self):
        if self.omega < 0:
            raise ContractError(f"omega must be >= 0, got {self.omega}")
        if self.advantage_floor <= 0:
            raise ContractError("advantage floor must be positive")
        if self.density_cap <= 0 or self.demo_batch < 1:
            raise ContractError("density cap and demo batch must be positive")


def demo_loss_term(policy_spec, policy, demo_obs, demo_actions, cfg, a_hat, tape):
    """omega * max(floor, a_hat) * (-mean pi(a|s)) over the demo pairs.

    Returns (term node, stats). The coefficient is always strictly positive,
    so increasing demo-action probability always decreases the loss.
    """
    head = mlp_forward(policy_spec, policy, demo_obs, tape=tape)
    density = head_density(head, demo_actions, cap=cfg.density_cap)
    l1 = ad.neg(ad.rmean(density))
    coef = cfg.omega * max(cfg.advantage_floor, a_hat)
    term = ad.mul(l1, coef)
    return term, {"demo_loss": float(ad.val(l1))}


def make_demo_hook_factory(agent, sampler, cfg):
    """Per-epoch hook factory for the PPO update loop.

    Each epoch draws one demo batch from the store (without replacement
    within a pass); every minibatch of that epoch re-evaluates the term on
    the current parameters. With omega = 0 callers should skip the hook
    entirely instead, which leaves the backbone bit-identical.
    """
    def factory(epoch):
        batch = sampler.draw(cfg.demo_batch)
        obs, actions = batch["obs"], batch["actions"]

        def hook(tape, a_hat):
            return demo_loss_term(agent.policy_spec, agent.policy,
                                  obs, actions, cfg, a_hat, tape)

        return hook

    return factory
