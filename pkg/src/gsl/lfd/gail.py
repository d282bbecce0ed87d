"""Adversarial imitation for the off-policy path.

A discriminator is trained to emit low values on policy transitions and
high values on demonstration transitions (minimizing
E_policy[log D] + E_demo[log(1 - D)]), and its log-output is blended into
the environment reward: r_tilde = beta * r + (1 - beta) * log D. Note the
blend uses log D directly, so demo-like behavior pulls the penalty toward
zero and off-distribution behavior is charged up to log(clamp).

Outputs are clamped away from {0, 1} before any log, which bounds every
loss and reward term for arbitrary inputs.
"""

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import ContractError
from ..nets import MlpSpec, init_params, mlp_forward
from ..optim import AdamState, adam_step


@dataclass(frozen=True)
class GailConfig:
    beta: float = 0.5           # 1.0 = pure env reward, 0.0 = pure imitation
    clamp: float = 0.1          # D kept inside [clamp, 1 - clamp]
    disc_updates: int = 5       # discriminator steps per cadence window
    disc_every: int = 100       # policy updates per cadence window
    disc_lr: float = 3e-4
    disc_batch: int = 200       # pairs per side per discriminator step
    demo_fraction: float = 0.25  # demo share of each critic minibatch

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ContractError(f"beta must be in [0, 1], got {self.beta}")
        if not 0.0 < self.clamp < 0.5:
            raise ContractError(f"clamp must be in (0, 0.5), got {self.clamp}")
        if self.disc_updates < 1 or self.disc_every < 1 or self.disc_batch < 1:
            raise ContractError("discriminator cadence fields must be positive")
        if not 0.0 <= self.demo_fraction <= 1.0:
            raise ContractError("demo fraction must be in [0, 1]")


class Discriminator:
    """Scalar net over (obs, action) pairs squashed to a clamped probability."""

    def __init__(self, obs_dim, action_dim, hidden, rng, clamp=0.1):
        self.spec = MlpSpec(obs_dim + action_dim, 1, hidden, head="scalar")
        self.params = init_params(self.spec, rng, out_gain=1.0)
        self.opt = AdamState(self.params.size)
        self.clamp = float(clamp)

    def values(self, obs, actions, tape=None):
        """Clamped D in [clamp, 1-clamp]; tracks the tape when given."""
        x = ad.concat([obs, actions], axis=1)
        logit = mlp_forward(self.spec, self.params, x, tape=tape).out
        squashed = ad.sigmoid(logit)
        return _take_flat(ad.clip(squashed, self.clamp, 1.0 - self.clamp))


def _take_flat(x):
    if isinstance(x, ad.Node):
        return ad.Node(x.value[:, 0], (x,), lambda g: (g.reshape(-1, 1),))
    return x[:, 0]


def discriminator_loss(disc, policy_obs, policy_actions, demo_obs, demo_actions,
                       tape):
    """mean log D on policy pairs + mean log(1 - D) on demo pairs.

    Minimizing drives D down on policy data and up on demos; both batches
    must be nonempty. Returns (loss node, D on policy, D on demos).
    """
    if len(policy_obs) == 0 or len(demo_obs) == 0:
        raise ContractError("both discriminator batches must be nonempty")
    d_pi = disc.values(policy_obs, policy_actions, tape=tape)
    d_demo = disc.values(demo_obs, demo_actions, tape=tape)
    loss = ad.add(ad.rmean(ad.log(d_pi)),
                  ad.rmean(ad.log(ad.sub(1.0, d_demo))))
    return loss, d_pi, d_demo


def discriminator_update(disc, policy_batch, demo_batch, lr):
    """One discriminator step; returns the stats the metrics CSV wants."""
    tape = ad.GradTape(disc.params)
    loss, d_pi, d_demo = discriminator_loss(
        disc, policy_batch["obs"], policy_batch["actions"],
        demo_batch["obs"], demo_batch["actions"], tape)
    adam_step(disc.params, tape.gradient(loss), disc.opt, lr)
    return {"disc_loss": float(ad.val(loss)),
            "mean_D_policy": float(np.mean(ad.val(d_pi))),
            "mean_D_demo": float(np.mean(ad.val(d_demo)))}


def mixed_reward(rewards, d_values, beta):
    """beta * r + (1 - beta) * log D, elementwise."""
    return beta * np.asarray(rewards, dtype=np.float64) \
        + (1.0 - beta) * np.log(np.asarray(d_values, dtype=np.float64))


def make_reward_hook(disc, beta):
    """Reward override for the off-policy update: blends log D into r for
    every sampled transition, demo rows included."""
    def hook(obs, actions, rewards):
        d = disc.values(obs, actions)
        return mixed_reward(rewards, d, beta)

    return hook


def make_disc_hook(disc, replay, demo_sampler, cfg):
    """Cadence callback for the off-policy loop: a few discriminator steps
    against fresh replay and demo draws."""
    def hook(rng):
        stats = {}
        for _ in range(cfg.disc_updates):
            policy_batch = replay.sample(cfg.disc_batch, rng)
            demo_batch = demo_sampler.draw(cfg.disc_batch)
            stats = discriminator_update(disc, policy_batch, demo_batch,
                                         cfg.disc_lr)
        return stats

    return hook
