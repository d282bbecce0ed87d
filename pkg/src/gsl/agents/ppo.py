"""Clipped-surrogate PPO on separate policy and value networks."""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import ContractError
from ..nets import (head_entropy, head_log_prob, mlp_forward, mode_actions,
                    sample_actions)
from ..optim import AdamState, adam_step
from .rollout import collect_rollout

ADV_EPS = 1e-8


@dataclass
class PpoConfig:
    lr: float = 3e-4
    gamma: float = 0.95
    lam: float = 0.97
    clip: float = 0.2
    c_ent: float = 0.01
    inner_epochs: int = 4
    minibatch: int = 2000
    samples_per_epoch: int = 10_000
    num_envs: int = 5

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError("gamma must be in [0, 1)")
        if self.clip <= 0.0:
            raise ContractError("clip range must be positive")
        if self.inner_epochs < 1 or self.minibatch < 1 or self.num_envs < 1:
            raise ContractError("epochs, minibatch, and env count must be positive")


class PpoAgent:
    """Policy + value parameter bundle with their optimizer states."""

    def __init__(self, policy_spec, value_spec, policy, value,
                 policy_opt=None, value_opt=None):
        self.policy_spec = policy_spec
        self.value_spec = value_spec
        self.policy = policy
        self.value = value
        self.policy_opt = policy_opt or AdamState(policy.size)
        self.value_opt = value_opt or AdamState(value.size)

    @classmethod
    def fresh(cls, policy_spec, value_spec, rng):
        from ..nets import init_params
        return cls(policy_spec, value_spec,
                   init_params(policy_spec, rng), init_params(value_spec, rng, out_gain=1.0))

    def sample_batch(self, obs_batch, rng):
        return sample_actions(mlp_forward(self.policy_spec, self.policy, obs_batch), rng)

    def policy_fn(self, deterministic=True):
        """(obs, rng) -> action closure for evaluation."""
        def fn(obs, rng):
            head = mlp_forward(self.policy_spec, self.policy, obs[None, :])
            acts = mode_actions(head) if deterministic else sample_actions(head, rng)
            return acts[0]
        return fn


def act(spec, params, obs, deterministic, rng=None):
    obs = np.asarray(obs, dtype=np.float64)
    head = mlp_forward(spec, params, obs[None, :])
    acts = mode_actions(head) if deterministic else sample_actions(head, rng)
    return acts[0]


def attach_estimates(agent, batch, cfg):
    """Fill in values, acting log-probs, and advantages.

    Values and log-probs come from one full-batch forward so that minibatch
    re-evaluation inside ppo_update reproduces them bit for bit (first-epoch
    ratios are exactly 1). Tail values for bootstrap come from a separate
    small forward; they only feed GAE.
    """
    values = mlp_forward(agent.value_spec, agent.value, batch.obs).out[:, 0]
    log_probs = head_log_prob(
        mlp_forward(agent.policy_spec, agent.policy, batch.obs), batch.actions)
    tail_values = mlp_forward(agent.value_spec, agent.value, batch.tail_obs).out[:, 0]
    batch.attach_estimates(values, log_probs, tail_values, cfg.gamma, cfg.lam)


def ppo_minibatch_loss(agent, obs, actions, logp_old, adv, returns, cfg, tape,
                       demo_hook=None, a_hat=0.0):
    """Build the whole minibatch objective on the tape.

    Returns (total, pi_loss, v_loss, ent, demo_stats) where everything but
    demo_stats is a graph node. Split out of ppo_update so the loss can be
    differentiated in isolation (finite-difference checks) with the exact
    code the training loop runs.
    """
    head = mlp_forward(agent.policy_spec, agent.policy, obs, tape=tape)
    logp = head_log_prob(head, actions)
    ratio = ad.exp(ad.sub(logp, logp_old))
    surr = ad.minimum(ad.mul(ratio, adv),
                      ad.mul(ad.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv))
    pi_loss = ad.neg(ad.rmean(surr))
    ent = ad.rmean(head_entropy(head))
    policy_term = ad.sub(pi_loss, ad.mul(ent, cfg.c_ent))

    demo_stats = {}
    if demo_hook is not None:
        demo_term, demo_stats = demo_hook(tape, a_hat)
        policy_term = ad.add(policy_term, demo_term)

    v = mlp_forward(agent.value_spec, agent.value, obs, tape=tape).out
    err = ad.sub(v, returns.reshape(-1, 1))
    v_loss = ad.rmean(ad.mul(err, err))
    total = ad.add(policy_term, v_loss)
    return total, pi_loss, v_loss, ent, demo_stats


def ppo_update(agent, batch, cfg, shuffle_rng, demo_hook=None):
    """Minimize clip surrogate + value MSE - c_ent * entropy over the batch.

    demo_hook(tape, a_hat) may add a demonstration term to the policy loss;
    a_hat is the floor-guarded maximum of this epoch's normalized advantages.
    Returns averaged loss stats. Non-finite minibatch losses are skipped and
    counted in stats["warnings"].
    """
    if batch.advantages is None:
        raise ContractError("advantages not computed; call attach_estimates first")
    adv = batch.advantages
    adv = (adv - adv.mean()) / (adv.std() + ADV_EPS)
    a_hat = float(adv.max())

    n = batch.size
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    demo_sums = {}
    updates = 0
    warnings = 0
    for _ in range(cfg.inner_epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            mb = perm[start:start + cfg.minibatch]
            tape = ad.GradTape(agent.policy, agent.value)
            total, pi_loss, v_loss, ent, demo_stats = ppo_minibatch_loss(
                agent, batch.obs[mb], batch.actions[mb], batch.log_probs[mb],
                adv[mb], batch.returns[mb], cfg, tape,
                demo_hook=demo_hook, a_hat=a_hat)
            if not np.isfinite(ad.val(total)):
                warnings += 1
                print("ppo_update: non-finite loss, skipping minibatch", file=sys.stderr)
                continue
            g_policy, g_value = tape.gradient(total)
            adam_step(agent.policy, g_policy, agent.policy_opt, cfg.lr)
            adam_step(agent.value, g_value, agent.value_opt, cfg.lr)

            sums["policy_loss"] += float(ad.val(pi_loss))
            sums["value_loss"] += float(ad.val(v_loss))
            sums["entropy"] += float(ad.val(ent))
            for k, x in demo_stats.items():
                demo_sums[k] = demo_sums.get(k, 0.0) + x
            updates += 1

    stats = {k: v / max(updates, 1) for k, v in sums.items()}
    stats.update({k: v / max(updates, 1) for k, v in demo_sums.items()})
    stats["warnings"] = warnings
    stats["a_hat"] = a_hat
    return stats


def train_ppo_phase(agent, pool, cfg, writer, act_rng, shuffle_rng, max_epochs,
                    epoch_offset=0, samples_offset=0, demo_hook_factory=None,
                    on_epoch_end=None):
    """Run PPO epochs until max_epochs or the callback asks to stop.

    on_epoch_end(epoch, total_samples) may return True to stop early (plateau
    confirmation, budget bookkeeping, checkpointing all live in the caller's
    callback). Returns (last epoch ran + 1, total samples).
    """
    total = samples_offset
    epoch = epoch_offset
    while epoch < max_epochs:
        batch = collect_rollout(lambda o: agent.sample_batch(o, act_rng),
                                pool, cfg.samples_per_epoch)
        attach_estimates(agent, batch, cfg)
        demo_hook = demo_hook_factory(epoch) if demo_hook_factory is not None else None
        stats = ppo_update(agent, batch, cfg, shuffle_rng, demo_hook=demo_hook)
        total += cfg.samples_per_epoch
        row = {
            "epoch": epoch,
            "total_samples": total,
            "mean_return": np.mean(batch.episode_returns) if batch.episode_returns else np.nan,
            "std_return": np.std(batch.episode_returns) if batch.episode_returns else np.nan,
            "success_rate": np.mean(batch.episode_successes) if batch.episode_successes else 0.0,
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
            "entropy": stats["entropy"],
        }
        for col in writer.columns[8:]:
            row[col] = stats.get(col, 0.0)
        writer.append(row)
        epoch += 1
        if on_epoch_end is not None and on_epoch_end(epoch, total):
            break
    return epoch, total
