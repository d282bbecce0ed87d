"""Soft actor-critic with twin critics, target networks, and a reward hook.

The reward override hook is the seam the adversarial-imitation path plugs
into: it maps (obs, actions, env rewards) to the rewards the critics regress
on. The identity hook gives plain SAC.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import ContractError
from ..nets import MlpSpec, ParamVector, head_log_prob, init_params, mlp_forward
from ..optim import AdamState, adam_step

TARGET_ENTROPY_PER_DIM = -1.0


@dataclass
class SacConfig:
    lr: float = 3e-4
    gamma: float = 0.95
    polyak: float = 0.005          # target <- (1-tau)*target + tau*online
    minibatch: int = 200
    replay_capacity: int = 2_000_000
    update_every: int = 64         # do a round of updates per this many env samples
    updates_per_round: int = 4
    start_steps: int = 1000
    num_envs: int = 4
    samples_per_epoch: int = 10_000
    alpha_mode: str = "auto"       # "auto" tunes toward -action_dim entropy
    alpha_init: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError("gamma must be in [0, 1)")
        if self.update_every < 1 or self.updates_per_round < 1:
            raise ContractError("update cadence must be positive")
        if not 0.0 < self.polyak <= 1.0:
            raise ContractError("polyak coefficient must be in (0, 1]")
        if self.alpha_mode not in ("auto", "fixed"):
            raise ContractError("alpha_mode must be auto or fixed")


class SacAgent:

    def __init__(self, actor_spec, q_spec, actor, q1, q2, q1_targ, q2_targ,
                 log_alpha, actor_opt=None, q1_opt=None, q2_opt=None, alpha_opt=None):
        self.actor_spec = actor_spec
        self.q_spec = q_spec
        self.actor = actor
        self.q1, self.q2 = q1, q2
        self.q1_targ, self.q2_targ = q1_targ, q2_targ
        self.log_alpha = log_alpha
        self.actor_opt = actor_opt or AdamState(actor.size)
        self.q1_opt = q1_opt or AdamState(q1.size)
        self.q2_opt = q2_opt or AdamState(q2.size)
        self.alpha_opt = alpha_opt or AdamState(1)

    @classmethod
    def fresh(cls, obs_dim, action_dim, hidden, rng, min_std=0.01, max_std=2.0,
              alpha_init=0.2):
        actor_spec = MlpSpec(obs_dim, action_dim, hidden, head="gaussian",
                             min_std=min_std, max_std=max_std)
        q_spec = MlpSpec(obs_dim + action_dim, 1, hidden, head="scalar")
        actor = init_params(actor_spec, rng)
        q1 = init_params(q_spec, rng, out_gain=1.0)
        q2 = init_params(q_spec, rng, out_gain=1.0)
        log_alpha = ParamVector(np.array([np.log(alpha_init)]), [("log_alpha", 1, 1)])
        return cls(actor_spec, q_spec, actor, q1, q2, q1.copy(), q2.copy(), log_alpha)

    @property
    def action_dim(self):
        return self.actor_spec.out_dim

    def alpha(self):
        return float(np.exp(self.log_alpha.values[0]))

    def sample_batch(self, obs_batch, rng):
        head = mlp_forward(self.actor_spec, self.actor, obs_batch)
        return ad.val(head.out) + ad.val(head.std) * rng.standard_normal(
            ad.val(head.out).shape)

    def policy_fn(self, deterministic=True):
        def fn(obs, rng):
            head = mlp_forward(self.actor_spec, self.actor, obs[None, :])
            mean = ad.val(head.out)
            if deterministic:
                return mean[0]
            return (mean + ad.val(head.std) * rng.standard_normal(mean.shape))[0]
        return fn


def _q_forward(agent, params, obs, actions, tape=None):
    x = ad.concat([obs, actions], axis=1)
    return mlp_forward(agent.q_spec, params, x, tape=tape).out


def critic_loss_node(agent, obs, acts, y, tape):
    """Joint twin-critic regression loss toward fixed targets y, on the tape.

    Exposed separately so the exact training loss can be finite-difference
    checked against the same code path.
    """
    e1 = ad.sub(_q_forward(agent, agent.q1, obs, acts, tape=tape), y)
    e2 = ad.sub(_q_forward(agent, agent.q2, obs, acts, tape=tape), y)
    return ad.add(ad.rmean(ad.mul(e1, e1)), ad.rmean(ad.mul(e2, e2)))


def actor_loss_node(agent, obs, noise, alpha, tape):
    """Reparameterized actor objective alpha*log pi - min twin Q, on the tape.

    noise is the standard-normal draw reused by the reparameterization, so
    the loss is a deterministic function of the actor parameters.
    """
    head = mlp_forward(agent.actor_spec, agent.actor, obs, tape=tape)
    a_new = ad.add(head.out, ad.mul(head.std, noise))
    logp_new = head_log_prob(head, a_new)
    q_new = ad.minimum(_take_col(_q_forward(agent, agent.q1, obs, a_new)),
                       _take_col(_q_forward(agent, agent.q2, obs, a_new)))
    return ad.rmean(ad.sub(ad.mul(logp_new, alpha), q_new)), logp_new, q_new


def sac_update(agent, sample, cfg, update_rng, reward_hook=None):
    """One gradient update of critics, actor, and (optionally) temperature.

    `sample` is a dict of aligned arrays (obs, actions, rewards, next_obs,
    dones). reward_hook(obs, actions, rewards) -> rewards replaces the env
    reward for every sampled transition, demos included.
    """
    obs = sample["obs"]
    acts = sample["actions"]
    rewards = np.asarray(sample["rewards"], dtype=np.float64)
    if reward_hook is not None:
        rewards = reward_hook(obs, acts, rewards)
    next_obs = sample["next_obs"]
    dones = sample["dones"]
    alpha = agent.alpha()

    # targets: min of twin target critics at a fresh next action, entropy-corrected
    next_head = mlp_forward(agent.actor_spec, agent.actor, next_obs)
    noise = update_rng.standard_normal((obs.shape[0], agent.action_dim))
    a2 = ad.val(next_head.out) + ad.val(next_head.std) * noise
    logp2 = head_log_prob(next_head, a2)
    q1t = _q_forward(agent, agent.q1_targ, next_obs, a2)[:, 0]
    q2t = _q_forward(agent, agent.q2_targ, next_obs, a2)[:, 0]
    v_bar = np.minimum(q1t, q2t) - alpha * logp2
    y = (rewards + cfg.gamma * (1.0 - dones) * v_bar).reshape(-1, 1)

    tape = ad.GradTape(agent.q1, agent.q2)
    critic_loss = critic_loss_node(agent, obs, acts, y, tape)
    if not np.isfinite(ad.val(critic_loss)):
        print("sac_update: non-finite critic loss, skipping", file=sys.stderr)
        return {"warnings": 1}
    g1, g2 = tape.gradient(critic_loss)
    adam_step(agent.q1, g1, agent.q1_opt, cfg.lr)
    adam_step(agent.q2, g2, agent.q2_opt, cfg.lr)

    # actor: minimize alpha * log pi - min Q at reparameterized actions
    tape = ad.GradTape(agent.actor)
    noise = update_rng.standard_normal(acts.shape)
    actor_loss, logp_new, q_new = actor_loss_node(agent, obs, noise, alpha, tape)
    stats = {"warnings": 0}
    if np.isfinite(ad.val(actor_loss)):
        adam_step(agent.actor, tape.gradient(actor_loss), agent.actor_opt, cfg.lr)
    else:
        print("sac_update: non-finite actor loss, skipping", file=sys.stderr)
        stats["warnings"] += 1

    if cfg.alpha_mode == "auto":
        target_entropy = TARGET_ENTROPY_PER_DIM * agent.action_dim
        residual = float(np.mean(ad.val(logp_new)) + target_entropy)
        atape = ad.GradTape(agent.log_alpha)
        alpha_loss = ad.neg(ad.mul(ad.rsum(ad.exp(atape.leaf(agent.log_alpha, "log_alpha"))),
                                   residual))
        adam_step(agent.log_alpha, atape.gradient(alpha_loss), agent.alpha_opt, cfg.lr)

    # Polyak averaging toward the online critics
    for online, targ in ((agent.q1, agent.q1_targ), (agent.q2, agent.q2_targ)):
        targ.values *= 1.0 - cfg.polyak
        targ.values += cfg.polyak * online.values

    stats.update({
        "actor_loss": float(ad.val(actor_loss)),
        "critic_loss": float(ad.val(critic_loss)),
        "entropy": -float(np.mean(ad.val(logp_new))),
        "alpha": agent.alpha(),
        "mean_q": float(np.mean(ad.val(q_new))),
    })
    return stats


def _take_col(x):
    # (B, 1) -> (B,) preserving graph tracking
    if isinstance(x, ad.Node):
        return ad.Node(x.value[:, 0], (x,), lambda g: (g.reshape(-1, 1),))
    return x[:, 0]


def sample_with_demos(replay, demo_arrays, batch_size, demo_fraction, rng):
    """Minibatch mixing replay draws with demonstration transitions.

    demo_arrays is a dict of aligned arrays or None; the demo share is fixed
    per minibatch so the critic always sees both occupancy measures.
    """
    if demo_arrays is None:
        return replay.sample(batch_size, rng)
    n_demo = int(round(batch_size * demo_fraction))
    n_pol = batch_size - n_demo
    pol = replay.sample(n_pol, rng)
    idx = rng.integers(demo_arrays["obs"].shape[0], size=n_demo)
    out = {}
    for k in ("obs", "actions", "rewards", "next_obs", "dones"):
        out[k] = np.concatenate([pol[k], demo_arrays[k][idx]], axis=0)
    out["demo_mask"] = np.concatenate(
        [np.zeros(n_pol, dtype=bool), np.ones(n_demo, dtype=bool)])
    return out


def train_sac_phase(agent, pool, replay, cfg, writer, act_rng, update_rng,
                    total_steps, steps_offset=0, epoch_offset=0, reward_hook=None,
                    demo_arrays=None, demo_fraction=0.25, disc_hook=None,
                    disc_every=100, on_epoch_end=None, counters=None):
    """Off-policy training loop: collect, update on cadence, log per epoch.

    disc_hook(rng) runs discriminator updates; called every disc_every policy
    updates. `counters`, when given, carries the update-cadence state across
    a snapshot/resume cycle: the loop reads since_update / policy_updates
    from it at entry and writes them back at every epoch boundary, so a
    resumed phase replays the exact update schedule of an uninterrupted one.
    Returns (total env steps, epochs done).
    """
    steps = steps_offset
    epoch = epoch_offset
    since_update = counters.get("since_update", 0) if counters else 0
    since_epoch = 0
    policy_updates = counters.get("policy_updates", 0) if counters else 0
    ep_returns, ep_success = [], []
    last_stats = {}
    last_disc = {}
    while steps < total_steps:
        if steps < cfg.start_steps:
            acts = act_rng.uniform(-1.0, 1.0, size=(pool.num_envs, agent.action_dim))
        else:
            acts = agent.sample_batch(pool.obs, act_rng)
        prev_obs = pool.obs.copy()
        rewards, dones, finished = pool.step(acts)
        for i in range(pool.num_envs):
            # next_obs on done rows is the reset observation; targets mask it out
            replay.insert(prev_obs[i], acts[i], rewards[i], pool.obs[i], dones[i])
        for ret, ok, _ in finished:
            ep_returns.append(ret)
            ep_success.append(ok)
        steps += pool.num_envs
        since_update += pool.num_envs
        since_epoch += pool.num_envs

        if steps >= cfg.start_steps and since_update >= cfg.update_every:
            since_update -= cfg.update_every
            if replay.size < cfg.minibatch:
                print("sac: replay smaller than a minibatch, skipping updates",
                      file=sys.stderr)
            else:
                for _ in range(cfg.updates_per_round):
                    sample = sample_with_demos(replay, demo_arrays, cfg.minibatch,
                                               demo_fraction, update_rng)
                    last_stats = sac_update(agent, sample, cfg, update_rng,
                                            reward_hook=reward_hook)
                    policy_updates += 1
                    if disc_hook is not None and policy_updates % disc_every == 0:
                        last_disc = disc_hook(update_rng)

        if since_epoch >= cfg.samples_per_epoch:
            since_epoch -= cfg.samples_per_epoch
            if counters is not None:
                counters["since_update"] = since_update
                counters["policy_updates"] = policy_updates
            row = {
                "epoch": epoch,
                "total_samples": steps,
                "mean_return": np.mean(ep_returns) if ep_returns else np.nan,
                "std_return": np.std(ep_returns) if ep_returns else np.nan,
                "success_rate": np.mean(ep_success) if ep_success else 0.0,
                "policy_loss": last_stats.get("actor_loss", 0.0),
                "value_loss": last_stats.get("critic_loss", 0.0),
                "entropy": last_stats.get("entropy", 0.0),
            }
            for col in writer.columns[8:]:
                row[col] = {**last_stats, **last_disc}.get(col, 0.0)
            writer.append(row)
            ep_returns, ep_success = [], []
            epoch += 1
            if on_epoch_end is not None and on_epoch_end(epoch, steps):
                break
    return steps, epoch
