"""Rollout collection over an environment pool, GAE, and replay storage."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError


class EnvPool:
    """Fixed set of env instances stepped in lockstep.

    Episodes continue across batch boundaries; each env owns its RNG so reset
    draws never depend on its neighbors' episode lengths. `variations`
    restricts which variation each new episode samples (None = all).
    """

    def __init__(self, factory, num_envs, env_rngs, variations=None):
        if len(env_rngs) != num_envs:
            raise ContractError("need one RNG per env")
        self.envs = [factory() for _ in range(num_envs)]
        self.rngs = list(env_rngs)
        self.variations = list(variations) if variations is not None else \
            list(range(self.envs[0].num_variations))
        self.obs = np.stack([self._reset(i) for i in range(num_envs)])
        self.ep_return = np.zeros(num_envs)
        self.ep_success = [False] * num_envs
        self.steps_taken = 0

    def _reset(self, i):
        v = self.variations[int(self.rngs[i].integers(len(self.variations)))]
        return self.envs[i].reset(self.rngs[i], variation=v)

    @property
    def num_envs(self):
        return len(self.envs)

    def step(self, actions):
        """Advance every env one step. Returns (rewards, dones, finished episodes).

        finished is a list of (return, success, terminal_bucket) for episodes
        that ended on this step; their envs are reset in place.
        """
        rewards = np.zeros(self.num_envs)
        dones = np.zeros(self.num_envs, dtype=bool)
        finished = []
        for i, env in enumerate(self.envs):
            obs, r, done, info = env.step(actions[i])
            rewards[i] = r
            dones[i] = done
            self.ep_return[i] += r
            self.ep_success[i] = self.ep_success[i] or info.get("success", False)
            if done:
                finished.append((self.ep_return[i], self.ep_success[i], env.terminal_bucket()))
                self.ep_return[i] = 0.0
                self.ep_success[i] = False
                obs = self._reset(i)
            self.obs[i] = obs
        self.steps_taken += self.num_envs
        return rewards, dones, finished

    def get_state(self):
        return {
            "env_states": [e.get_state() for e in self.envs],
            "rng_states": [r.bit_generator.state for r in self.rngs],
            "obs": self.obs.copy(),
            "ep_return": self.ep_return.copy(),
            "ep_success": list(self.ep_success),
            "steps_taken": self.steps_taken,
            "variations": list(self.variations),
        }

    def set_state(self, state):
        for e, s in zip(self.envs, state["env_states"]):
            e.set_state(s)
        for r, s in zip(self.rngs, state["rng_states"]):
            r.bit_generator.state = s
        self.obs = np.asarray(state["obs"]).copy()
        self.ep_return = np.asarray(state["ep_return"]).copy()
        self.ep_success = list(state["ep_success"])
        self.steps_taken = int(state["steps_taken"])
        self.variations = list(state["variations"])


class RolloutBatch:
    """On-policy batch in env-major layout: index = env * T + t."""

    def __init__(self, obs, actions, rewards, dones, tail_obs):
        self.num_envs, self.T = rewards.shape
        n = self.num_envs * self.T
        self.obs = obs.reshape(n, -1)
        self.actions = actions.reshape((n,) + actions.shape[2:])
        self.rewards = rewards.reshape(n)
        self.dones = dones.reshape(n)
        self.tail_obs = tail_obs
        self.values = None
        self.log_probs = None
        self.advantages = None
        self.returns = None
        self.episode_returns = []
        self.episode_successes = []

    @property
    def size(self):
        return self.rewards.size

    def attach_estimates(self, values, log_probs, tail_values, gamma, lam):
        """Store value/log-prob estimates and run GAE per env segment."""
        self.values = values
        self.log_probs = log_probs
        adv = np.zeros(self.size)
        ret = np.zeros(self.size)
        for e in range(self.num_envs):
            s = slice(e * self.T, (e + 1) * self.T)
            adv[s], ret[s] = compute_gae(
                self.rewards[s], values[s], float(tail_values[e]), self.dones[s], gamma, lam)
        self.advantages = adv
        self.returns = ret


def collect_rollout(sample_actions_fn, pool, n_samples):
    """Step the pool until n_samples transitions are gathered.

    sample_actions_fn maps the (E, obs_dim) observation batch to one action per
    env. Partial episodes at the boundary stay partial; GAE later bootstraps
    their tails.
    """
    E = pool.num_envs
    if n_samples % E != 0:
        raise ContractError(f"samples {n_samples} not divisible by pool size {E}")
    T = n_samples // E
    D = pool.obs.shape[1]
    obs = np.zeros((E, T, D))
    rewards = np.zeros((E, T))
    dones = np.zeros((E, T), dtype=bool)
    actions = None
    ep_returns, ep_success = [], []
    for t in range(T):
        obs[:, t] = pool.obs
        acts = np.asarray(sample_actions_fn(pool.obs))
        if actions is None:
            actions = np.zeros((E, T) + acts.shape[1:], dtype=acts.dtype)
        actions[:, t] = acts
        r, d, finished = pool.step(acts)
        rewards[:, t] = r
        dones[:, t] = d
        for ret, ok, _ in finished:
            ep_returns.append(ret)
            ep_success.append(ok)
    batch = RolloutBatch(obs, actions, rewards, dones, pool.obs.copy())
    batch.episode_returns = ep_returns
    batch.episode_successes = ep_success
    return batch


def compute_gae(rewards, values, bootstrap, dones, gamma, lam):
    """Backward GAE recursion over one env segment.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}

    Episode ends cut the recursion, so advantages never bleed across dones;
    `bootstrap` is V of the observation after the last step (used only when
    the segment ends mid-episode). Returns (advantages, returns-to-go).
    """
    T = len(rewards)
    adv = np.zeros(T)
    next_v = bootstrap
    acc = 0.0
    for t in range(T - 1, -1, -1):
        nonterm = 1.0 - float(dones[t])
        delta = rewards[t] + gamma * next_v * nonterm - values[t]
        acc = delta + gamma * lam * nonterm * acc
        adv[t] = acc
        next_v = values[t]
    return adv, adv + values


class ReplayBuffer:
    """Ring buffer of transitions with uniform sampling."""

    def __init__(self, capacity, obs_dim, action_dim):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.dones = np.zeros(self.capacity)
        self.demo_mask = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self._cursor = 0

    def insert(self, obs, action, reward, next_obs, done, demo=False):
        i = self._cursor
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self.demo_mask[i] = demo
        self._cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size, rng):
        if self.size == 0:
            raise ContractError("replay buffer is empty")
        idx = rng.integers(self.size, size=batch_size)
        return {
            "obs": self.obs[idx], "actions": self.actions[idx],
            "rewards": self.rewards[idx], "next_obs": self.next_obs[idx],
            "dones": self.dones[idx], "demo_mask": self.demo_mask[idx],
            "indices": idx,
        }

    def get_state(self):
        n = self.size
        return {"obs": self.obs[:n].copy(), "actions": self.actions[:n].copy(),
                "rewards": self.rewards[:n].copy(), "next_obs": self.next_obs[:n].copy(),
                "dones": self.dones[:n].copy(), "demo_mask": self.demo_mask[:n].copy(),
                "cursor": self._cursor, "size": n}

    def set_state(self, state):
        n = int(state["size"])
        self.obs[:n] = state["obs"]
        self.actions[:n] = state["actions"]
        self.rewards[:n] = state["rewards"]
        self.next_obs[:n] = state["next_obs"]
        self.dones[:n] = state["dones"]
        self.demo_mask[:n] = state["demo_mask"]
        self._cursor = int(state["cursor"])
        self.size = n
