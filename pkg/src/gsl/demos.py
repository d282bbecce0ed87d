"""Demonstration storage: recording, filtering, persistence, and sampling.

Specialists (and optionally the generalist) roll out episodes, keep only the
trajectories whose return clears a threshold tau, and persist them to a
compact binary file. Consolidation later samples (state, action) pairs or
whole transitions from the merged store.

File layout: 8-byte magic, u32 length-prefixed JSON header (env name, obs
dim, action kind and stored width, tau, record count), then length-prefixed
records, then a trailing CRC32 over everything before it. All integers and
reals are little-endian; reals are 64-bit. Serialization is deterministic,
so write -> read -> write reproduces the file byte for byte.
"""

import json
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DemoFormatError, InsufficientDemosError

MAGIC = b"GSLDEMO1"

_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_F8 = struct.Struct("<d")


@dataclass(frozen=True)
class DemoMeta:
    """What environment the demos came from, enough to validate consumers."""

    env: str
    obs_dim: int
    action_kind: str           # "categorical" | "continuous"
    action_dim: int            # stored per-step action width (1 for categorical)

    def __post_init__(self):
        if self.action_kind not in ("categorical", "continuous"):
            raise ContractError(f"unknown action kind {self.action_kind!r}")
        if self.obs_dim < 1 or self.action_dim < 1:
            raise ContractError("dimensions must be positive")

    @classmethod
    def from_env(cls, env, name):
        kind = "categorical" if env.action_kind == "discrete" else env.action_kind
        width = 1 if kind == "categorical" else int(env.action_dim)
        return cls(name, int(env.obs_dim), kind, width)


class DemoRecord:
    """One kept trajectory with its provenance.

    Arrays are row-per-step: obs (T, obs_dim), actions (T, action_dim) for
    continuous or (T,) ints for categorical, rewards (T,), next_obs like obs,
    dones (T,) bool. total_return must re-sum from rewards exactly.
    """

    __slots__ = ("variation", "source", "checkpoint_id", "total_return",
                 "obs", "actions", "rewards", "next_obs", "dones")

    def __init__(self, variation, source, checkpoint_id, total_return,
                 obs, actions, rewards, next_obs, dones):
        self.variation = int(variation)
        self.source = str(source)
        self.checkpoint_id = str(checkpoint_id)
        self.total_return = float(total_return)
        self.obs = np.asarray(obs, dtype=np.float64)
        self.actions = np.asarray(actions)
        self.rewards = np.asarray(rewards, dtype=np.float64)
        self.next_obs = np.asarray(next_obs, dtype=np.float64)
        self.dones = np.asarray(dones, dtype=bool)
        T = self.rewards.size
        if T < 1:
            raise ContractError("empty trajectory")
        if not (len(self.obs) == len(self.actions) == len(self.next_obs)
                == len(self.dones) == T):
            raise ContractError("trajectory arrays disagree on length")
        if abs(self.total_return - float(np.sum(self.rewards))) > 1e-12:
            raise ContractError(
                f"total return {self.total_return} does not re-sum from rewards")

    def __len__(self):
        return int(self.rewards.size)


class DemoInventory:
    """Records grouped by variation, all satisfying the stored threshold."""

    def __init__(self, tau, meta, records=()):
        self.tau = float(tau)
        self.meta = meta
        self.by_variation = {}
        for rec in records:
            self._admit(rec)

    def _admit(self, rec):
        if rec.total_return < self.tau:
            raise ContractError(
                f"record return {rec.total_return} below threshold {self.tau}")
        if rec.obs.shape[1] != self.meta.obs_dim:
            raise ContractError("record obs width does not match inventory meta")
        self.by_variation.setdefault(rec.variation, []).append(rec)

    @property
    def counts(self):
        return {v: len(rs) for v, rs in sorted(self.by_variation.items())}

    @property
    def num_records(self):
        return sum(len(rs) for rs in self.by_variation.values())

    @property
    def total_steps(self):
        return sum(len(r) for rs in self.by_variation.values() for r in rs)

    def records(self):
        """All records in deterministic (variation, insertion) order."""
        for v in sorted(self.by_variation):
            yield from self.by_variation[v]

    def packed(self, variations=None):
        """Concatenate transitions into flat arrays for batch sampling."""
        recs = [r for r in self.records()
                if variations is None or r.variation in set(variations)]
        if not recs:
            raise ContractError("no demo records match the requested variations")
        cat = np.concatenate
        return {
            "obs": cat([r.obs for r in recs]),
            "actions": cat([r.actions for r in recs]),
            "rewards": cat([r.rewards for r in recs]),
            "next_obs": cat([r.next_obs for r in recs]),
            "dones": cat([r.dones for r in recs]).astype(np.float64),
            "variations": cat([np.full(len(r), r.variation) for r in recs]),
        }

    def merge(self, other):
        """Union of two inventories; an empty side adopts the other's tau."""
        if self.num_records and other.num_records:
            if self.tau != other.tau:
                raise ContractError(
                    f"cannot merge inventories with different thresholds "
                    f"({self.tau} vs {other.tau})")
            if self.meta != other.meta:
                raise ContractError("cannot merge inventories from different envs")
        base = self if self.num_records else other
        out = DemoInventory(base.tau, base.meta)
        for rec in self.records():
            out._admit(rec)
        for rec in other.records():
            out._admit(rec)
        return out


class DemoSampler:
    """Uniform without-replacement transition sampler, one pass at a time.

    Each pass is a fresh shuffle of every stored transition; draws walk the
    permutation and reshuffle when it runs out, so within a pass no pair is
    seen twice.
    """

    def __init__(self, inventory, rng, variations=None):
        self.arrays = inventory.packed(variations)
        self._n = len(self.arrays["rewards"])
        self._rng = rng
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0

    def __len__(self):
        return self._n

    def draw(self, batch_size):
        if batch_size < 1:
            raise ContractError("batch size must be positive")
        idx = np.empty(batch_size, dtype=np.int64)
        filled = 0
        while filled < batch_size:
            if self._pos >= len(self._order):
                self._order = self._rng.permutation(self._n)
                self._pos = 0
            take = min(batch_size - filled, len(self._order) - self._pos)
            idx[filled:filled + take] = self._order[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return {k: v[idx] for k, v in self.arrays.items()}


# ------------------------------------------------------------------ recording


def run_demo_episode(policy_fn, env, rng, variation):
    """Roll out one episode and return the raw trajectory arrays."""
    obs_rows, act_rows, rew_rows, next_rows, done_rows = [], [], [], [], []
    obs = env.reset(rng, variation=variation)
    done = False
    while not done:
        action = policy_fn(obs, rng)
        next_obs, reward, done, info = env.step(action)
        obs_rows.append(obs)
        act_rows.append(action)
        rew_rows.append(reward)
        next_rows.append(next_obs)
        done_rows.append(done)
        obs = next_obs
    return (np.asarray(obs_rows), np.asarray(act_rows), np.asarray(rew_rows),
            np.asarray(next_rows), np.asarray(done_rows))


def record_and_filter(policy_fn, env, variation_ids, target_steps, tau, rng,
                      meta=None, source="specialist", checkpoint_id=""):
    """Roll out on the given variations, keep trajectories with return >= tau.

    Cycles through the variations round-robin until the kept step count
    reaches target_steps or the attempt budget (10x target, counted in
    attempted steps) runs out. If the budget runs out and some requested
    variation has no kept trajectory at all, that is an error naming the
    variation; a partial inventory with every variation represented is fine.
    Returns (inventory, attempted_steps) so callers can charge the rollout
    cost to their sample budget.
    """
    if target_steps <= 0:
        raise ContractError("target step count must be positive")
    variation_ids = list(variation_ids)
    if not variation_ids:
        raise ContractError("no variations to record on")
    if meta is None:
        meta = DemoMeta.from_env(env, type(env).__name__)
    cap = 10 * target_steps
    kept = []
    kept_per_var = {v: 0 for v in variation_ids}
    kept_steps = 0
    attempted_steps = 0
    i = 0
    while kept_steps < target_steps and attempted_steps < cap:
        v = variation_ids[i % len(variation_ids)]
        i += 1
        obs, actions, rewards, next_obs, dones = run_demo_episode(
            policy_fn, env, rng, v)
        attempted_steps += len(rewards)
        total = float(np.sum(rewards))
        if total >= tau:
            kept.append(DemoRecord(v, source, checkpoint_id, total,
                                   obs, actions, rewards, next_obs, dones))
            kept_per_var[v] += 1
            kept_steps += len(rewards)
    if kept_steps < target_steps:
        for v in variation_ids:
            if kept_per_var[v] == 0:
                raise InsufficientDemosError(
                    v, f"no trajectory on variation {v} reached return {tau} "
                       f"within {cap} attempted steps")
    return DemoInventory(tau, meta, kept), attempted_steps


# ---------------------------------------------------------------- persistence


def _pack_record(rec, meta):
    out = bytearray()
    out += _U32.pack(rec.variation)
    src = rec.source.encode("utf-8")
    ckpt = rec.checkpoint_id.encode("utf-8")
    out += _U16.pack(len(src)) + src
    out += _U16.pack(len(ckpt)) + ckpt
    out += _F8.pack(rec.total_return)
    T = len(rec)
    out += _U32.pack(T)
    out += np.ascontiguousarray(rec.obs, dtype="<f8").tobytes()
    acts = np.asarray(rec.actions, dtype="<f8").reshape(T, meta.action_dim)
    out += acts.tobytes()
    out += np.ascontiguousarray(rec.rewards, dtype="<f8").tobytes()
    out += np.ascontiguousarray(rec.next_obs, dtype="<f8").tobytes()
    out += rec.dones.astype(np.uint8).tobytes()
    return bytes(out)


def save_inventory(inventory, path):
    meta = inventory.meta
    header = json.dumps(
        {"action_dim": meta.action_dim, "action_kind": meta.action_kind,
         "count": inventory.num_records, "env": meta.env,
         "obs_dim": meta.obs_dim, "tau": inventory.tau},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = bytearray(MAGIC)
    blob += _U32.pack(len(header)) + header
    for rec in inventory.records():
        body = _pack_record(rec, meta)
        blob += _U32.pack(len(body)) + body
    blob += _U32.pack(zlib.crc32(bytes(blob)))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(bytes(blob))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise DemoFormatError("demo file truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return _U32.unpack(self.take(4))[0]

    def u16(self):
        return _U16.unpack(self.take(2))[0]

    def f8(self):
        return _F8.unpack(self.take(8))[0]


def load_inventory(path):
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 8 or blob[:len(MAGIC)] != MAGIC:
        raise DemoFormatError(f"{path} is not a demo file")
    stored_crc = _U32.unpack(blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise DemoFormatError(f"{path} failed its checksum")
    r = _Reader(blob[:-4])
    r.take(len(MAGIC))
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
        meta = DemoMeta(header["env"], header["obs_dim"], header["action_kind"],
                        header["action_dim"])
        count = header["count"]
        tau = header["tau"]
        records = []
        for _ in range(count):
            body = _Reader(r.take(r.u32()))
            variation = body.u32()
            source = body.take(body.u16()).decode("utf-8")
            ckpt = body.take(body.u16()).decode("utf-8")
            total = body.f8()
            T = body.u32()
            obs = np.frombuffer(body.take(8 * T * meta.obs_dim),
                                dtype="<f8").reshape(T, meta.obs_dim)
            acts = np.frombuffer(body.take(8 * T * meta.action_dim),
                                 dtype="<f8").reshape(T, meta.action_dim)
            if meta.action_kind == "categorical":
                acts = acts[:, 0].astype(np.int64)
            rewards = np.frombuffer(body.take(8 * T), dtype="<f8")
            next_obs = np.frombuffer(body.take(8 * T * meta.obs_dim),
                                     dtype="<f8").reshape(T, meta.obs_dim)
            dones = np.frombuffer(body.take(T), dtype=np.uint8).astype(bool)
            if body.pos != len(body.buf):
                raise DemoFormatError("record has trailing bytes")
            records.append(DemoRecord(variation, source, ckpt, total,
                                      obs, acts, rewards, next_obs, dones))
        if r.pos != len(r.buf):
            raise DemoFormatError("file has bytes past the declared records")
    except (KeyError, ValueError, struct.error) as e:
        raise DemoFormatError(f"malformed demo file {path}: {e}") from e
    except ContractError as e:
        raise DemoFormatError(f"demo file {path} violates invariants: {e}") from e
    return DemoInventory(tau, meta, records)


def merge_and_load(paths):
    """Load several demo files and union them into one inventory."""
    paths = list(paths)
    if not paths:
        raise ContractError("no demo files to load")
    out = load_inventory(paths[0])
    for p in paths[1:]:
        out = out.merge(load_inventory(p))
    return out
