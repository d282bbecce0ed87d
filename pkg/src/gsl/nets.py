"""Flat parameter vectors, MLP forward passes, and policy/value heads.

All parameters for a network live in one flat float64 array plus a shape
manifest, so optimizers, checkpoints, and gradient tapes all deal in plain
vectors. Named blocks are views into the flat storage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError

LOG_2PI = float(np.log(2.0 * np.pi))


class ParamVector:
    """Flat float64 parameter storage with a (name, rows, cols) manifest."""

    def __init__(self, values, manifest):
        self.values = np.asarray(values, dtype=np.float64)
        self.manifest = [(str(n), int(r), int(c)) for n, r, c in manifest]
        if self.values.ndim != 1:
            raise ContractError("parameter storage must be 1-d")
        self._offsets = {}
        off = 0
        for name, rows, cols in self.manifest:
            if name in self._offsets:
                raise ContractError(f"duplicate block name {name!r}")
            if rows <= 0 or cols <= 0:
                raise ContractError(f"block {name!r} has non-positive shape")
            self._offsets[name] = (off, rows, cols)
            off += rows * cols
        if off != self.values.size:
            raise ContractError(f"manifest covers {off} entries but storage has {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("parameter storage contains non-finite entries")

    @property
    def size(self):
        return self.values.size

    def locate(self, name):
        try:
            return self._offsets[name]
        except KeyError:
            raise ContractError(f"unknown block {name!r}") from None

    def block(self, name):
        """Writable (rows, cols) view into the flat storage."""
        off, rows, cols = self.locate(name)
        return self.values[off:off + rows * cols].reshape(rows, cols)

    def copy(self):
        return ParamVector(self.values.copy(), self.manifest)

    def replace(self, new_values):
        new_values = np.asarray(new_values, dtype=np.float64)
        if new_values.shape != self.values.shape:
            raise ContractError("replacement vector has the wrong length")
        self.values[:] = new_values


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one network: shared trunk plus a typed head.

    head is one of "categorical" (logits over out_dim actions), "gaussian"
    (mean of out_dim continuous actions plus a state-independent log-std
    block), or "scalar" (plain out_dim outputs, e.g. values or logits).
    """

    in_dim: int
    out_dim: int
    hidden: tuple = (256, 256)
    head: str = "scalar"
    min_std: float = 0.1
    max_std: float = 2.0

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ContractError("in_dim and out_dim must be positive")
        if any(h <= 0 for h in self.hidden):
            raise ContractError("hidden sizes must be positive")
        if self.head not in ("categorical", "gaussian", "scalar"):
            raise ContractError(f"unknown head {self.head!r}")
        if not (0.0 < self.min_std <= self.max_std):
            raise ContractError("need 0 < min_std <= max_std")

    def manifest(self):
        rows = self.in_dim
        out = []
        for i, h in enumerate(self.hidden):
            out.append((f"h{i}_w", rows, h))
            out.append((f"h{i}_b", 1, h))
            rows = h
        out.append(("out_w", rows, self.out_dim))
        out.append(("out_b", 1, self.out_dim))
        if self.head == "gaussian":
            out.append(("log_std", 1, self.out_dim))
        return out

    def num_params(self):
        return sum(r * c for _, r, c in self.manifest())


def orthogonal(rng, rows, cols, gain=1.0):
    """Orthogonal init: QR of a standard normal draw, sign-corrected."""
    n = max(rows, cols)
    a = rng.standard_normal((n, min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    q = q[:rows, :cols] if rows >= cols else q[:cols, :rows].T
    return gain * q


def init_params(spec, rng, out_gain=0.01):
    """Fresh ParamVector: orthogonal weights (gain 1 hidden, out_gain head), zero biases."""
    manifest = spec.manifest()
    pv = ParamVector(np.zeros(sum(r * c for _, r, c in manifest)), manifest)
    for name, rows, cols in manifest:
        if name.endswith("_w"):
            gain = out_gain if name == "out_w" else 1.0
            pv.block(name)[:] = orthogonal(rng, rows, cols, gain)
        elif name == "log_std":
            pv.block(name)[:] = np.log(np.clip(1.0, spec.min_std, spec.max_std))
    return pv


@dataclass
class HeadOut:
    """Forward-pass result. out is logits / mean / raw scalar depending on kind."""

    kind: str
    out: object          # (B, out_dim) ndarray or Node
    std: object = None   # (1, out_dim), gaussian only


def mlp_forward(spec, params, x, tape=None):
    """Run the network on a (B, in_dim) batch.

    Without a tape all values stay plain ndarrays; with one, parameter blocks
    become tape leaves and the result participates in the gradient sweep. Both
    paths execute the same numpy calls, so values agree bit for bit.
    """
    if not isinstance(x, ad.Node):
        x = np.asarray(x, dtype=np.float64)
    xv = ad.val(x)
    if xv.ndim != 2 or xv.shape[1] != spec.in_dim:
        raise ContractError(f"expected input of shape (B, {spec.in_dim}), got {xv.shape}")

    def p(name):
        return tape.leaf(params, name) if tape is not None else params.block(name)

    h = x
    for i in range(len(spec.hidden)):
        h = ad.relu(ad.add(ad.matmul(h, p(f"h{i}_w")), p(f"h{i}_b")))
    out = ad.add(ad.matmul(h, p("out_w")), p("out_b"))

    if spec.head == "gaussian":
        std = ad.clip(ad.exp(p("log_std")), spec.min_std, spec.max_std)
        return HeadOut("gaussian", out, std)
    return HeadOut(spec.head, out)


def head_log_prob(head, actions):
    """Per-sample log-probability of the given actions, shape (B,)."""
    if head.kind == "categorical":
        actions = np.asarray(actions)
        logp_all = ad.sub(head.out, _expand(ad.logsumexp(head.out, axis=1)))
        return ad.take_per_row(logp_all, actions)
    if head.kind == "gaussian":
        if not isinstance(actions, ad.Node):
            actions = np.asarray(actions, dtype=np.float64)
        mean, std = head.out, head.std
        z = ad.div(ad.sub(actions, mean), std)
        quad = ad.mul(ad.rsum(ad.mul(z, z), axis=1), 0.5)
        d = np.shape(ad.val(mean))[1]
        log_norm = ad.add(ad.rsum(ad.log(std), axis=1), 0.5 * d * LOG_2PI)  # (1,)
        return ad.neg(ad.add(quad, log_norm))
    raise ContractError("log-prob is only defined for policy heads")


def head_entropy(head):
    """Entropy of the action distribution. (B,) categorical, (1,) gaussian."""
    if head.kind == "categorical":
        logp_all = ad.sub(head.out, _expand(ad.logsumexp(head.out, axis=1)))
        probs = ad.exp(logp_all)
        return ad.neg(ad.rsum(ad.mul(probs, logp_all), axis=1))
    if head.kind == "gaussian":
        d = np.shape(ad.val(head.out))[1]
        return ad.add(ad.rsum(ad.log(head.std), axis=1), 0.5 * d * (1.0 + LOG_2PI))
    raise ContractError("entropy is only defined for policy heads")


def head_density(head, actions, cap=1.0e3):
    """exp(log-prob) capped at `cap`, for losses on raw probability mass."""
    lp = head_log_prob(head, actions)
    return ad.minimum(ad.exp(lp), cap)


def policy_head_eval(head, actions):
    """(log_prob, entropy) under the current distribution parameters."""
    return head_log_prob(head, actions), head_entropy(head)


def sample_actions(head, rng):
    """Draw one action per row. Plain-array heads only (no tape)."""
    if head.kind == "categorical":
        logits = ad.val(head.out)
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        cdf = np.cumsum(p, axis=1)
        u = rng.random((logits.shape[0], 1))
        return (u > cdf[:, :-1]).sum(axis=1) if logits.shape[1] > 1 else np.zeros(
            logits.shape[0], dtype=np.int64)
    if head.kind == "gaussian":
        mean = ad.val(head.out)
        std = ad.val(head.std)
        return mean + std * rng.standard_normal(mean.shape)
    raise ContractError("cannot sample from a scalar head")


def mode_actions(head):
    """Greedy action: argmax logits, or the mean for gaussian heads."""
    if head.kind == "categorical":
        return np.argmax(ad.val(head.out), axis=1)
    if head.kind == "gaussian":
        return ad.val(head.out).copy()
    raise ContractError("scalar heads have no actions")


def _expand(x):
    # (B,) -> (B, 1) for broadcasting against logits
    v = ad.val(x)
    if isinstance(x, ad.Node):
        return ad.Node(v.reshape(-1, 1), (x,), lambda g: (g.reshape(-1),))
    return v.reshape(-1, 1)
