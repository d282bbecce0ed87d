"""Reverse-mode automatic differentiation over numpy float64 arrays.

Every op below accepts either plain ndarrays or `Node`s. With plain inputs the
op just computes the numpy result, so untracked code paths (rollouts, eval)
and tracked code paths (loss construction) run the exact same arithmetic and
produce bitwise-identical values. With at least one `Node` input the op also
records a backward closure for the reverse sweep.

The graph is tiny (tens of nodes per loss, each holding whole-minibatch
arrays), so a dict-of-nodes sweep ordered by creation index is plenty fast.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ContractError

_counter = itertools.count()


class Node:
    __slots__ = ("value", "parents", "bwd", "oid", "slot")

    def __init__(self, value, parents=(), bwd=None, slot=None):
        self.value = value
        self.parents = parents
        self.bwd = bwd  # grad_out -> tuple of grads aligned with parents
        self.oid = next(_counter)
        self.slot = slot  # (flat grad accumulator, offset, size) for leaves


def val(x):
    """Underlying ndarray of a Node, or the input unchanged."""
    return x.value if isinstance(x, Node) else x


def is_node(x):
    return isinstance(x, Node)


def _unbroadcast(g, shape):
    # collapse a broadcast gradient back to the parent's shape
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(a, b, out, bwd):
    if not (isinstance(a, Node) or isinstance(b, Node)):
        return out
    parents = []
    picks = []
    if isinstance(a, Node):
        picks.append(0)
        parents.append(a)
    if isinstance(b, Node):
        picks.append(1)
        parents.append(b)

    def closure(g):
        full = bwd(g)
        return tuple(full[i] for i in picks)

    return Node(out, tuple(parents), closure)


def _unary(x, out, bwd):
    if not isinstance(x, Node):
        return out
    return Node(out, (x,), lambda g: (bwd(g),))


# ---------------------------------------------------------------- arithmetic


def add(a, b):
    av, bv = val(a), val(b)
    out = np.add(av, bv)
    ash, bsh = np.shape(av), np.shape(bv)
    return _binary(a, b, out, lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh)))


def sub(a, b):
    av, bv = val(a), val(b)
    out = np.subtract(av, bv)
    ash, bsh = np.shape(av), np.shape(bv)
    return _binary(a, b, out, lambda g: (_unbroadcast(g, ash), _unbroadcast(-g, bsh)))


def mul(a, b):
    av, bv = val(a), val(b)
    out = np.multiply(av, bv)
    ash, bsh = np.shape(av), np.shape(bv)
    return _binary(a, b, out, lambda g: (_unbroadcast(g * bv, ash), _unbroadcast(g * av, bsh)))


def div(a, b):
    av, bv = val(a), val(b)
    out = np.divide(av, bv)
    ash, bsh = np.shape(av), np.shape(bv)
    return _binary(
        a, b, out,
        lambda g: (_unbroadcast(g / bv, ash), _unbroadcast(-g * av / (bv * bv), bsh)),
    )


def neg(a):
    return _unary(a, np.negative(val(a)), lambda g: -g)


def matmul(a, b):
    av, bv = val(a), val(b)
    if np.ndim(av) != 2 or np.ndim(bv) != 2:
        raise ContractError("matmul expects 2-d operands")
    out = np.matmul(av, bv)
    return _binary(a, b, out, lambda g: (np.matmul(g, bv.T), np.matmul(av.T, g)))


# -------------------------------------------------------------- elementwise


def exp(x):
    out = np.exp(val(x))
    return _unary(x, out, lambda g: g * out)


def log(x):
    xv = val(x)
    return _unary(x, np.log(xv), lambda g: g / xv)


def sqrt(x):
    out = np.sqrt(val(x))
    return _unary(x, out, lambda g: g * (0.5 / out))


def relu(x):
    xv = val(x)
    out = np.maximum(xv, 0.0)
    return _unary(x, out, lambda g: g * (xv > 0.0))


def tanh(x):
    out = np.tanh(val(x))
    return _unary(x, out, lambda g: g * (1.0 - out * out))


def sigmoid(x):
    xv = val(x)
    # stable in both tails
    out = np.where(xv >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(xv))),
                   np.exp(-np.abs(xv)) / (1.0 + np.exp(-np.abs(xv))))
    return _unary(x, out, lambda g: g * out * (1.0 - out))


def minimum(a, b):
    av, bv = val(a), val(b)
    out = np.minimum(av, bv)
    mask = av <= bv  # ties route to the first argument
    ash, bsh = np.shape(av), np.shape(bv)
    return _binary(a, b, out, lambda g: (_unbroadcast(g * mask, ash), _unbroadcast(g * ~mask, bsh)))


def maximum(a, b):
    av, bv = val(a), val(b)
    out = np.maximum(av, bv)
    mask = av >= bv
    ash, bsh = np.shape(av), np.shape(bv)
    return _binary(a, b, out, lambda g: (_unbroadcast(g * mask, ash), _unbroadcast(g * ~mask, bsh)))


def clip(x, lo, hi):
    """Clamp to constant bounds; gradient passes only inside [lo, hi]."""
    xv = val(x)
    out = np.clip(xv, lo, hi)
    mask = (xv >= lo) & (xv <= hi)
    return _unary(x, out, lambda g: g * mask)


# ---------------------------------------------------------------- reductions


def rsum(x, axis=None):
    xv = val(x)
    out = np.sum(xv, axis=axis)
    shape = np.shape(xv)

    def bwd(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), shape).copy()

    return _unary(x, out, bwd)


def rmean(x, axis=None):
    xv = val(x)
    out = np.mean(xv, axis=axis)
    shape = np.shape(xv)
    n = np.size(xv) if axis is None else shape[axis]

    def bwd(g):
        if axis is None:
            return np.broadcast_to(g / n, shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy()

    return _unary(x, out, bwd)


# ------------------------------------------------------------ shape plumbing


def concat(parts, axis=1):
    vals = [val(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    if not any(isinstance(p, Node) for p in parts):
        return out
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]
    parents = tuple(p for p in parts if isinstance(p, Node))
    tracked = [i for i, p in enumerate(parts) if isinstance(p, Node)]

    def bwd(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(pieces[i] for i in tracked)

    return Node(out, parents, bwd)


def take_per_row(x, idx):
    """out[i] = x[i, idx[i]] for a 2-d input and integer index vector."""
    xv = val(x)
    idx = np.asarray(idx)
    if np.ndim(xv) != 2 or idx.ndim != 1 or idx.shape[0] != xv.shape[0]:
        raise ContractError("take_per_row expects (B, n) values and a length-B index vector")
    if idx.min() < 0 or idx.max() >= xv.shape[1]:
        raise ContractError("take_per_row index out of range")
    rows = np.arange(xv.shape[0])
    out = xv[rows, idx]

    def bwd(g):
        z = np.zeros_like(xv)
        np.add.at(z, (rows, idx), g)
        return z

    return _unary(x, out, bwd)


def stop_grad(x):
    """Detach: returns the plain ndarray, severing the graph."""
    return val(x)


def logsumexp(x, axis=1):
    """Stable log-sum-exp built from primitive ops, so the gradient is exact."""
    xv = val(x)
    m = np.max(xv, axis=axis, keepdims=True)  # constant shift
    z = rsum(exp(sub(x, m)), axis=axis)
    return add(log(z), np.squeeze(m, axis=axis))


# ------------------------------------------------------------- reverse sweep


def backward(loss):
    """Run the reverse sweep from a scalar loss.

    Leaf nodes (those carrying a `slot`) have their gradients accumulated
    into the flat arrays the slot points at. Returns nothing.
    """
    if not isinstance(loss, Node):
        raise ContractError("loss is not tracked by the tape")
    if np.size(loss.value) != 1:
        raise ContractError("loss must be scalar")

    # reachable subgraph
    seen = {id(loss): loss}
    stack = [loss]
    while stack:
        n = stack.pop()
        for p in n.parents:
            if id(p) not in seen:
                seen[id(p)] = p
                stack.append(p)

    order = sorted(seen.values(), key=lambda n: n.oid, reverse=True)
    grads = {id(loss): np.ones_like(np.asarray(loss.value, dtype=np.float64))}

    for n in order:
        g = grads.pop(id(n), None)
        if g is None:
            continue  # not on a path to the loss
        if n.slot is not None:
            acc, off, size = n.slot
            acc[off:off + size] += np.asarray(g, dtype=np.float64).reshape(-1)
        if n.bwd is None:
            continue
        for p, pg in zip(n.parents, n.bwd(g)):
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


class GradTape:
    """Hands out leaf nodes for a flat parameter vector and collects its gradient.

    One tape per loss evaluation. `leaf(pv, name)` wraps the named block as a
    graph leaf viewing the live parameter storage; after `gradient(loss)` the
    flat gradient (same length as `pv.values`, zeros for unreached blocks) is
    returned.
    """

    def __init__(self, *param_vectors):
        self.vectors = list(param_vectors)
        self.flat_grads = [np.zeros(pv.values.size) for pv in self.vectors]
        self._index = {id(pv): i for i, pv in enumerate(self.vectors)}

    def leaf(self, pv, name):
        i = self._index.get(id(pv))
        if i is None:
            raise ContractError("parameter vector was not registered with this tape")
        off, rows, cols = pv.locate(name)
        value = pv.values[off:off + rows * cols].reshape(rows, cols)
        return Node(value, slot=(self.flat_grads[i], off, rows * cols))

    def gradient(self, loss):
        """Reverse sweep; returns the flat gradient per registered vector.

        A single vector registration returns the bare array rather than a list.
        """
        for g in self.flat_grads:
            g.fill(0.0)
        backward(loss)
        if len(self.flat_grads) == 1:
            return self.flat_grads[0]
        return self.flat_grads


def grad(loss, tape):
    return tape.gradient(loss)
