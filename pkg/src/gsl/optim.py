"""Adam on flat parameter vectors."""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NonFiniteGradientError


class AdamState:
    """First/second moment buffers plus the step counter."""

    def __init__(self, size, m=None, v=None, step=0):
        self.m = np.zeros(size) if m is None else np.asarray(m, dtype=np.float64)
        self.v = np.zeros(size) if v is None else np.asarray(v, dtype=np.float64)
        self.step = int(step)
        if self.m.shape != (size,) or self.v.shape != (size,):
            raise ContractError("moment buffers do not match the parameter size")


def adam_step(params, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update with bias correction.

    Rejects non-finite gradients before touching any state, so a bad update
    can be surfaced without corrupting the parameters.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.values.shape:
        raise ContractError("gradient length does not match the parameter vector")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError("gradient contains NaN or Inf; update rejected")

    state.step += 1
    state.m += (1.0 - beta1) * (grad - state.m)
    state.v += (1.0 - beta2) * (grad * grad - state.v)
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    params.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
