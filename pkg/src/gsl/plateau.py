"""Plateau detection on training-return curves.

A plateau at epoch t means the (smoothed) return at t, plus a small margin,
is at least as high as every return in the next `window` epochs. Training
curves are noisy, so the raw per-epoch returns are first smoothed with a
truncated Gaussian; near the ends of the curve the kernel is renormalized
over the in-bounds taps instead of padding.

Two entry points: `detect_plateau` scans a finished (or so-far) curve and is
what offline analysis uses; `confirmed_trigger` is the causal variant for use
during training, which additionally refuses candidates whose window still
touches the renormalized tail of the curve, because those smoothed values
will keep moving as more epochs arrive.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .metrics import read_metrics


@dataclass(frozen=True)
class PlateauConfig:
    kernel: int = 10        # smoothing support in epochs; sigma = kernel / 4
    window: int = 50        # dominance lookahead in epochs
    epsilon: float = 0.01   # slack added to the candidate return
    guard: float = 0.15     # fraction of the budget excluded at each end

    def __post_init__(self):
        if self.kernel < 1:
            raise ConfigError(f"kernel must be >= 1, got {self.kernel}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 <= self.guard < 0.5:
            raise ConfigError(f"guard must be in [0, 0.5), got {self.guard}")


@dataclass(frozen=True)
class ReturnCurve:
    """Per-epoch mean returns plus how many environment steps fed each one."""

    returns: np.ndarray
    samples_per_epoch: np.ndarray = field(default=None)

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=np.float64)
        if r.ndim != 1 or r.size < 1:
            raise ContractError("return curve must be a nonempty 1-d array")
        if not np.all(np.isfinite(r)):
            raise ContractError("return curve contains non-finite values")
        object.__setattr__(self, "returns", r)
        if self.samples_per_epoch is not None:
            s = np.asarray(self.samples_per_epoch)
            if s.shape != r.shape:
                raise ContractError("samples_per_epoch length mismatch")
            object.__setattr__(self, "samples_per_epoch", s)

    def __len__(self):
        return int(self.returns.size)

    @classmethod
    def from_metrics(cls, path):
        """Build a curve from a training metrics CSV (cumulative sample
        counts are differenced into per-epoch counts)."""
        cols = read_metrics(path)
        totals = cols["total_samples"]
        per_epoch = np.diff(totals, prepend=0.0)
        return cls(cols["mean_return"], per_epoch)


def kernel_radius(kernel):
    """Half-width of the truncated smoothing kernel, in epochs."""
    return int(math.floor(2.0 * (kernel / 4.0)))


def smooth_returns(curve, kernel):
    """Smooth a return curve with a truncated, boundary-renormalized Gaussian.

    sigma is kernel/4 and taps beyond +-2 sigma are dropped. At the boundary
    the surviving taps are renormalized to sum to one, so constants pass
    through unchanged and no reflected or zero padding leaks in. kernel = 1
    degenerates to the identity.
    """
    y = np.asarray(curve, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ContractError("curve must be a nonempty 1-d array")
    if not np.all(np.isfinite(y)):
        raise ContractError("curve contains non-finite values")
    if kernel < 1:
        raise ContractError(f"kernel must be >= 1, got {kernel}")
    sigma = kernel / 4.0
    radius = kernel_radius(kernel)
    if radius == 0:
        return y.copy()
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    # centered slice of the full convolution; mode="same" would return the
    # kernel's length whenever the curve is shorter than the kernel
    num = np.convolve(y, taps, mode="full")[radius:radius + y.size]
    den = np.convolve(np.ones_like(y), taps, mode="full")[radius:radius + y.size]
    return num / den


def dominates_window(smoothed, t, window, epsilon):
    """Does the smoothed return at t (plus epsilon) dominate the next window?

    Returns True/False when the full lookahead exists, and None when the
    window runs past the end of the curve — "cannot tell yet" is deliberately
    distinct from "no".
    """
    s = np.asarray(smoothed, dtype=np.float64)
    if not 0 <= t < s.size:
        raise ContractError(f"candidate epoch {t} outside curve of length {s.size}")
    if t + window > s.size - 1:
        return None
    return bool(np.all(s[t] + epsilon >= s[t + 1:t + window + 1]))


def _snap_int(x):
    # 0.15 * 200 style products can land a hair off an exact integer; snap
    # before ceiling so the guard edge does not drift by one epoch
    r = round(x)
    return float(r) if abs(x - r) < 1e-9 else x


def guard_bounds(guard, budget):
    """Inclusive [lo, hi] candidate range: the first and last `guard`
    fraction of the epoch budget are off limits."""
    if budget < 1:
        raise ContractError(f"budget must be >= 1, got {budget}")
    lo = int(math.ceil(_snap_int(guard * budget)))
    return lo, budget - lo


def detect_plateau(curve, config, budget):
    """First epoch in the guarded interior of `budget` whose smoothed return
    dominates its lookahead window; None when nothing qualifies.

    `budget` is the planned length of the phase in epochs, which may exceed
    the curve recorded so far; the guards are fractions of the plan, not of
    whatever happens to be recorded. Callers that get None at the end of a
    phase treat the budget itself as the stopping point.
    """
    y = curve.returns if isinstance(curve, ReturnCurve) else np.asarray(curve)
    n = y.size
    if budget < n:
        raise ContractError(f"budget {budget} shorter than recorded curve {n}")
    s = smooth_returns(y, config.kernel)
    lo, hi = guard_bounds(config.guard, budget)
    for t in range(lo, min(hi + 1, n)):
        flag = dominates_window(s, t, config.window, config.epsilon)
        if flag is None:
            break  # every later candidate needs even more future
        if flag:
            return t
    return None


def confirmed_trigger(curve_so_far, config, budget):
    """Causal plateau check for use while the curve is still growing.

    Same scan as detect_plateau, but a candidate only counts once every
    smoothed value in its window is final, i.e. the window ends at least a
    kernel radius before the current end of the curve. Until then the
    boundary renormalization means those values can still change, so the
    candidate is neither accepted nor rejected — just not confirmed yet.
    """
    t = detect_plateau(curve_so_far, config, budget)
    if t is None:
        return None
    n = len(curve_so_far)
    if t + config.window + kernel_radius(config.kernel) <= n - 1:
        return t
    return None
