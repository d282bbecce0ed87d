"""Named RNG streams.

Each consumer (env resets, action sampling, minibatch shuffling, ...) gets its
own generator derived from the root seed plus a string label. Adding or
removing one consumer then never perturbs the draws any other consumer sees,
which is what lets structurally different code paths produce identical runs
when their extra mechanisms are switched off.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(root_seed, label):
    """Independent Generator for (root_seed, label)."""
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), zlib.crc32(label.encode("utf-8"))]))


def capture_state(rng):
    """JSON-serializable snapshot of a Generator's position."""
    return rng.bit_generator.state


def restore_state(rng, state):
    rng.bit_generator.state = state
    return rng
