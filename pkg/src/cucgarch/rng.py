"""Reproducible seeding.

Every random stream is derived from a single integer root seed through
``numpy.random.SeedSequence`` spawn keys, so that replicate ``b`` of an
experiment always sees the same stream regardless of how replicates are
scheduled.  The key path is ``(root, k1, k2, ...)``; e.g. the optimizer
restart ``m`` of bootstrap replicate ``b`` uses ``child_rng(root, STREAM_BOOT, b, m)``.
"""

from __future__ import annotations

import numpy as np

# Stream identifiers keep sibling uses of one root seed disjoint.
STREAM_RESTARTS = 1
STREAM_BOOT = 2
STREAM_SIM = 3
STREAM_MC = 4
STREAM_QBOOT = 5


def child_seed(root: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(int(k) for k in keys))


def child_rng(root: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(root, *keys))


def derive_int(root: int, *keys: int) -> int:
    """A 63-bit integer seed for nested APIs that take plain ints."""
    return int(child_seed(root, *keys).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
