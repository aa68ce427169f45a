"""Deterministic seed derivation and a counter-based uniform hash.

Two mechanisms, used for different jobs:

* `derive_seed` / `derive_rng`: sha256 over a tuple of labels, for
  hierarchical seeding (master seed -> sweep point -> trial).  Streams
  derived from distinct label tuples are independent for all practical
  purposes and stable across platforms and sessions.
* `counter_uniform`: a stateless splitmix64 hash mapping (key, counter)
  to a float in [0, 1).  No stream object, no draw order; any node of a
  large random structure can be sampled independently and in parallel.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "derive_rng", "derive_key", "counter_uniform"]

_SEP = b"\x1f"

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def derive_seed(*parts: int | str) -> int:
    """Collapse a label tuple into a stable 128-bit integer seed."""
    payload = _SEP.join(repr(p).encode("utf-8") for p in parts)
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:16], "little")


def derive_rng(*parts: int | str) -> np.random.Generator:
    """A fresh numpy Generator seeded from the label tuple."""
    return np.random.default_rng(derive_seed(*parts))


def derive_key(*parts: int | str) -> int:
    """64-bit key for `counter_uniform`, derived like `derive_seed`."""
    return derive_seed(*parts) & 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def counter_uniform(keys, counters) -> np.ndarray:
    """Uniform [0, 1) draws at the broadcast of `keys` x `counters`.

    Pure function: the draw for a (key, counter) pair never depends on
    what else was sampled, which keys tree/leaf node draws by node id.
    """
    k = np.asarray(keys, dtype=np.uint64)
    c = np.asarray(counters, dtype=np.uint64)
    h = _splitmix64(_splitmix64(k) ^ (c * _GAMMA + _GAMMA))
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
