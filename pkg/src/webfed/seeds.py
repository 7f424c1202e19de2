"""Deterministic 64-bit seed derivation.

Every random decision in a federation (weight init, client selection,
shard shuffles, LDP noise) draws from a stream keyed by a seed derived
here, so a whole run is reproducible from one master seed.  Derivation
is a splitmix64 avalanche folded over the tag and field sequence:

    h = splitmix64(h ^ field)   for each field

where ``h`` starts at the master seed.  Distinct field tuples collide
only with probability ~2^-64.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

# Stream tags keeping unrelated consumers of the same master seed apart.
TAG_INIT = 0x01
TAG_SELECT = 0x02
TAG_SHUFFLE = 0x03
TAG_NOISE = 0x04
TAG_SYNTH = 0x05
TAG_PARTITION = 0x06


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def mix(master: int, *fields: int) -> int:
    """Derive a 64-bit seed from a master seed and integer fields."""
    h = master & _MASK
    for f in fields:
        h = _splitmix64(h ^ (f & _MASK))
    return h


def rng_from(seed: int) -> np.random.Generator:
    """Counter-based generator for a derived seed (stable stream per key)."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK))
