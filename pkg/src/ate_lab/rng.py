"""Seed derivation and random streams.

Every random stream in the package is a :class:`numpy.random.Philox`
generator (a counter-based 4x64 bit generator) keyed directly with a 64-bit
integer.  Child streams are derived from a base seed by

    child = base XOR splitmix64(index)

for integer indices.  String labels are first hashed to 64 bits with
BLAKE2b (8-byte digest, little endian).  A path of labels is folded level
by level, and the label at depth ``j`` is offset by ``j * 0xD1B54A32D192ED03``
before mixing so that reordered paths give different seeds:

    derive_seed(seed, l0, l1, ...) = seed ^ splitmix64(h(l0))
                                          ^ splitmix64(h(l1) ^ 1 * K)
                                          ^ ...

with ``K = 0xD1B54A32D192ED03`` (products taken mod 2**64).  Outputs are
therefore a pure function of the base seed and the label path, which makes
replications and theta-grid points independent of evaluation order.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
_DEPTH_STEP = 0xD1B54A32D192ED03

#: Seed used when neither a flag nor ``ATE_LAB_SEED`` provides one.
DEFAULT_SEED = 20190611


def splitmix64(value: int) -> int:
    """One round of the SplitMix64 finalizer applied to ``value + golden``."""
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _label_hash(label: int | str, depth: int = 0) -> int:
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        label = int.from_bytes(digest, "little")
    return splitmix64((int(label) & MASK64) ^ ((depth * _DEPTH_STEP) & MASK64))


def derive_seed(seed: int, *path: int | str) -> int:
    """Derive a child seed from ``seed`` along a path of labels."""
    out = int(seed) & MASK64
    for depth, label in enumerate(path):
        out ^= _label_hash(label, depth)
    return out


def stream(seed: int, *path: int | str) -> np.random.Generator:
    """Return an independent Philox generator for ``seed`` and ``path``."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *path)))
