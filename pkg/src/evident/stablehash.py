"""Deterministic pseudorandom functions keyed on strings.

Python's builtin ``hash`` is salted per process, so anything that must be
reproducible across runs (timeline splits, negative subsampling, feature
hashing) goes through blake2b instead.
"""

from __future__ import annotations

import hashlib


def stable_bits(*parts: object) -> int:
    """64-bit digest of the ':'-joined string forms of ``parts``."""
    key = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def stable_uniform(*parts: object) -> float:
    """Deterministic uniform draw in [0, 1) keyed on ``parts``."""
    return stable_bits(*parts) / 2**64


def stable_randint(lo: int, hi: int, *parts: object) -> int:
    """Deterministic integer in the inclusive range [lo, hi] keyed on ``parts``."""
    if hi < lo:
        raise ValueError(f"empty range [{lo}, {hi}]")
    return lo + stable_bits(*parts) % (hi - lo + 1)
