"""Seed derivation and small validation helpers shared across modules."""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(*keys: int) -> int:
    """Derive a 64-bit seed from a tuple of non-negative integer keys.

    The mapping is a pure function of ``keys`` (via ``numpy.random.SeedSequence``),
    so it is stable across runs and platforms.
    """
    ss = np.random.SeedSequence([int(k) & SEED_MASK for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def check_finite(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return a
