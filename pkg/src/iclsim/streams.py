"""Deterministic per-purpose random streams.

Every consumer derives its generator from (master seed, purpose tag, index)
through a SeedSequence spawn key, so sampling order never depends on thread
scheduling or on how much randomness another component consumed.
"""

from __future__ import annotations

import numpy as np

# Stable purpose tags; appending is fine, reordering breaks reproducibility.
_PURPOSES = (
    "init",
    "task",
    "prompt",
    "bias_reinit",
    "stage2",
    "validation",
    "baseline",
    "diagnostic",
    "rotation",
)
_PURPOSE_ID = {name: k for k, name in enumerate(_PURPOSES)}


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent generator for (seed, purpose, index)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_PURPOSE_ID[purpose], index))
    return np.random.default_rng(ss)
