"""Seed-stream plumbing: every random draw in the package flows from one
64-bit seed through a named substream, so runs are reproducible and adding
draws to one consumer never shifts another's stream.
"""

from __future__ import annotations

import numpy as np

__all__ = ["rng_stream", "MODEL_INIT", "SHUFFLE", "SYNTH_LATENTS", "SYNTH_EVENTS", "GRADCHECK"]

# Substream keys. Frozen; renumbering breaks byte-for-byte reproducibility.
MODEL_INIT = 0
SHUFFLE = 1
SYNTH_LATENTS = 2
SYNTH_EVENTS = 3
GRADCHECK = 4


def rng_stream(seed: int, key: int) -> np.random.Generator:
    """Independent generator for substream `key` of the run seed."""
    seed = int(seed)
    if not (0 <= seed < 2**64):
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))
