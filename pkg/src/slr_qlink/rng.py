"""Seeded random streams.

Every stream is a Philox-4x64 counter-based generator keyed by
``(master_seed, stream_offset << 32 | arc_index)``. Stream offsets are fixed
constants, so any component can be regenerated in isolation, and arcs of a
pass can be produced in any order with identical results.
"""
from __future__ import annotations

import numpy as np

STREAM_OFFSETS = {
    "shots": 1,
    "signal": 2,
    "background": 3,
    "background_modulation": 4,
    "perturbation": 5,
}

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: str, arc_index: int = 0) -> np.random.Generator:
    if arc_index < 0 or arc_index >= 1 << 32:
        raise ValueError(f"arc_index out of range: {arc_index}")
    key = np.array([int(seed) & _MASK64, (STREAM_OFFSETS[stream] << 32) | arc_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
