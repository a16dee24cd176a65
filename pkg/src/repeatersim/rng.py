"""Counter-based random streams for reproducible parallel sampling.

Every draw is a pure function of (master seed, stream id, trial index,
slot), computed with the SplitMix64 finalizer over a per-stream key.  No
generator state exists, so any partitioning of trials over workers - or
lazy evaluation of draws a trial never needed - produces bit-identical
results.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
MIX_2 = np.uint64(0x94D049BB133111EB)

#: draw slots reserved per trial; counters are trial * SLOTS_PER_TRIAL + slot
SLOTS_PER_TRIAL = 64


_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * MIX_1
    z = (z ^ (z >> np.uint64(27))) * MIX_2
    return z ^ (z >> np.uint64(31))


def _mix_int(z: int) -> int:
    z = ((z ^ (z >> 30)) * int(MIX_1)) & _MASK
    z = ((z ^ (z >> 27)) * int(MIX_2)) & _MASK
    return z ^ (z >> 31)


def stream_key(master_seed: int, stream: int) -> np.uint64:
    # plain-int arithmetic: numpy warns on intended uint64 wraparound of scalars
    a = _mix_int(((master_seed & _MASK) * int(GOLDEN) + int(GOLDEN)) & _MASK)
    return np.uint64(_mix_int(a ^ (((stream & _MASK) * int(GOLDEN)) & _MASK)))


def uniforms(key: np.uint64, trials: np.ndarray, slot: int) -> np.ndarray:
    """U[0,1) for one slot of many trials; float64 with 53 random bits."""
    counters = trials.astype(np.uint64) * np.uint64(SLOTS_PER_TRIAL) + np.uint64(slot)
    bits = _mix(key + (counters + np.uint64(1)) * GOLDEN)
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def normal_pairs(key: np.uint64, trials: np.ndarray, slot_a: int, slot_b: int) -> tuple:
    """Two independent standard normals per trial via Box-Muller."""
    u1 = 1.0 - uniforms(key, trials, slot_a)  # (0, 1], keeps log finite
    u2 = uniforms(key, trials, slot_b)
    r = np.sqrt(-2.0 * np.log(u1))
    return r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)
