"""Counter-based random numbers.

Every draw is a pure function of an integer key, so any replicate, site or
tree vertex can be regenerated in isolation and in any order. The mixing
function is the splitmix64 finalizer; keys are combined by xor/add with odd
constants and re-mixed.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB

# Stream tags keep the environment, the radii and the tree shape independent.
TAG_ENV = 0x454E56
TAG_RADIUS = 0x524144
TAG_OFFSPRING = 0x4F4646
TAG_LABEL = 0x4C4142
TAG_TAIL = 0x544149
TAG_REPLICATE_ENV = 0x52454E
TAG_REPLICATE_PROC = 0x525052


def mix64(x: int) -> int:
    """splitmix64 finalizer on a Python int."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _C1) & MASK64
    x = ((x ^ (x >> 27)) * _C2) & MASK64
    return x ^ (x >> 31)


def derive(*parts: int) -> int:
    """Fold a tuple of integers into one 64-bit key."""
    h = 0x243F6A8885A308D3
    for p in parts:
        h = mix64((h ^ (int(p) & MASK64)) + GOLDEN)
    return h


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer over a uint64 array."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * np.uint64(_C1)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(_C2)
        return x ^ (x >> np.uint64(31))


def to_unit(h: np.ndarray) -> np.ndarray:
    """Map 64-bit hashes to floats strictly inside (0, 1)."""
    return ((np.asarray(h, dtype=np.uint64) >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


def stream_uniforms(key: int, start: int, count: int) -> np.ndarray:
    """Uniforms at counter positions start..start+count-1 of one stream."""
    pos = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = np.uint64(key & MASK64) + (pos + np.uint64(1)) * np.uint64(GOLDEN)
    return to_unit(mix64_array(h))


def block_uniforms(keys: np.ndarray, start: int, count: int) -> np.ndarray:
    """A (len(keys), count) block: row r is stream keys[r] at positions start.."""
    keys = np.asarray(keys, dtype=np.uint64)[:, None]
    pos = np.arange(start, start + count, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        h = keys + (pos + np.uint64(1)) * np.uint64(GOLDEN)
    return to_unit(mix64_array(h))


def child_keys(parent: np.ndarray, index: np.ndarray) -> np.ndarray:
    """Key of child number `index` (0-based) of the vertex keyed `parent`."""
    parent = np.asarray(parent, dtype=np.uint64)
    index = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_array(mix64_array(parent ^ np.uint64(0xD1B54A32D192ED03)) + (index + np.uint64(1)) * np.uint64(GOLDEN))


def keyed_uniform(keys: np.ndarray, tag: int) -> np.ndarray:
    """One uniform per key for the given stream tag."""
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return to_unit(mix64_array(mix64_array(keys ^ np.uint64(tag)) + np.uint64(GOLDEN)))


def replicate_seeds(master_seed: int, n: int, tag: int) -> np.ndarray:
    """Per-replicate seeds split from a master seed for one stream tag."""
    base = derive(master_seed, tag)
    idx = np.arange(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_array(np.uint64(base) + (idx + np.uint64(1)) * np.uint64(GOLDEN))


class RandomStream:
    """A sequential view over a counter-based stream.

    Consumers that just want "the next n uniforms" use this; the position
    advances, but the values depend only on (key, position).
    """

    def __init__(self, seed: int, tag: int = 0):
        self.key = derive(seed, tag)
        self.position = 0

    def uniforms(self, n: int) -> np.ndarray:
        out = stream_uniforms(self.key, self.position, n)
        self.position += n
        return out

    def spawn(self, tag: int) -> "RandomStream":
        return RandomStream(self.key, tag)
