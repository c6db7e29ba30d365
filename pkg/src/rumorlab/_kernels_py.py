"""NumPy versions of the compiled scans, vectorized across replicates."""
from __future__ import annotations

import numpy as np

from .rng import block_uniforms


def firework_scan(rt: np.ndarray, start: np.ndarray, horizon: int):
    rt = np.asarray(rt, dtype=np.int64)
    start = np.asarray(start, dtype=bool)
    reach = np.where(start, rt[:, 0], 0)
    for i in range(1, horizon):
        moving = start & (reach >= i) & (reach < horizon)
        if not moving.any():
            break
        reach = np.where(moving, np.maximum(reach, i + rt[:, i]), reach)
    reach = np.minimum(reach, horizon)
    maxidx = np.where(start, reach, 0)
    return maxidx, np.where(start, maxidx + 1, 0)


def reverse_scan(rt: np.ndarray, horizon: int, max_radius: int):
    rt = np.asarray(rt, dtype=np.int64)
    n = rt.shape[0]
    gap = np.ones(n, dtype=np.int64)
    last = np.zeros(n, dtype=np.int64)
    count = np.ones(n, dtype=np.int64)
    for x in range(1, horizon + 1):
        if max_radius >= 0 and np.all(gap > max_radius):
            gap += horizon - x + 1
            break
        hit = rt[:, x] >= gap
        last = np.where(hit, x, last)
        count += hit
        gap = np.where(hit, 1, gap + 1)
    return last, gap, count


__all__ = ["block_uniforms", "firework_scan", "reverse_scan"]
