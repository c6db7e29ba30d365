"""Firework and reverse firework on the half-line with a random environment.

Only the per-site maximum radius is ever materialized. Station counts come
from the environment stream keyed by ``env_seed``; radii come from the
process stream keyed by ``proc_seed``, one uniform per site, folded over the
site's stations (see :func:`rumorlab.laws.fold_radius`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .criteria_line import IndexedLawFamily
from .laws import (
    DomainError,
    RadiusLaw,
    StationLaw,
    annealed_tail,
    fold_radius,
)
from .rng import TAG_ENV, TAG_RADIUS, TAG_TAIL, derive, keyed_uniform, stream_uniforms

CHUNK_ROWS = 256
TAIL_DEPTH = 200_000

LawSource = Union[StationLaw, IndexedLawFamily]
RadiusSource = Union[RadiusLaw, IndexedLawFamily]


@dataclass(frozen=True)
class LineEnvironment:
    """Station counts at sites 0..length (inclusive), so any horizon <= length fits."""

    length: int
    station_counts: np.ndarray
    env_seed: int

    def __post_init__(self):
        if np.any(self.station_counts < 0):
            raise DomainError("station counts must be nonnegative")

    @property
    def stationCounts(self) -> np.ndarray:  # noqa: N802 - report schema name
        return self.station_counts


@dataclass(frozen=True)
class SimOutcome:
    reached_horizon: bool
    max_activated_index: int
    activated_count: int
    steps_run: int
    horizon: int
    # reverse runs only: True when survival past the horizon was settled by the tail draw
    tail_decided: bool = False

    def as_row(self) -> dict:
        return {
            "reachedHorizon": self.reached_horizon,
            "maxActivatedIndex": self.max_activated_index,
            "activatedCount": self.activated_count,
            "stepsRun": self.steps_run,
        }


# ---------------------------------------------------------------------------
# environment and radii


def _counts_from(source: LawSource, u: np.ndarray, first_site: int = 0) -> np.ndarray:
    """u has shape (rows, sites); column j is site first_site + j."""
    if isinstance(source, StationLaw):
        return np.asarray(source.sample(u), dtype=np.int64)
    out = np.empty(u.shape, dtype=np.int64)
    sites = first_site + np.arange(u.shape[-1])
    if source.period is not None:
        for r in range(source.period):
            cols = np.flatnonzero(sites % source.period == r)
            if cols.size:
                out[..., cols] = source.station_law(r).sample(u[..., cols])
        return out
    for j, i in enumerate(sites):
        out[..., j] = source.station_law(int(i)).sample(u[..., j])
    return out


def env_key(env_seed: int) -> int:
    return derive(env_seed, TAG_ENV)


def radius_key(proc_seed: int) -> int:
    return derive(proc_seed, TAG_RADIUS)


def gen_line_env(source: LawSource, length: int, env_seed: int) -> LineEnvironment:
    """Station counts for sites 0..length; site i depends only on (env_seed, i)."""
    if length < 1:
        raise DomainError("length must be at least 1")
    u = stream_uniforms(env_key(env_seed), 0, length + 1)
    counts = _counts_from(source, u[None, :])[0]
    return LineEnvironment(int(length), counts, int(env_seed))


def _fold(rsource: RadiusSource, counts: np.ndarray, u: np.ndarray) -> np.ndarray:
    if isinstance(rsource, RadiusLaw):
        return fold_radius(rsource, counts, u)
    out = np.empty(counts.shape, dtype=np.int64)
    n = counts.shape[-1]
    if rsource.period is not None:
        for r in range(rsource.period):
            cols = np.arange(r, n, rsource.period)
            out[..., cols] = fold_radius(rsource.at(r)[1], counts[..., cols], u[..., cols])
        return out
    for i in range(n):
        out[..., i] = fold_radius(rsource.at(i)[1], counts[..., i], u[..., i])
    return out


def line_radii(env: LineEnvironment, rsource: RadiusSource, proc_seed: int, upto: Optional[int] = None) -> np.ndarray:
    """Max radius at sites 0..upto-1 for one process seed."""
    upto = env.length + 1 if upto is None else upto
    if upto > env.length + 1:
        raise DomainError("requested more sites than the environment holds")
    u = stream_uniforms(radius_key(proc_seed), 0, upto)
    return _fold(rsource, env.station_counts[:upto], u)


def _max_radius(rsource: RadiusSource) -> int:
    if isinstance(rsource, RadiusLaw):
        bound = getattr(rsource, "bound", None)
        return -1 if bound is None else int(bound)
    return -1


# ---------------------------------------------------------------------------
# reverse-process continuation past the horizon


class TailContinuation:
    """P(some site beyond the horizon activates | gap g at the first unseen site).

    Sites past the horizon are treated with their annealed law. The chance
    that none of them activates is prod_{j>=0} (1 - P(max radius >= g + j)).
    """

    def __init__(self, source: LawSource, rsource: RadiusSource, horizon: int, depth: int = TAIL_DEPTH):
        self.horizon = horizon
        self.depth = depth
        self._homogeneous = isinstance(source, StationLaw)
        self.source, self.rsource = source, rsource
        if self._homogeneous:
            from .criteria_line import reverse_W_detail

            detail = reverse_W_detail(source, rsource, horizon=depth)
            self.divergent = detail.convergent is False
            k = np.arange(1, depth + 1)
            a = np.asarray(annealed_tail(source, rsource, k), dtype=np.float64)
            with np.errstate(divide="ignore"):
                neg = -np.log1p(-a)
            # S[g] = sum_{k >= g} -log(1 - A(k)); the part beyond depth uses the W tail
            tail = 0.0 if not math.isfinite(detail.tail) else detail.tail
            self._suffix = np.concatenate([np.cumsum(neg[::-1])[::-1], [0.0]]) + tail
            self._suffix = np.concatenate([[math.inf], self._suffix])

    def probability(self, gaps: np.ndarray) -> np.ndarray:
        gaps = np.asarray(gaps, dtype=np.int64)
        if self._homogeneous:
            if self.divergent:
                return np.ones(gaps.shape)
            idx = np.minimum(gaps, self.depth + 1)
            return -np.expm1(-self._suffix[idx])
        return np.array([self._family_probability(int(g)) for g in gaps.ravel()]).reshape(gaps.shape)

    def _family_probability(self, g: int) -> float:
        total = 0.0
        for j in range(self.depth):
            nl, rl = self.source.at(self.horizon + 1 + j)
            a = float(annealed_tail(nl, rl if isinstance(self.rsource, IndexedLawFamily) else self.rsource, g + j))
            if a >= 1.0:
                return 1.0
            total += -math.log1p(-a)
            if a < 1e-18 and j > 1000:
                break
        return -math.expm1(-total)


# ---------------------------------------------------------------------------
# batched runs


@dataclass
class LineBatch:
    reached: np.ndarray
    max_index: np.ndarray
    count: np.ndarray
    steps: np.ndarray
    tail_decided: np.ndarray
    horizon: int

    def outcome(self, r: int) -> SimOutcome:
        return SimOutcome(bool(self.reached[r]), int(self.max_index[r]), int(self.count[r]),
                          int(self.steps[r]), self.horizon, bool(self.tail_decided[r]))

    def __len__(self) -> int:
        return self.reached.size


def _keys(seeds: Sequence[int], fn) -> np.ndarray:
    return np.array([fn(int(s)) for s in seeds], dtype=np.uint64)


def simulate_line_batch(process: str, source: LawSource, rsource: Optional[RadiusSource], horizon: int,
                        env_seeds: Sequence[int], proc_seeds: Sequence[int],
                        proxy: str = "tail", continuation: Optional[TailContinuation] = None) -> LineBatch:
    """Run len(proc_seeds) replicates; env_seeds has one entry (quenched) or one per replicate."""
    if process not in ("firework", "reverse"):
        raise DomainError(f"unknown process {process!r}")
    if proxy not in ("tail", "strict"):
        raise DomainError("proxy must be 'tail' or 'strict'")
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    rsource = source if rsource is None else rsource
    proc_seeds = list(proc_seeds)
    env_seeds = list(env_seeds)
    n = len(proc_seeds)
    if len(env_seeds) not in (1, n):
        raise DomainError("env_seeds must have length 1 or match proc_seeds")
    width = horizon + 1
    reached = np.zeros(n, dtype=bool)
    max_index = np.zeros(n, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    tail_flag = np.zeros(n, dtype=bool)
    rkeys = _keys(proc_seeds, radius_key)
    ekeys = _keys(env_seeds, env_key)
    fixed_counts = None
    if len(env_seeds) == 1:
        fixed_counts = _counts_from(source, kernels.block_uniforms(ekeys, 0, width))
    if process == "reverse" and proxy == "tail" and continuation is None:
        continuation = TailContinuation(source, rsource, horizon)
    for lo in range(0, n, CHUNK_ROWS):
        hi = min(n, lo + CHUNK_ROWS)
        if fixed_counts is not None:
            counts = np.broadcast_to(fixed_counts, (hi - lo, width))
        else:
            counts = _counts_from(source, kernels.block_uniforms(ekeys[lo:hi], 0, width))
        rt = np.ascontiguousarray(_fold(rsource, counts, kernels.block_uniforms(rkeys[lo:hi], 0, width)),
                                  dtype=np.int64)
        if process == "firework":
            start = np.ascontiguousarray(counts[:, 0] > 0, dtype=np.uint8)
            mx, ct = kernels.firework_scan(rt, start, horizon)
            max_index[lo:hi] = mx
            count[lo:hi] = ct
            reached[lo:hi] = mx >= horizon
            steps[lo:hi] = np.where(start > 0, np.minimum(mx + 1, horizon), 0)
        else:
            last, gap, ct = kernels.reverse_scan(rt, horizon, _max_radius(rsource))
            ok = last >= horizon
            if proxy == "tail":
                pending = ~ok
                if pending.any():
                    q = continuation.probability(gap[pending])
                    u = keyed_uniform(rkeys[lo:hi][pending], TAG_TAIL)
                    extra = u < q
                    idx = np.flatnonzero(pending)[extra]
                    ok[idx] = True
                    tail_flag[lo + idx] = True
            reached[lo:hi] = ok
            max_index[lo:hi] = np.where(ok, horizon, last)
            count[lo:hi] = ct
            steps[lo:hi] = horizon
    return LineBatch(reached, max_index, count, steps, tail_flag, horizon)


def run_firework_line(env: LineEnvironment, rsource: RadiusSource, horizon: int, proc_seed: int) -> SimOutcome:
    if horizon > env.length:
        raise DomainError("horizon exceeds the environment length")
    rt = line_radii(env, rsource, proc_seed, horizon + 1)[None, :]
    start = np.array([env.station_counts[0] > 0], dtype=np.uint8)
    mx, ct = kernels.firework_scan(np.ascontiguousarray(rt), start, horizon)
    m = int(mx[0])
    return SimOutcome(m >= horizon, m, int(ct[0]), min(m + 1, horizon) if start[0] else 0, horizon)


def run_reverse_line(env: LineEnvironment, rsource: RadiusSource, horizon: int, proc_seed: int,
                     proxy: str = "strict", source: Optional[LawSource] = None,
                     continuation: Optional[TailContinuation] = None) -> SimOutcome:
    """Gap recursion on one environment.

    With ``proxy="tail"`` a run whose last site is inactive can still count
    as surviving: one extra keyed uniform decides whether some site past the
    horizon activates, which needs the station law(s) in ``source``.
    """
    if horizon > env.length:
        raise DomainError("horizon exceeds the environment length")
    rt = np.ascontiguousarray(line_radii(env, rsource, proc_seed, horizon + 1)[None, :])
    last, gap, ct = kernels.reverse_scan(rt, horizon, _max_radius(rsource))
    ok, decided = bool(last[0] >= horizon), False
    if not ok and proxy == "tail":
        if continuation is None:
            if source is None:
                raise DomainError("the tail proxy needs the station law")
            continuation = TailContinuation(source, rsource, horizon)
        q = float(continuation.probability(gap)[0])
        u = float(keyed_uniform(np.array([radius_key(proc_seed)], dtype=np.uint64), TAG_TAIL)[0])
        ok = decided = u < q
    return SimOutcome(ok, horizon if ok else int(last[0]), int(ct[0]), horizon, horizon, decided)


def reverse_active_sites(radii: Sequence[int], horizon: int) -> list:
    """Active sites 0..horizon from a radius sequence by the gap recursion."""
    active, gap = [0], 1
    for x in range(1, horizon + 1):
        if radii[x] >= gap:
            active.append(x)
            gap = 1
        else:
            gap += 1
    return active


def firework_active_sites(radii: Sequence[int], start: bool, horizon: int) -> list:
    """Sites 0..horizon reached by the frontier recursion."""
    if not start:
        return []
    reach, i = radii[0], 1
    while i <= reach and reach < horizon:
        reach = max(reach, i + radii[i])
        i += 1
    return list(range(min(reach, horizon) + 1))
