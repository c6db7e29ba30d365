"""Firework and reverse firework on labelled Galton-Watson trees.

Two engines share the same recursions.

* The explicit engine builds the tree generation by generation. Every vertex
  is keyed by a hash of (env seed, path), so the child count and station
  count of a vertex never depend on which replicate or process seed asks for
  them. Radii are keyed by (process seed, path). This is the engine for
  quenched runs and forced labels.
* The census engine only keeps, per depth, how many vertices sit in each
  state. With i.i.d. labels that is exact in law and it handles populations
  far beyond any node budget.

Firework state of an activated vertex: how many more levels the signal it
carries can still travel, max(parent state - 1, own max radius).
Reverse state of a vertex: distance to its nearest active ancestor-or-self
(0 when active). A child of a state-s vertex is active iff its max radius
is at least s + 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .laws import (
    DomainError,
    OffspringLaw,
    RadiusLaw,
    StationLaw,
    annealed_log_tail,
    annealed_pmf,
    annealed_tail,
    fold_radius,
)
from .rng import (
    TAG_ENV,
    TAG_LABEL,
    TAG_OFFSPRING,
    TAG_RADIUS,
    child_keys,
    derive,
    keyed_uniform,
    mix64_array,
)

DEFAULT_NODE_BUDGET = 10**6
DEFAULT_EPSILON = 1e-9
STATE_CAP = 4096


@dataclass(frozen=True)
class TreeEnvKey:
    env_seed: int
    offspring: OffspringLaw
    nlaw: StationLaw
    root_policy: str = "same"  # "same" draws the root label from nlaw, "min_atom" fixes it
    forced_labels: Tuple[Tuple[int, int], ...] = ()  # (depth, label) overrides

    def __post_init__(self):
        if self.root_policy not in ("same", "min_atom"):
            raise DomainError("root_policy must be 'same' or 'min_atom'")

    @property
    def root_key(self) -> int:
        return derive(self.env_seed, TAG_ENV)

    def forced(self) -> Dict[int, int]:
        return dict(self.forced_labels)

    def with_seed(self, env_seed: int) -> "TreeEnvKey":
        return TreeEnvKey(int(env_seed), self.offspring, self.nlaw, self.root_policy, self.forced_labels)


@dataclass
class TreeSimOutcome:
    max_depth_activated: int
    activated_count: int
    nodes_expanded: int
    budget_exhausted: bool
    reached: bool
    depth_horizon: int
    root_purple_children: int = 0
    diagnostics: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {
            "maxDepthActivated": self.max_depth_activated,
            "activatedCount": self.activated_count,
            "nodesExpanded": self.nodes_expanded,
            "budgetExhausted": self.budget_exhausted,
        }


# ---------------------------------------------------------------------------
# vertex draws


def path_key(key: TreeEnvKey, path: Sequence[int]) -> int:
    k = np.array([key.root_key], dtype=np.uint64)
    for i in path:
        k = child_keys(k, np.array([i], dtype=np.uint64))
    return int(k[0])


def _labels(key: TreeEnvKey, vkeys: np.ndarray, depth: int) -> np.ndarray:
    forced = key.forced()
    if depth in forced:
        return np.full(vkeys.shape, forced[depth], dtype=np.int64)
    if depth == 0 and key.root_policy == "min_atom":
        return np.full(vkeys.shape, key.nlaw.min_positive_atom(), dtype=np.int64)
    return np.asarray(key.nlaw.sample(keyed_uniform(vkeys, TAG_LABEL)), dtype=np.int64)


def _child_counts(key: TreeEnvKey, vkeys: np.ndarray) -> np.ndarray:
    return key.offspring.sample(keyed_uniform(vkeys, TAG_OFFSPRING))


def gw_vertex(key: TreeEnvKey, path: Sequence[int]) -> Tuple[int, int]:
    """(child count, station count) of the vertex at `path` (child indices from the root)."""
    vk = np.array([path_key(key, path)], dtype=np.uint64)
    return int(_child_counts(key, vk)[0]), int(_labels(key, vk, len(path))[0])


def _proc_mix(proc_seed: int) -> np.uint64:
    return np.uint64(derive(proc_seed, TAG_RADIUS))


def vertex_radius(key: TreeEnvKey, rlaw: RadiusLaw, path: Sequence[int], proc_seed: int) -> int:
    """Max radius of the stations at `path` under process seed `proc_seed`."""
    vk = np.array([path_key(key, path)], dtype=np.uint64)
    label = _labels(key, vk, len(path))
    return int(_radii(rlaw, label, vk, _proc_mix(proc_seed))[0])


def _radii(rlaw: RadiusLaw, labels: np.ndarray, vkeys: np.ndarray, pmix: np.uint64) -> np.ndarray:
    u = keyed_uniform(mix64_array(vkeys ^ pmix), TAG_RADIUS)
    return fold_radius(rlaw, labels, u)


def _children(key: TreeEnvKey, vkeys: np.ndarray):
    """Keys of all children of the given vertices and the index of each child's parent."""
    counts = _child_counts(key, vkeys)
    total = int(counts.sum())
    parent = np.repeat(np.arange(vkeys.size), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    idx = np.arange(total) - np.repeat(offsets, counts)
    return child_keys(vkeys[parent], idx.astype(np.uint64)), parent


# ---------------------------------------------------------------------------
# expected future activations (reverse process)


class FutureActivations:
    """F(s) = sum_{j>=1} m^j P(max radius >= s + j): expected first activations below a state-s vertex."""

    def __init__(self, nlaw: StationLaw, rlaw: RadiusLaw, m: float, cap: int = STATE_CAP):
        self.cap = cap
        k = np.arange(1, 2 * cap + 2, dtype=np.float64)
        with np.errstate(divide="ignore"):
            la = np.asarray(annealed_log_tail(nlaw, rlaw, k), dtype=np.float64)
            lt = la + k * math.log(m) if m > 0 else np.full_like(la, -np.inf)
        bound = getattr(rlaw, "bound", None)
        # suffix[i] = log sum_{k > i} m^k A(k), truncated at 2 cap + 1
        suffix = np.logaddexp.accumulate(lt[::-1])[::-1]
        growing = lt[-1] > lt[-2] - 1e-12 and lt[-1] > -700
        s = np.arange(cap + 1)
        with np.errstate(invalid="ignore"):
            logf = suffix[s] - s * math.log(m) if m > 0 else np.full(s.shape, -np.inf)
        if growing and bound is None:
            logf = np.full(s.shape, np.inf)
        self.log_f = logf
        self.values = np.exp(np.minimum(logf, 700.0))
        self.values[np.isinf(logf) & (logf > 0)] = np.inf
        self.dead_from = None if bound is None else int(bound)

    def of(self, states: np.ndarray) -> np.ndarray:
        return self.values[np.minimum(states, self.cap)]

    def dead(self, states: np.ndarray) -> np.ndarray:
        if self.dead_from is None:
            return self.values[np.minimum(states, self.cap)] == 0.0
        return states >= self.dead_from


def _prune_mask(weights: np.ndarray, allowance: float) -> Tuple[np.ndarray, float]:
    """Drop the lightest items while their summed weight stays within `allowance`."""
    if allowance <= 0 or weights.size == 0:
        return np.zeros(weights.shape, dtype=bool), 0.0
    order = np.argsort(weights, kind="stable")
    csum = np.cumsum(weights[order])
    n = int(np.searchsorted(csum, allowance, side="right"))
    mask = np.zeros(weights.shape, dtype=bool)
    mask[order[:n]] = True
    return mask, float(csum[n - 1]) if n else 0.0


# ---------------------------------------------------------------------------
# explicit engine


def _check(depth_horizon: int, node_budget: int) -> None:
    if depth_horizon < 1:
        raise DomainError("depth horizon must be at least 1")
    if node_budget <= 0:
        raise DomainError("node budget must be positive")


def run_firework_tree(key: TreeEnvKey, rlaw: RadiusLaw, depth_horizon: int,
                      node_budget: int = DEFAULT_NODE_BUDGET, proc_seed: int = 0) -> TreeSimOutcome:
    _check(depth_horizon, node_budget)
    pmix = _proc_mix(proc_seed)
    vk = np.array([key.root_key], dtype=np.uint64)
    label = _labels(key, vk, 0)
    if label[0] == 0:
        return TreeSimOutcome(0, 0, 1, False, False, depth_horizon)
    state = _radii(rlaw, label, vk, pmix)
    activated, expanded, depth = 1, 1, 0
    while depth < depth_horizon:
        live = state >= 1
        if not live.any():
            break
        ck, parent = _children(key, vk[live])
        if ck.size == 0:
            break
        expanded += ck.size
        if expanded > node_budget:
            return TreeSimOutcome(depth, activated, expanded, True, False, depth_horizon)
        depth += 1
        labels = _labels(key, ck, depth)
        state = np.maximum(state[live][parent] - 1, _radii(rlaw, labels, ck, pmix))
        vk = ck
        activated += ck.size
    return TreeSimOutcome(depth, activated, expanded, False, depth >= depth_horizon, depth_horizon)


def run_reverse_tree(key: TreeEnvKey, rlaw: RadiusLaw, depth_horizon: int,
                     node_budget: int = DEFAULT_NODE_BUDGET, proc_seed: int = 0,
                     epsilon: float = DEFAULT_EPSILON, future: Optional[FutureActivations] = None,
                     max_extra_depth: Optional[int] = None) -> TreeSimOutcome:
    """Purple-tree growth. Success means an active vertex at depth >= depth_horizon.

    Past the horizon the run continues until that happens, every lineage is
    provably dead, or the expected number of future activations drops below
    ``epsilon``.
    """
    _check(depth_horizon, node_budget)
    pmix = _proc_mix(proc_seed)
    if future is None:
        future = FutureActivations(key.nlaw, rlaw, key.offspring.mean)
    extra = 4 * depth_horizon + 64 if max_extra_depth is None else max_extra_depth
    vk = np.array([key.root_key], dtype=np.uint64)
    state = np.zeros(1, dtype=np.int64)
    under_root = np.ones(1, dtype=bool)
    activated, expanded, depth, max_active, root_children = 1, 1, 0, 0, 0
    certified_note = ""
    neglected = 0.0
    while True:
        weights = future.of(state)
        drop, mass = _prune_mask(weights, 0.5 * epsilon - neglected)
        neglected += mass
        keep = ~future.dead(state) & ~drop
        vk, state, under_root = vk[keep], state[keep], under_root[keep]
        if vk.size == 0:
            certified_note = "all lineages dead or negligible"
            break
        bound = float(np.sum(future.of(state))) + neglected
        if bound < epsilon:
            certified_note = "future activations negligible"
            break
        if depth >= depth_horizon + extra:
            return TreeSimOutcome(min(max_active, depth_horizon), activated, expanded, True, False, depth_horizon,
                                  root_children, {"stop": "depth cap"})
        ck, parent = _children(key, vk)
        if ck.size == 0:
            certified_note = "tree ended"
            break
        expanded += ck.size
        if expanded > node_budget:
            return TreeSimOutcome(min(max_active, depth_horizon), activated, expanded, True, False, depth_horizon,
                                  root_children, {"stop": "node budget"})
        depth += 1
        labels = _labels(key, ck, depth)
        need = state[parent] + 1
        active = _radii(rlaw, labels, ck, pmix) >= need
        n_active = int(active.sum())
        root_children += int(np.sum(active & under_root[parent]))
        activated += n_active
        if n_active:
            max_active = depth
            if depth >= depth_horizon:
                return TreeSimOutcome(depth_horizon, activated, expanded, False, True, depth_horizon, root_children)
        vk = ck
        state = np.where(active, 0, need)
        under_root = under_root[parent] & ~active
    return TreeSimOutcome(min(max_active, depth_horizon), activated, expanded, False, max_active >= depth_horizon,
                          depth_horizon, root_children, {"stop": certified_note})


def purple_root_children(key: TreeEnvKey, rlaw: RadiusLaw, depth_horizon: int, proc_seed: int = 0,
                         node_budget: int = DEFAULT_NODE_BUDGET) -> int:
    """Number of vertices within depth_horizon whose nearest active ancestor is the root."""
    pmix = _proc_mix(proc_seed)
    vk = np.array([key.root_key], dtype=np.uint64)
    state = np.zeros(1, dtype=np.int64)
    total, expanded, bound = 0, 1, getattr(rlaw, "bound", None)
    for depth in range(1, depth_horizon + 1):
        if bound is not None:
            keep = state < bound
            vk, state = vk[keep], state[keep]
        if vk.size == 0:
            break
        ck, parent = _children(key, vk)
        expanded += ck.size
        if expanded > node_budget:
            raise DomainError("node budget exceeded while counting purple children")
        labels = _labels(key, ck, depth)
        need = state[parent] + 1
        active = _radii(rlaw, labels, ck, pmix) >= need
        total += int(active.sum())
        vk, state = ck[~active], need[~active]
    return total


# ---------------------------------------------------------------------------
# census engine


def _children_total(rng: np.random.Generator, offspring: OffspringLaw, parents: np.ndarray) -> np.ndarray:
    """Total offspring of `parents[i]` i.i.d. vertices, for each i."""
    degrees = np.arange(offspring.probs.size)
    out = np.zeros(parents.size, dtype=np.int64)
    for i, c in enumerate(parents):
        if c:
            out[i] = int(np.dot(rng.multinomial(int(c), offspring.probs), degrees))
    return out


class CensusModel:
    """Precomputed annealed tables for census runs of one (N, R, offspring) triple."""

    def __init__(self, nlaw: StationLaw, rlaw: RadiusLaw, offspring: OffspringLaw, depth_horizon: int,
                 cap: Optional[int] = None):
        self.nlaw, self.rlaw, self.offspring = nlaw, rlaw, offspring
        bound = getattr(rlaw, "bound", None)
        # firework states only matter up to the horizon; reverse states need room
        # until their future activations are negligible
        self.fw_cap = depth_horizon + 1
        self.cap = int(cap or (bound + 1 if bound is not None else STATE_CAP))
        self.cap = max(self.cap, depth_horizon + 1)
        self.pmf = np.clip(annealed_pmf(nlaw, rlaw, self.fw_cap), 0.0, 1.0)
        self.pmf /= self.pmf.sum()
        self.tail = np.asarray(annealed_tail(nlaw, rlaw, np.arange(self.cap + 2)), dtype=np.float64)
        self._future = None

    @property
    def future(self) -> FutureActivations:
        if self._future is None:
            self._future = FutureActivations(self.nlaw, self.rlaw, self.offspring.mean)
        return self._future


def census_firework(model: CensusModel, depth_horizon: int, seed: int,
                    node_budget: Optional[int] = None) -> TreeSimOutcome:
    rng = np.random.Generator(np.random.PCG64(seed))
    cap = model.fw_cap
    label = int(model.nlaw.sample(rng.random()))
    if label == 0:
        return TreeSimOutcome(0, 0, 1, False, False, depth_horizon)
    r0 = int(fold_radius(model.rlaw, label, rng.random()))
    counts = np.zeros(cap + 1, dtype=np.int64)
    counts[min(r0, cap)] = 1
    activated, expanded, depth = 1, 1, 0
    # child state distribution for a parent in state b: max(b - 1, max radius)
    cum = np.cumsum(model.pmf)
    while depth < depth_horizon:
        live = np.flatnonzero(counts[1:]) + 1
        if live.size == 0:
            break
        kids = _children_total(rng, model.offspring, counts[live])
        total = int(kids.sum())
        if total == 0:
            break
        expanded += total
        if node_budget is not None and expanded > node_budget:
            return TreeSimOutcome(depth, activated, expanded, True, False, depth_horizon)
        new = np.zeros_like(counts)
        for b, k in zip(live, kids):
            if not k:
                continue
            probs = model.pmf.copy()
            probs[b - 1] = cum[b - 1]
            probs[: b - 1] = 0.0
            new += rng.multinomial(int(k), probs / probs.sum())
        counts = new
        depth += 1
        activated += total
    return TreeSimOutcome(depth, activated, expanded, False, depth >= depth_horizon, depth_horizon)


def census_reverse(model: CensusModel, depth_horizon: int, seed: int, node_budget: Optional[int] = None,
                   epsilon: float = DEFAULT_EPSILON, max_extra_depth: Optional[int] = None) -> TreeSimOutcome:
    rng = np.random.Generator(np.random.PCG64(seed))
    cap = model.cap
    fut = model.future
    fvals = fut.of(np.arange(cap + 1))
    dead = fut.dead(np.arange(cap + 1))
    counts = np.zeros(cap + 1, dtype=np.int64)
    counts[0] = 1
    extra = 4 * depth_horizon + 64 if max_extra_depth is None else max_extra_depth
    activated, expanded, depth, max_active = 1, 1, 0, 0
    note = ""
    neglected = 0.0
    while True:
        counts[dead] = 0
        occupied = np.flatnonzero(counts)
        drop, mass = _prune_mask(counts[occupied] * fvals[occupied], 0.5 * epsilon - neglected)
        neglected += mass
        counts[occupied[drop]] = 0
        occupied = occupied[~drop]
        if occupied.size == 0:
            note = "all lineages dead or negligible"
            break
        bound = float(np.dot(counts[occupied], fvals[occupied])) + neglected
        if bound < epsilon:
            note = "future activations negligible"
            break
        if counts.sum() > 2**60:
            return TreeSimOutcome(min(max_active, depth_horizon), activated, expanded, True, False,
                                  depth_horizon, 0, {"stop": "population overflow"})
        if depth >= depth_horizon + extra:
            return TreeSimOutcome(min(max_active, depth_horizon), activated, expanded, True, False,
                                  depth_horizon, 0, {"stop": "depth cap"})
        kids = _children_total(rng, model.offspring, counts[occupied])
        total = int(kids.sum())
        if total == 0:
            note = "tree ended"
            break
        expanded += total
        if node_budget is not None and expanded > node_budget:
            return TreeSimOutcome(min(max_active, depth_horizon), activated, expanded, True, False,
                                  depth_horizon, 0, {"stop": "node budget"})
        depth += 1
        new = np.zeros_like(counts)
        n_active = 0
        for s, k in zip(occupied, kids):
            if not k:
                continue
            nxt = min(s + 1, cap)
            a = int(rng.binomial(int(k), model.tail[nxt]))
            n_active += a
            new[0] += a
            new[nxt] += int(k) - a
        counts = new
        activated += n_active
        if n_active:
            max_active = depth
            if depth >= depth_horizon:
                return TreeSimOutcome(depth_horizon, activated, expanded, False, True, depth_horizon)
    return TreeSimOutcome(min(max_active, depth_horizon), activated, expanded, False, max_active >= depth_horizon,
                          depth_horizon, 0, {"stop": note})
