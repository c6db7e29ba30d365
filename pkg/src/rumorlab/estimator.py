"""Monte Carlo estimates, the exact bounded-radius line oracle, and scenario panels."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import norm

from .criteria_line import (
    IndexedLawFamily,
    Outcome,
    Verdict,
    classify_firework_heterogeneous,
    classify_firework_homogeneous,
    classify_firework_tail_regime,
    classify_reverse_heterogeneous,
    classify_reverse_homogeneous,
)
from .criteria_tree import classify_firework_gw, classify_reverse_gw
from .laws import (
    DomainError,
    OffspringLaw,
    PowerTailCount,
    RadiusLaw,
    StationLaw,
    UnsupportedError,
    annealed_pmf,
)
from .rng import TAG_REPLICATE_ENV, TAG_REPLICATE_PROC, derive, replicate_seeds
from .sim_line import LineBatch, TailContinuation, gen_line_env, simulate_line_batch
from .sim_tree import (
    DEFAULT_NODE_BUDGET,
    CensusModel,
    TreeEnvKey,
    census_firework,
    census_reverse,
    run_firework_tree,
    run_reverse_tree,
)

ORACLE_MAX_RADIUS = 64
ORACLE_MAX_HORIZON = 10**6
LINE_CHUNK = 512
TREE_CHUNK = 64
BUDGET_WARNING_FRACTION = 0.01


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    """What to simulate: graph, process and laws. Horizons live with the estimate."""

    graph: str  # "line" | "gw-tree"
    process: str  # "firework" | "reverse"
    nlaw: Union[StationLaw, IndexedLawFamily]
    rlaw: Optional[RadiusLaw] = None  # None when the family carries the radii
    offspring: Optional[OffspringLaw] = None
    name: str = "scenario"
    forced_labels: Tuple[Tuple[int, int], ...] = ()
    proxy: str = "tail"  # reverse line survival proxy, see sim_line
    node_budget: int = DEFAULT_NODE_BUDGET
    engine: str = "auto"  # tree engine: "auto" | "explicit" | "census"

    def __post_init__(self):
        if self.graph not in ("line", "gw-tree"):
            raise DomainError(f"unknown graph {self.graph!r}")
        if self.process not in ("firework", "reverse"):
            raise DomainError(f"unknown process {self.process!r}")
        if self.graph == "gw-tree":
            if self.offspring is None:
                raise DomainError("a tree scenario needs an offspring law")
            if not isinstance(self.nlaw, StationLaw) or self.rlaw is None:
                raise DomainError("tree scenarios need homogeneous station and radius laws")
        if self.rlaw is None and not isinstance(self.nlaw, IndexedLawFamily):
            raise DomainError("a radius law is required")

    @property
    def homogeneous(self) -> bool:
        return isinstance(self.nlaw, StationLaw)

    def tree_key(self, env_seed: int) -> TreeEnvKey:
        policy = "same" if self.process == "firework" else "min_atom"
        return TreeEnvKey(int(env_seed), self.offspring, self.nlaw, policy, self.forced_labels)


@dataclass(frozen=True)
class Estimate:
    successes: int
    trials: int
    point_estimate: float
    wilson_lo: float
    wilson_hi: float
    confidence: float
    master_seed: int
    protocol: str
    horizon: int
    env_seed: Optional[int] = None
    excluded: int = 0  # budget-exhausted tree replicates, counted as neither outcome
    warnings: Tuple[str, ...] = ()

    def as_row(self) -> dict:
        return {
            "successes": self.successes,
            "trials": self.trials,
            "pointEstimate": self.point_estimate,
            "wilsonLo": self.wilson_lo,
            "wilsonHi": self.wilson_hi,
            "confidence": self.confidence,
            "masterSeed": self.master_seed,
            "protocol": self.protocol,
            "envSeed": "" if self.env_seed is None else self.env_seed,
            "horizon": self.horizon,
            "excluded": self.excluded,
        }


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    if trials < 1 or not 0 <= successes <= trials:
        raise DomainError(f"invalid counts: {successes}/{trials}")
    if not 0.0 < confidence < 1.0:
        raise DomainError("confidence must lie in (0, 1)")
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p = successes / trials
    z2n = z * z / trials
    centre = (p + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(p * (1.0 - p) / trials + z2n / (4.0 * trials)) / (1.0 + z2n)
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def _estimate(successes: int, trials: int, excluded: int, confidence: float, master_seed: int, protocol: str,
              horizon: int, env_seed: Optional[int] = None) -> Estimate:
    warnings = []
    total = trials + excluded
    if total and excluded / total > BUDGET_WARNING_FRACTION:
        warnings.append(f"{excluded} of {total} replicates exhausted the node budget and were excluded")
    if trials == 0:
        return Estimate(0, 0, math.nan, 0.0, 1.0, confidence, master_seed, protocol, horizon, env_seed,
                        excluded, tuple(warnings))
    lo, hi = wilson_interval(successes, trials, confidence)
    return Estimate(successes, trials, successes / trials, lo, hi, confidence, master_seed, protocol, horizon,
                    env_seed, excluded, tuple(warnings))


# ---------------------------------------------------------------------------
# replicate dispatch


def worker_count() -> int:
    raw = os.environ.get("RUMORLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise DomainError(f"RUMORLAB_THREADS must be an integer, got {raw!r}") from None


def _map_ordered(fn: Callable, items: Sequence, workers: Optional[int] = None) -> list:
    """Apply fn to every item; results come back in item order whatever the pool size."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _chunks(n: int, size: int) -> List[Tuple[int, int]]:
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def _line_successes(scenario: Scenario, horizon: int, env_seeds, proc_seeds, workers) -> LineBatch:
    cont = None
    if scenario.process == "reverse" and scenario.proxy == "tail":
        cont = TailContinuation(scenario.nlaw, scenario.rlaw or scenario.nlaw, horizon)
    quenched = len(env_seeds) == 1

    def run(span):
        lo, hi = span
        es = env_seeds if quenched else env_seeds[lo:hi]
        return simulate_line_batch(scenario.process, scenario.nlaw, scenario.rlaw, horizon, es,
                                   proc_seeds[lo:hi], proxy=scenario.proxy, continuation=cont)

    parts = _map_ordered(run, _chunks(len(proc_seeds), LINE_CHUNK), workers)
    return LineBatch(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                       ("reached", "max_index", "count", "steps", "tail_decided")), horizon)


def _tree_engine(scenario: Scenario, quenched: bool) -> str:
    if scenario.engine != "auto":
        return scenario.engine
    return "explicit" if quenched or scenario.forced_labels else "census"


def _tree_outcomes(scenario: Scenario, horizon: int, env_seeds, proc_seeds, workers, quenched: bool):
    engine = _tree_engine(scenario, quenched)
    if engine == "census":
        if scenario.forced_labels:
            raise UnsupportedError("forced labels need the explicit tree engine")
        model = CensusModel(scenario.nlaw, scenario.rlaw, scenario.offspring, horizon)
        sim = census_firework if scenario.process == "firework" else census_reverse

        def one(i):
            return sim(model, horizon, derive(int(env_seeds[i]), int(proc_seeds[i])))
    else:
        sim = run_firework_tree if scenario.process == "firework" else run_reverse_tree

        def one(i):
            e = env_seeds[0] if quenched else env_seeds[i]
            return sim(scenario.tree_key(e), scenario.rlaw, horizon, scenario.node_budget, int(proc_seeds[i]))

    def run(span):
        return [one(i) for i in range(*span)]

    parts = _map_ordered(run, _chunks(len(proc_seeds), TREE_CHUNK), workers)
    return [o for p in parts for o in p]


def _count(scenario: Scenario, horizon: int, env_seeds, proc_seeds, workers, quenched) -> Tuple[int, int, int]:
    if scenario.graph == "line":
        batch = _line_successes(scenario, horizon, env_seeds, proc_seeds, workers)
        return int(batch.reached.sum()), len(batch), 0
    outs = _tree_outcomes(scenario, horizon, env_seeds, proc_seeds, workers, quenched)
    clean = [o for o in outs if not o.budget_exhausted]
    return sum(o.reached for o in clean), len(clean), len(outs) - len(clean)


def estimate_annealed(scenario: Scenario, replicates: int, horizon: int, master_seed: int,
                      confidence: float = 0.95, workers: Optional[int] = None) -> Estimate:
    """Fresh environment and radii for every replicate."""
    if replicates < 1:
        raise DomainError("replicates must be at least 1")
    env_seeds = replicate_seeds(master_seed, replicates, TAG_REPLICATE_ENV)
    proc_seeds = replicate_seeds(master_seed, replicates, TAG_REPLICATE_PROC)
    s, n, ex = _count(scenario, horizon, env_seeds, proc_seeds, workers, quenched=False)
    return _estimate(s, n, ex, confidence, master_seed, "annealed", horizon)


def estimate_quenched(scenario: Scenario, env_seed: int, replicates: int, horizon: int, master_seed: int,
                      confidence: float = 0.95, workers: Optional[int] = None) -> Estimate:
    """One environment (line station counts, or the labelled tree) and fresh radii per replicate."""
    if replicates < 1:
        raise DomainError("replicates must be at least 1")
    proc_seeds = replicate_seeds(derive(master_seed, env_seed), replicates, TAG_REPLICATE_PROC)
    s, n, ex = _count(scenario, horizon, [int(env_seed)], proc_seeds, workers, quenched=True)
    return _estimate(s, n, ex, confidence, master_seed, f"quenched({env_seed})", horizon, int(env_seed))


@dataclass
class QuenchedPanel:
    estimates: List[Estimate]
    skipped_envs: int  # environments rejected by the start condition

    @property
    def positive_fraction(self) -> float:
        if not self.estimates:
            return math.nan
        return sum(e.wilson_lo > 0 for e in self.estimates) / len(self.estimates)


def quenched_panel(scenario: Scenario, n_envs: int, replicates: int, horizon: int, master_seed: int,
                   require_start: bool = True, confidence: float = 0.95,
                   workers: Optional[int] = None) -> QuenchedPanel:
    """Quenched estimates over a panel of environments, optionally only those with stations at the origin."""
    if n_envs < 1:
        raise DomainError("panel needs at least one environment")
    out, skipped, i = [], 0, 0
    while len(out) < n_envs:
        env_seed = int(replicate_seeds(master_seed, i + 1, TAG_REPLICATE_ENV)[i])
        i += 1
        if require_start and scenario.graph == "line":
            if gen_line_env(scenario.nlaw, 1, env_seed).station_counts[0] == 0:
                skipped += 1
                continue
        est = estimate_quenched(scenario, env_seed, replicates, horizon, master_seed, confidence, workers)
        out.append(replace(est, protocol="quenched-panel"))
        if i > 1000 * n_envs:
            raise DomainError("start condition almost never holds")
    return QuenchedPanel(out, skipped)


# ---------------------------------------------------------------------------
# exact oracle


@dataclass(frozen=True)
class OracleSpec:
    process_kind: str
    pmf: Tuple[float, ...]  # P(max radius = j), j = 0..M
    horizon: int

    def __post_init__(self):
        if self.process_kind not in ("firework", "reverse"):
            raise DomainError("process_kind must be 'firework' or 'reverse'")
        p = np.asarray(self.pmf, dtype=np.float64)
        if p.ndim != 1 or p.size < 1 or np.any(p < 0) or abs(math.fsum(p) - 1.0) > 1e-12:
            raise DomainError("oracle pmf must be a probability vector")
        if p.size - 1 > ORACLE_MAX_RADIUS:
            raise UnsupportedError(f"oracle supports max radius <= {ORACLE_MAX_RADIUS}")
        if not 1 <= self.horizon <= ORACLE_MAX_HORIZON:
            raise DomainError(f"oracle horizon must lie in [1, {ORACLE_MAX_HORIZON}]")

    @classmethod
    def from_laws(cls, process_kind: str, nlaw: StationLaw, rlaw: RadiusLaw, horizon: int) -> "OracleSpec":
        bound = getattr(rlaw, "bound", None)
        if bound is None:
            raise UnsupportedError("the exact oracle needs a bounded radius law")
        pmf = annealed_pmf(nlaw, rlaw, bound + 1)[:-1]
        return cls(process_kind, tuple(float(x) for x in pmf / math.fsum(pmf)), horizon)


def _firework_chain(pmf: np.ndarray) -> np.ndarray:
    """T[e, e'] over frontier excess e in 0..M; 0 is absorbing."""
    m = pmf.size - 1
    cum = np.cumsum(pmf)
    t = np.zeros((m + 1, m + 1))
    t[0, 0] = 1.0
    for e in range(1, m + 1):
        t[e, e - 1] = cum[e - 1]
        t[e, e:] = pmf[e:]
    return t


def _reverse_chain(pmf: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gap chain over g in 1..M+1 (index g-1); M+1 is absorbing. Also P(max radius >= g)."""
    m = pmf.size - 1
    tail = np.concatenate([np.cumsum(pmf[::-1])[::-1], [0.0]])  # tail[g] = P(>= g)
    t = np.zeros((m + 1, m + 1))
    for g in range(1, m + 2):
        if g == m + 1:
            t[m, m] = 1.0
            continue
        t[g - 1, 0] = tail[g]
        t[g - 1, g] = 1.0 - tail[g]
    return t, tail


def _propagate(v: np.ndarray, t: np.ndarray, steps: int, dead: int) -> Tuple[np.ndarray, float]:
    """v t^steps restricted to the live states, as (direction, log scale).

    Mass entering the absorbing state `dead` is discarded every step, so the
    renormalization tracks the live mass and long horizons do not underflow.
    """
    log_scale = 0.0
    v = v.copy()
    v[dead] = 0.0
    for _ in range(steps):
        v = v @ t
        v[dead] = 0.0
        s = math.fsum(v)
        if s == 0.0:
            return v, -math.inf
        if s < 1e-200:
            v = v / s
            log_scale += math.log(s)
    return v, log_scale


def exact_line_oracle_log(spec: OracleSpec) -> float:
    """log P(success at the horizon) for i.i.d. bounded max radii."""
    pmf = np.asarray(spec.pmf, dtype=np.float64)
    h = spec.horizon
    if spec.process_kind == "firework":
        t = _firework_chain(pmf)
        v = pmf.copy()  # excess after site 0
        v, ls = _propagate(v, t, h - 1, dead=0)
        alive = math.fsum(v[1:])
        return -math.inf if alive == 0.0 or ls == -math.inf else ls + math.log(alive)
    t, tail = _reverse_chain(pmf)
    m = pmf.size - 1
    v = np.zeros(m + 1)
    v[0] = 1.0  # gap 1 at site 1
    v, ls = _propagate(v, t, h - 1, dead=m)
    if ls == -math.inf:
        return -math.inf
    # v[g-1] = P(gap g at site h); success = some site >= h active
    reach = np.zeros(m + 2)
    for g in range(m, 0, -1):
        # P(some site active from here on | gap g at the current site)
        reach[g] = tail[g] + (1.0 - tail[g]) * reach[g + 1]
    val = math.fsum(v[g - 1] * reach[g] for g in range(1, m + 1))
    return -math.inf if val <= 0.0 else ls + math.log(val)


def exact_line_oracle(spec: OracleSpec) -> float:
    return math.exp(exact_line_oracle_log(spec))


# ---------------------------------------------------------------------------
# analytic verdicts and panels


def analytic_verdict(scenario: Scenario) -> Verdict:
    if scenario.graph == "gw-tree":
        fn = classify_firework_gw if scenario.process == "firework" else classify_reverse_gw
        return fn(scenario.nlaw, scenario.rlaw, scenario.offspring)
    if not scenario.homogeneous:
        fam = scenario.nlaw
        if scenario.process == "firework":
            return classify_firework_heterogeneous(fam)
        return classify_reverse_heterogeneous(fam)
    if scenario.process == "reverse":
        return classify_reverse_homogeneous(scenario.nlaw, scenario.rlaw)
    v = classify_firework_homogeneous(scenario.nlaw, scenario.rlaw)
    if v.outcome is Outcome.INCONCLUSIVE and isinstance(scenario.nlaw, PowerTailCount) \
            and 0 < scenario.nlaw.alpha <= 1:
        v2 = classify_firework_tail_regime(scenario.nlaw, scenario.rlaw)
        if v2.decisive:
            return v2
    return v


@dataclass(frozen=True)
class MismatchRule:
    """When a Monte Carlo interval contradicts a decisive verdict."""

    extinction_ceiling: float = 0.05  # ExtinctionAS: survival-to-horizon lower bound must stay below this
    survival_floor: float = 0.0  # SurvivalPositive: upper bound must exceed this
    sure_floor: float = 0.99  # SurvivalAS: upper bound must reach this (scaled by P(tree infinite))

    def contradicts(self, verdict: Verdict, est: Estimate, scenario: Scenario) -> bool:
        if est.trials == 0 or not verdict.decisive:
            return False
        if verdict.outcome is Outcome.EXTINCTION_AS:
            return est.wilson_lo > self.extinction_ceiling
        if verdict.outcome is Outcome.SURVIVAL_POSITIVE:
            return est.wilson_hi <= self.survival_floor or est.successes == 0
        floor = self.sure_floor
        if scenario.graph == "gw-tree":
            floor *= 1.0 - scenario.offspring.extinction_probability()
        return est.wilson_hi < floor


@dataclass
class PanelRow:
    scenario: Scenario
    verdict: Verdict
    estimate: Optional[Estimate]
    mismatch: bool
    expected: Optional[str] = None
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)


def run_scenario_panel(grid: Sequence[Tuple[Scenario, int]], protocol: str = "annealed", replicates: int = 1000,
                       master_seed: int = 0, confidence: float = 0.95, rule: MismatchRule = MismatchRule(),
                       env_seed: Optional[int] = None, expected: Optional[Sequence[Optional[str]]] = None,
                       workers: Optional[int] = None) -> List[PanelRow]:
    """One row per (scenario, horizon): analytic verdict, Monte Carlo estimate, mismatch flag."""
    import time

    rows = []
    for k, (sc, horizon) in enumerate(grid):
        t0 = time.perf_counter()
        verdict = analytic_verdict(sc)
        if protocol == "annealed":
            est = estimate_annealed(sc, replicates, horizon, master_seed, confidence, workers)
        elif protocol == "quenched":
            if env_seed is None:
                raise DomainError("quenched protocol needs an env seed")
            est = estimate_quenched(sc, env_seed, replicates, horizon, master_seed, confidence, workers)
        elif protocol == "none":
            est = None
        else:
            raise DomainError(f"unknown protocol {protocol!r}")
        mismatch = est is not None and rule.contradicts(verdict, est, sc)
        rows.append(PanelRow(sc, verdict, est, mismatch, None if expected is None else expected[k],
                             time.perf_counter() - t0))
    return rows


def reverse_implication_violations(pairs: Sequence[Tuple[PanelRow, PanelRow]]) -> List[str]:
    """Names of (firework, reverse) pairs where the firework survives but the reverse process dies."""
    bad = []
    for fw, rv in pairs:
        fw_ok = fw.verdict.outcome is Outcome.SURVIVAL_POSITIVE and not fw.mismatch
        rv_dead = rv.verdict.outcome is Outcome.EXTINCTION_AS and not rv.mismatch
        if fw_ok and rv_dead:
            bad.append(fw.scenario.name)
    return bad
