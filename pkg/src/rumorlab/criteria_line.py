"""Survival and extinction classifiers for the line processes."""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ._series import SeriesSum, fit_decay, sum_series
from .laws import (
    DomainError,
    PowerTailCount,
    RadiusLaw,
    StationLaw,
    annealed_log_tail,
    annealed_shape,
    annealed_tail,
)


class Outcome(str, enum.Enum):
    EXTINCTION_AS = "ExtinctionAS"
    SURVIVAL_POSITIVE = "SurvivalPositive"
    SURVIVAL_AS = "SurvivalAS"
    INCONCLUSIVE = "Inconclusive"

    @property
    def survives(self) -> Optional[bool]:
        if self is Outcome.INCONCLUSIVE:
            return None
        return self is not Outcome.EXTINCTION_AS


@dataclass
class Verdict:
    outcome: Outcome
    criterion_value: float
    theorem_tag: str
    horizon_used: int
    margin_note: str = ""
    threshold: float = math.nan
    band: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def decisive(self) -> bool:
        return self.outcome is not Outcome.INCONCLUSIVE

    def as_row(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "criterionValue": self.criterion_value,
            "theoremTag": self.theorem_tag,
            "horizonUsed": self.horizon_used,
            "marginNote": self.margin_note,
        }


# ---------------------------------------------------------------------------
# heterogeneous families

LawPair = Tuple[StationLaw, RadiusLaw]


class IndexedLawFamily:
    """Site-dependent (station law, radius law) pairs, total over i >= 0."""

    def __init__(self, rule: Callable[[int], LawPair], period: Optional[int] = None, name: str = "rule"):
        self._rule = rule
        self.period = period
        self.name = name

    @classmethod
    def periodic(cls, pairs: Sequence[LawPair]) -> "IndexedLawFamily":
        pairs = list(pairs)
        if not pairs:
            raise DomainError("periodic family needs at least one pair")
        return cls(lambda i: pairs[i % len(pairs)], period=len(pairs), name=f"periodic({len(pairs)})")

    @classmethod
    def constant(cls, nlaw: StationLaw, rlaw: RadiusLaw) -> "IndexedLawFamily":
        return cls.periodic([(nlaw, rlaw)])

    def at(self, i: int) -> LawPair:
        if i < 0:
            raise DomainError("site index must be nonnegative")
        return self._rule(i)

    @functools.lru_cache(maxsize=None)
    def _site_row(self, key: int, max_dist: int) -> np.ndarray:
        nlaw, rlaw = self._rule(key)
        return np.asarray(annealed_tail(nlaw, rlaw, np.arange(max_dist + 1)), dtype=np.float64)

    def tail_table(self, n_sites: int, max_dist: int) -> np.ndarray:
        """T[i, d] = P(max radius at site i >= d) for i < n_sites, d <= max_dist."""
        if self.period is not None:
            base = np.stack([self._site_row(r, max_dist) for r in range(min(self.period, n_sites))])
            return base[np.arange(n_sites) % base.shape[0]]
        return np.stack([self._site_row(i, max_dist) for i in range(n_sites)])

    def station_law(self, i: int) -> StationLaw:
        return self.at(i)[0]

    def describe(self) -> dict:
        return {"family": self.name, "period": self.period}


# ---------------------------------------------------------------------------
# firework on the line


def _degenerate(nlaw: StationLaw, rlaw: RadiusLaw, tag: str, horizon: int) -> Optional[Verdict]:
    p1 = float(annealed_tail(nlaw, rlaw, 1))
    if p1 <= 0.0:
        return Verdict(Outcome.EXTINCTION_AS, 0.0, tag, horizon,
                       "degenerate: no site ever reaches its neighbour (P(max radius < 1) = 1)")
    if p1 >= 1.0:
        return Verdict(Outcome.SURVIVAL_AS, math.inf, tag, horizon,
                       "degenerate: every site reaches its neighbour (P(max radius < 1) = 0)")
    return None


def _tail_window(horizon: int, points: int = 60) -> np.ndarray:
    lo = max(2, horizon // 10)
    return np.unique(np.geomspace(lo, max(horizon, lo + 1), points).astype(np.int64)).astype(np.float64)


def firework_series_partial(nlaw: StationLaw, rlaw: RadiusLaw, horizon: int) -> np.ndarray:
    """S_n = sum_{k<=n} prod_{i<=k} G_N(P(R < i+1)) for n = 0..horizon."""
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    p = np.asarray(annealed_tail(nlaw, rlaw, np.arange(1, horizon + 2)), dtype=np.float64)
    with np.errstate(divide="ignore"):
        logs = np.cumsum(np.log1p(-p))
    return np.cumsum(np.exp(logs))


def firework_scaled_tail(nlaw: StationLaw, rlaw: RadiusLaw, n) -> np.ndarray:
    """a_n = n (1 - G_N(P(R < n)))."""
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.exp(np.log(n) + np.asarray(annealed_log_tail(nlaw, rlaw, n)))


def _kummer(nlaw: StationLaw, rlaw: RadiusLaw, window: np.ndarray) -> np.ndarray:
    # terms a_k = prod_{i<=k} (1 - p_{i+1}); with p_k = k + 2 the Kummer statistic is
    # (k+2) a_k / a_{k+1} - (k+3) = (k+2) / (1 - p_{k+2}) - (k+3)
    p = np.asarray(annealed_tail(nlaw, rlaw, window + 2), dtype=np.float64)
    return (window + 2) * p / (1.0 - p) - 1.0


def classify_firework_homogeneous(nlaw: StationLaw, rlaw: RadiusLaw, horizon: int = 10**4,
                                  band: float = 0.1) -> Verdict:
    deg = _degenerate(nlaw, rlaw, "Thm2", horizon)
    if deg is not None:
        return deg
    window = _tail_window(horizon)
    a = firework_scaled_tail(nlaw, rlaw, window)
    lo, hi = float(np.min(a)), float(np.max(a))
    diag = {"window": [float(window[0]), float(window[-1])], "liminf": lo, "limsup": hi}
    if lo > 1.0 + band:
        return Verdict(Outcome.SURVIVAL_POSITIVE, lo, "Prop5.1", horizon,
                       "n(1 - G_N(P(R < n))) stays above 1 on the tail window", 1.0, band, diag)
    if hi < 1.0 - band:
        return Verdict(Outcome.EXTINCTION_AS, hi, "Prop5.1", horizon,
                       "n(1 - G_N(P(R < n))) stays below 1 on the tail window", 1.0, band, diag)
    if math.isfinite(nlaw.mean) and math.isfinite(rlaw.mean):
        return Verdict(Outcome.EXTINCTION_AS, hi, "Prop5.1", horizon,
                       "finite mean station count and finite mean radius", 1.0, band, diag)
    k = _kummer(nlaw, rlaw, window)
    kappa = band / 10.0
    diag["kummer"] = [float(k.min()), float(k.max())]
    if k.min() > kappa:
        return Verdict(Outcome.SURVIVAL_POSITIVE, float(k.min()), "Thm2", horizon,
                       "Kummer fallback (p_n = n + 2): statistic bounded away from 0 above", 0.0, kappa, diag)
    if k.max() < -kappa:
        return Verdict(Outcome.EXTINCTION_AS, float(k.max()), "Thm2", horizon,
                       "Kummer fallback (p_n = n + 2): statistic bounded away from 0 below", 0.0, kappa, diag)
    return Verdict(Outcome.INCONCLUSIVE, 0.5 * (lo + hi), "Prop5.1", horizon,
                   "near-critical: scaled tail inside the band and Kummer statistic near 0", 1.0, band, diag)


def _log_slowly(nlaw: PowerTailCount, log_inv: np.ndarray) -> np.ndarray:
    L = nlaw.slowly
    return math.log(L.const) + L.power * np.log(np.maximum(log_inv, 1.0))


def classify_firework_tail_regime(nlaw: StationLaw, rlaw: RadiusLaw, horizon: int = 10**4,
                                  band: float = 0.1) -> Verdict:
    """Power-tail station counts: compare the regime expression with 1."""
    if not isinstance(nlaw, PowerTailCount):
        raise DomainError("the tail-regime criterion needs a power-tail station law")
    alpha = nlaw.alpha
    if not 0.0 < alpha <= 1.0:
        raise DomainError("tail exponent must lie in (0, 1]")
    window = _tail_window(horizon)
    lt = np.asarray(rlaw.log_tail(window), dtype=np.float64)
    if alpha < 1.0:
        logv = np.log(window) + alpha * lt + _log_slowly(nlaw, -lt) + math.lgamma(1.0 - alpha)
        note = "n P(R>=n)^a L(1/P(R>=n)) Gamma(1-a) against 1"
    else:
        if nlaw.slowly.power != 0:
            raise DomainError("the exponent-one regime needs P(N > n) ~ c/n")
        c = nlaw.slowly.const
        with np.errstate(divide="ignore"):
            logv = math.log(c) + np.log(window) + np.log(-lt) + lt
        note = "c n ln(1/P(R>=n)) P(R>=n) against 1"
    vals = np.exp(logv)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    diag = {"liminf": lo, "limsup": hi}
    if lo > 1.0 + band:
        return Verdict(Outcome.SURVIVAL_POSITIVE, lo, "Cor6", horizon, note, 1.0, band, diag)
    if hi < 1.0 - band:
        return Verdict(Outcome.EXTINCTION_AS, hi, "Cor6", horizon, note, 1.0, band, diag)
    return Verdict(Outcome.INCONCLUSIVE, 0.5 * (lo + hi), "Cor6", horizon, note + " (inside band)", 1.0, band, diag)


def heterogeneous_firework_terms(family: IndexedLawFamily, horizon: int) -> np.ndarray:
    """t_n = prod_{i<=n} G_{N_i}(P(R_i < n - i + 1)) for n = 0..horizon."""
    table = family.tail_table(horizon + 1, horizon + 1)
    with np.errstate(divide="ignore"):
        lg = np.log1p(-table)
    terms = np.empty(horizon + 1)
    for n in range(horizon + 1):
        i = np.arange(n + 1)
        terms[n] = math.exp(float(np.sum(lg[i, n - i + 1])))
    return terms


def classify_firework_heterogeneous(family: IndexedLawFamily, horizon: int = 2000) -> Verdict:
    terms = heterogeneous_firework_terms(family, horizon)
    s = sum_series(terms)
    diag = {"partial": s.partial, "tail": s.tail, "certificate": s.certificate}
    if s.convergent:
        return Verdict(Outcome.SURVIVAL_POSITIVE, s.value, "Thm3", horizon,
                       f"series converges ({s.certificate})", diagnostics=diag)
    note = "series diverges; the criterion gives no converse" if s.convergent is False else "series undecided"
    return Verdict(Outcome.INCONCLUSIVE, s.value, "Thm3", horizon, note, diagnostics=diag)


# ---------------------------------------------------------------------------
# reverse firework on the line


def reverse_terms(nlaw: StationLaw, rlaw: RadiusLaw, horizon: int) -> np.ndarray:
    """1 - G_N(P(R < n)) for n = 0..horizon."""
    return np.asarray(nlaw.tail_pgf(np.asarray(rlaw.tail(np.arange(horizon + 1)), dtype=np.float64)))


def reverse_W_detail(nlaw: StationLaw, rlaw: RadiusLaw, horizon: int = 10**5) -> SeriesSum:
    terms = reverse_terms(nlaw, rlaw, horizon)
    return sum_series(terms, annealed_shape(nlaw, rlaw))


def reverse_W(nlaw: StationLaw, rlaw: RadiusLaw, horizon: int = 10**5, tol: float = 1e-9) -> float:
    """W = sum_{n>=0} (1 - G_N(P(R < n))); inf when divergent, nan when undecided."""
    return reverse_W_detail(nlaw, rlaw, horizon).value


def _regime_note(nlaw: StationLaw) -> Tuple[str, str]:
    if math.isfinite(nlaw.mean):
        return "Thm4.2", "finite mean station count: W finite iff E[R] finite"
    if isinstance(nlaw, PowerTailCount):
        if nlaw.alpha == 1.0:
            return "Thm4.2", "P(N >= n) ~ c/n: W finite iff the P ln(1/P) integral is finite"
        return "Thm4.2", "P(N >= n) ~ L(n)/n^a: W finite iff the P^a L(1/P) integral is finite"
    return "Thm4.1", ""


def classify_reverse_homogeneous(nlaw: StationLaw, rlaw: RadiusLaw, horizon: int = 10**5,
                                 tol: float = 1e-9) -> Verdict:
    deg = _degenerate(nlaw, rlaw, "Thm4.1", horizon)
    if deg is not None:
        return deg
    s = reverse_W_detail(nlaw, rlaw, horizon)
    tag, regime = _regime_note(nlaw)
    diag = {"partial": s.partial, "tail": s.tail, "certificate": s.certificate}
    note = f"W = {s.value:.6g} ({s.certificate})" + (f"; {regime}" if regime else "")
    if s.convergent is None:
        return Verdict(Outcome.INCONCLUSIVE, s.value, "Thm4.1", horizon, note, diagnostics=diag)
    if s.convergent:
        return Verdict(Outcome.EXTINCTION_AS, s.value, tag, horizon, note, diagnostics=diag)
    return Verdict(Outcome.SURVIVAL_AS, math.inf, tag, horizon, note, diagnostics=diag)


def _inner_divergence(family: IndexedLawFamily, table: np.ndarray, n: int, depth: int) -> SeriesSum:
    k = np.arange(1, depth + 1)
    terms = table[n + k, k]
    if family.period is not None:
        # each residue class follows its own law; the sum diverges iff some class does
        verdicts = []
        for r in range(family.period):
            nl, rl = family.at(r)
            verdicts.append(annealed_shape(nl, rl))
        if all(v is not None for v in verdicts):
            if any(not v.summable() for v in verdicts):
                return SeriesSum(math.inf, float(terms.sum()), math.inf, "some residue class is not summable")
            return SeriesSum(float(terms.sum()), float(terms.sum()), 0.0, "every residue class is summable")
    return sum_series(terms, start_index=1)


def classify_reverse_heterogeneous(family: IndexedLawFamily, horizon: int = 1000, tol: float = 1e-9,
                                   probes: Optional[Sequence[int]] = None) -> Verdict:
    depth = horizon
    n_outer = horizon
    table = family.tail_table(n_outer + depth + 1, depth + 1)
    probes = list(range(min(10, n_outer))) if probes is None else list(probes)
    inner = [_inner_divergence(family, table, n, depth) for n in probes]
    diag = {"probes": probes, "inner": [s.value for s in inner]}
    if all(s.convergent is False for s in inner):
        return Verdict(Outcome.SURVIVAL_AS, math.inf, "Thm4.4", horizon,
                       "inner sums diverge at every probed start", diagnostics=diag)
    with np.errstate(divide="ignore"):
        lg = np.log1p(-table)
    k = np.arange(1, depth + 1)
    outer = np.array([math.exp(float(np.sum(lg[n + k, k]))) for n in range(n_outer)])
    s = sum_series(outer)
    diag.update({"outer_partial": s.partial, "outer_certificate": s.certificate})
    if s.convergent:
        return Verdict(Outcome.SURVIVAL_POSITIVE, s.value, "Thm4.4", horizon,
                       f"sum of inner products converges ({s.certificate})", diagnostics=diag)
    return Verdict(Outcome.INCONCLUSIVE, s.value, "Thm4.4", horizon,
                   "no a.s. survival certificate and the product series does not converge; "
                   "the criterion gives no extinction converse", diagnostics=diag)
