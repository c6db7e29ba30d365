"""Generating-function criteria and critical values on Galton-Watson trees."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._series import SeriesSum, shape_tail, sum_series
from .criteria_line import Outcome, Verdict
from .laws import (
    DomainError,
    OffspringLaw,
    RadiusLaw,
    StationLaw,
    TailShape,
    annealed_log_tail,
    annealed_shape,
)

DEFAULT_HORIZON = 10**4
_EDGE = 1e-12


class _TreeSeries:
    """Shared coefficient tables: A(n) = P(max radius >= n) = 1 - G_N(P(R < n))."""

    def __init__(self, nlaw: StationLaw, rlaw: RadiusLaw, horizon: int = DEFAULT_HORIZON):
        if horizon < 4:
            raise DomainError("horizon must be at least 4")
        self.nlaw, self.rlaw, self.horizon = nlaw, rlaw, int(horizon)
        self.n = np.arange(1, self.horizon + 1, dtype=np.float64)
        with np.errstate(divide="ignore"):
            self.log_a = np.asarray(annealed_log_tail(nlaw, rlaw, self.n), dtype=np.float64)
            a = np.exp(self.log_a)
            keep = np.log1p(-np.minimum(a, 1.0))
        # log prod_{j < i} (1 - A(j)) for i = 1..H+1
        self.log_keep = np.concatenate([[0.0], np.cumsum(keep)])
        self.shape: Optional[TailShape] = annealed_shape(nlaw, rlaw)
        self._root = None

    @property
    def a_zero_one(self) -> float:
        return float(np.exp(self.log_a[0]))

    def root_limsup(self) -> float:
        """limsup A(n)^(1/n): analytic when the tail shape is known, else a two-scale window."""
        if self._root is not None:
            return self._root
        sh = self.shape
        if sh is not None:
            if sh.kind == "zero":
                self._root = 0.0
            elif sh.kind == "geometric":
                self._root = float(sh.rate)
            else:
                self._root = 1.0
            return self._root
        root = self._window_root(self.horizon)
        if root > 0.99:
            finer = self._window_root(4 * self.horizon)
            # subexponential decay keeps pulling the estimate towards 1
            root = 1.0 if 1.0 - finer < 0.5 * (1.0 - root) else finer
        self._root = root
        return root

    def _window_root(self, h: int) -> float:
        n = np.arange(h // 2, h + 1, dtype=np.float64)
        with np.errstate(divide="ignore"):
            la = np.asarray(annealed_log_tail(self.nlaw, self.rlaw, n), dtype=np.float64)
        best = float(np.max(la / n))
        return 0.0 if best == -math.inf else math.exp(best)

    def _log_terms(self, m: float) -> np.ndarray:
        if m == 0.0:
            return np.full_like(self.log_a, -math.inf)
        return self.log_a + self.n * math.log(m)

    def _boundary(self, m: float) -> int:
        """-1 below the convergence radius, +1 above, 0 on it (or unknown)."""
        root = self.root_limsup()
        if root == 0.0 or m == 0.0:
            return -1
        x = math.log(root) + math.log(m)
        if x < -_EDGE:
            return -1
        if x > _EDGE:
            return 1
        return 0

    def phi1(self, m: float) -> SeriesSum:
        """sum_{n>=1} A(n) m^n."""
        if m < 0:
            raise DomainError("m must be nonnegative")
        side = self._boundary(m)
        lt = self._log_terms(m)
        if side > 0:
            return SeriesSum(math.inf, math.nan, math.inf, "m beyond the convergence radius")
        if np.max(lt) > 700:
            return SeriesSum(math.inf, math.inf, math.inf, "terms overflow")
        terms = np.exp(lt)
        partial = float(terms.sum())
        sh = self.shape
        if side < 0 and sh is not None:
            if sh.kind == "zero" and sh.scale <= self.horizon:
                return SeriesSum(partial, partial, 0.0, "coefficients vanish")
            ratio = m * (sh.rate if sh.kind == "geometric" else 1.0)
            if ratio < 1.0 and (sh.kind == "geometric" or m < 1.0):
                tail = float(terms[-1]) * ratio / (1.0 - ratio)
                return SeriesSum(partial + tail, partial, tail, "geometric envelope")
        if side == 0 and sh is not None and sh.kind == "power":
            # m = 1 with a power envelope: the classical summability test
            return sum_series(terms, sh, start_index=1)
        if side < 0 and sh is None:
            r = self.root_limsup() * m
            tail = float(terms[-1]) * r / (1.0 - r)
            return SeriesSum(partial + tail, partial, tail, "window envelope")
        return sum_series(terms, start_index=1)

    def phi2(self, m: float, phi1: Optional[SeriesSum] = None) -> SeriesSum:
        """sum_{i>=1} A(i) m^i prod_{j<i} (1 - A(j))."""
        p1 = self.phi1(m) if phi1 is None else phi1
        if m > 1.0 and p1.convergent is False:
            return SeriesSum(math.inf, math.nan, math.inf, "diverges with the first series")
        lt = self._log_terms(m) + self.log_keep[:-1]
        terms = np.exp(np.minimum(lt, 700.0))
        partial = float(terms.sum())
        keep_end = math.exp(float(self.log_keep[-1]))
        tail1 = p1.tail if p1.convergent else math.inf
        tail = keep_end * tail1
        if m <= 1.0:
            tail = min(tail, keep_end * m ** (self.horizon + 1))
        if math.isnan(tail):
            return SeriesSum(math.nan, partial, math.nan, "undecided")
        return SeriesSum(partial + tail, partial, tail, "bounded by the first series tail")

    def phi_firework(self, t: float) -> SeriesSum:
        """Probability generating function of the max radius at t."""
        if t < 0:
            raise DomainError("t must be nonnegative")
        if t <= 1.0:
            a = np.exp(self.log_a)
            coef = np.concatenate([[1.0 - a[0]], a[:-1] - a[1:]])
            powers = t ** np.arange(self.horizon)
            partial = float(np.dot(coef, powers))
            tail = float(a[-1]) * t**self.horizon
            return SeriesSum(partial + tail, partial, tail, "increments bounded by the remaining mass")
        # summation by parts: Phi(t) = 1 + (1 - 1/t) phi1(t)
        p1 = self.phi1(t)
        if not p1.convergent:
            return SeriesSum(p1.value, p1.partial, p1.tail, p1.certificate)
        val = 1.0 + (1.0 - 1.0 / t) * p1.value
        return SeriesSum(val, val, 0.0, p1.certificate)


@dataclass
class TreeCriteria:
    PhiAtM: float
    Phi0: float
    phi1AtM: float
    phi2AtM: Optional[float]
    Mc: float
    mc: float
    mBarLowerFlag: bool
    m: float
    diagnostics: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in
                ("PhiAtM", "Phi0", "phi1AtM", "phi2AtM", "Mc", "mc", "mBarLowerFlag")}


def phi_firework(nlaw: StationLaw, rlaw: RadiusLaw, t: float, tol: float = 1e-12,
                 horizon: int = DEFAULT_HORIZON) -> float:
    return _TreeSeries(nlaw, rlaw, horizon).phi_firework(t).value


def phi1(nlaw: StationLaw, rlaw: RadiusLaw, m: float, tol: float = 1e-12,
         horizon: int = DEFAULT_HORIZON) -> float:
    return _TreeSeries(nlaw, rlaw, horizon).phi1(m).value


def phi2(nlaw: StationLaw, rlaw: RadiusLaw, m: float, tol: float = 1e-12,
         horizon: int = DEFAULT_HORIZON) -> float:
    return _TreeSeries(nlaw, rlaw, horizon).phi2(m).value


def _scope_note(nlaw: StationLaw) -> str:
    if nlaw.p_zero > 0:
        return "quenched scope: positive probability for a positive-measure set of (tree, station) pairs"
    return "quenched scope: holds for almost every infinite tree"


def _subcritical(offspring: OffspringLaw, tag: str) -> Optional[Verdict]:
    if offspring.mean <= 1.0:
        return Verdict(Outcome.EXTINCTION_AS, offspring.mean, tag, 0,
                       "offspring mean <= 1: the tree itself is finite almost surely", 1.0)
    return None


def classify_firework_gw(nlaw: StationLaw, rlaw: RadiusLaw, offspring: OffspringLaw, tol: float = 1e-9,
                         k_bound: Optional[int] = None, horizon: int = DEFAULT_HORIZON) -> Verdict:
    if k_bound is not None and offspring.max_degree > k_bound:
        raise DomainError(f"offspring law reaches degree {offspring.max_degree} > k = {k_bound}")
    sub = _subcritical(offspring, "Thm5.2")
    if sub is not None:
        return sub
    ts = _TreeSeries(nlaw, rlaw, horizon)
    m = offspring.mean
    phi0 = ts.phi_firework(0.0).value
    phim = ts.phi_firework(m).value
    margin = phim - 1.0 - phi0
    diag = {"Phi(m)": phim, "Phi(0)": phi0}
    if margin > tol:
        return Verdict(Outcome.SURVIVAL_POSITIVE, phim - 1.0, "Thm5.2", horizon,
                       f"Phi(m) - 1 > Phi(0); {_scope_note(nlaw)}", phi0, tol, diag)
    k = offspring.max_degree if k_bound is None else k_bound
    phik = ts.phi_firework(float(k)).value
    diag["Phi(k)"] = phik
    if phik - 1.0 <= 1.0 - 1.0 / k + tol:
        return Verdict(Outcome.EXTINCTION_AS, phik - 1.0, "Thm5.2", horizon,
                       f"{k}-bounded tree with Phi(k) - 1 <= 1 - 1/k", 1.0 - 1.0 / k, tol, diag)
    return Verdict(Outcome.INCONCLUSIVE, phim - 1.0, "Thm5.2", horizon,
                   "between the survival condition at m and the extinction condition at k",
                   phi0, abs(margin), diag)


def classify_reverse_gw(nlaw: StationLaw, rlaw: RadiusLaw, offspring: OffspringLaw, tol: float = 1e-9,
                        horizon: int = DEFAULT_HORIZON) -> Verdict:
    sub = _subcritical(offspring, "Thm5.4")
    if sub is not None:
        return sub
    ts = _TreeSeries(nlaw, rlaw, horizon)
    m = offspring.mean
    p1 = ts.phi1(m)
    p2 = ts.phi2(m, p1)
    diag = {"phi1": p1.value, "phi2": p2.value, "phi1_certificate": p1.certificate}
    if p1.convergent is None:
        return Verdict(Outcome.INCONCLUSIVE, p1.value, "Thm5.4", horizon,
                       "first series undecided", 1.0, diagnostics=diag)
    if not p1.convergent:
        return Verdict(Outcome.SURVIVAL_AS, math.inf, "Thm5.4", horizon,
                       "phi1(m) = inf: survival with probability 1 given an infinite tree", diagnostics=diag)
    if abs(p2.value - 1.0) <= tol:
        return Verdict(Outcome.INCONCLUSIVE, p2.value, "Thm5.4", horizon,
                       "phi2(m) at the threshold", 1.0, tol, diag)
    if p2.value > 1.0:
        return Verdict(Outcome.SURVIVAL_POSITIVE, p2.value, "Thm5.4", horizon,
                       f"phi2(m) > 1; {_scope_note(nlaw)}", 1.0, tol, diag)
    return Verdict(Outcome.EXTINCTION_AS, p2.value, "Thm5.4", horizon,
                   "phi1(m) finite and phi2(m) <= 1", 1.0, tol, diag)


def _bisect_mc(ts: _TreeSeries, lo: float, hi: float, tol: float) -> float:
    # invariant: phi2(lo) <= 1 < phi2(hi)
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if ts.phi2(mid).value <= 1.0:
            lo = mid
        else:
            hi = mid
    return lo


def critical_values(nlaw: StationLaw, rlaw: RadiusLaw, tol: float = 1e-9,
                    offspring: Optional[OffspringLaw] = None, horizon: int = DEFAULT_HORIZON) -> TreeCriteria:
    ts = _TreeSeries(nlaw, rlaw, horizon)
    root = ts.root_limsup()
    big_m = math.inf if root == 0.0 else 1.0 / root
    mbar_flag = root == 1.0
    if ts.phi2(1.0).value >= 1.0:
        mc = 1.0
    elif math.isfinite(big_m):
        top = ts.phi2(big_m).value
        mc = big_m if top <= 1.0 else _bisect_mc(ts, 1.0, big_m, tol)
    else:
        hi = 2.0
        while ts.phi2(hi).value <= 1.0:
            hi *= 2.0
            if hi > 1e12:
                raise DomainError("no crossing of phi2 = 1 below 1e12")
        mc = _bisect_mc(ts, hi / 2.0, hi, tol)
    m = offspring.mean if offspring is not None else mc
    p1 = ts.phi1(m)
    p2 = ts.phi2(m, p1)
    return TreeCriteria(
        PhiAtM=ts.phi_firework(m).value,
        Phi0=ts.phi_firework(0.0).value,
        phi1AtM=p1.value,
        phi2AtM=p2.value,
        Mc=big_m,
        mc=mc,
        mBarLowerFlag=mbar_flag,
        m=m,
        diagnostics={"root_limsup": root, "horizon": horizon},
    )
