"""Laws for station counts, radii and offspring, plus the annealed radius.

Conventions used throughout the package:

* ``tail(n)`` of a radius law is P(R >= n) at integer n; the cdf is flat
  between integers, so P(R < t) = 1 - tail(ceil(t)) for t > 0.
* ``tail_pgf(x)`` of a station law is 1 - G_N(1 - x). Criteria and samplers
  only ever need the pgf close to 1, and this form avoids cancellation there.
* The annealed radius (max of N radii, 0 when N = 0) has
  P(R~ >= n) = tail_pgf(tail(n)) for n >= 1.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from .rng import RandomStream

RADIUS_CAP = 2**62
BISECT_TOL = 1e-12
BISECT_MAXITER = 200


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedError(ValueError):
    """The requested construction does not exist for these inputs."""


@dataclass(frozen=True)
class TailShape:
    """Asymptotic form of a nonnegative sequence or function.

    ``kind`` is one of:

    * ``"zero"``: eventually 0 (``scale`` holds the last nonzero index);
    * ``"geometric"``: ~ const * rate**n * poly(n);
    * ``"power"``: ~ const * n**-s * (ln n)**-u * (ln ln n)**-v.

    Station laws reuse the same container to describe 1 - G_N(1 - x) for
    small x, as ``const * x**s * ln(1/x)**u`` (``kind="near_one"``).
    """

    kind: str
    const: float = 1.0
    s: float = 0.0
    u: float = 0.0
    v: float = 0.0
    rate: float = 0.0
    scale: int = 0

    def summable(self) -> bool:
        if self.kind in ("zero", "geometric"):
            return True
        if self.s != 1.0:
            return self.s > 1.0
        if self.u != 1.0:
            return self.u > 1.0
        return self.v > 1.0


# ---------------------------------------------------------------------------
# station counts


def _as_float_array(t) -> np.ndarray:
    return np.asarray(t, dtype=np.float64)


def _check_unit(t: np.ndarray, what: str) -> None:
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError(f"{what} must lie in [0, 1]")


def _scalar_or_array(template, value):
    if np.ndim(template) == 0:
        return np.asarray(value).item()
    return value


class StationLaw(ABC):
    """Distribution of the number of stations N at a site."""

    kind: str = "abstract"

    # -- required by subclasses
    @abstractmethod
    def survival(self, j) -> np.ndarray:
        """P(N > j) for integer j >= 0."""

    @abstractmethod
    def _tail_pgf(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _sample(self, u: np.ndarray) -> np.ndarray:
        ...

    @property
    @abstractmethod
    def mean(self) -> float:
        ...

    @abstractmethod
    def describe(self) -> dict:
        ...

    # -- shared behaviour
    max_support: Optional[int] = None

    def near_one(self) -> Optional[TailShape]:
        """Shape of 1 - G_N(1 - x) as x -> 0, when known in closed form."""
        if math.isfinite(self.mean):
            return TailShape("near_one", const=self.mean, s=1.0)
        return None

    def pmf(self, j):
        j = np.asarray(j, dtype=np.int64)
        prev = np.where(j >= 1, self.survival(np.maximum(j - 1, 0)), 1.0)
        out = np.where(j >= 0, prev - self.survival(np.maximum(j, 0)), 0.0)
        return _scalar_or_array(j, np.clip(out, 0.0, 1.0))

    @property
    def p_zero(self) -> float:
        return float(1.0 - self.survival(0))

    def min_positive_atom(self) -> int:
        j = 1
        while self.pmf(j) <= 0.0:
            j += 1
            if j > 10**6:
                raise UnsupportedError("no positive atom found")
        return j

    def tail_pgf(self, x):
        """1 - G_N(1 - x), accurate for small x."""
        xa = _as_float_array(x)
        _check_unit(xa, "x")
        return _scalar_or_array(xa, np.clip(self._tail_pgf(xa), 0.0, 1.0))

    def pgf(self, t):
        """G_N(t) = E[t**N] for t in [0, 1]."""
        ta = _as_float_array(t)
        _check_unit(ta, "t")
        return _scalar_or_array(ta, np.clip(1.0 - self._tail_pgf(1.0 - ta), 0.0, 1.0))

    def log_tail_pgf(self, log_x):
        """log(1 - G_N(1 - x)) given log x; survives x far below 1e-300."""
        lx = _as_float_array(log_x)
        out = np.empty_like(lx)
        big = lx > -650.0
        if np.any(big):
            with np.errstate(divide="ignore"):
                out[big] = np.log(self._tail_pgf(np.exp(lx[big])))
        if np.any(~big):
            shape = self.near_one()
            if shape is None:
                raise UnsupportedError("no small-x asymptotics for this station law")
            small = lx[~big]
            with np.errstate(invalid="ignore"):
                val = math.log(shape.const) + shape.s * small + shape.u * np.log(-small)
            out[~big] = np.where(small == -np.inf, -np.inf, val)
        return _scalar_or_array(lx, out)

    def sample(self, u):
        """Inverse-cdf draw from uniforms u in (0, 1)."""
        ua = _as_float_array(u)
        return _scalar_or_array(ua, np.minimum(self._sample(ua), RADIUS_CAP).astype(np.int64))

    def sample_stream(self, rng: RandomStream, size: int) -> np.ndarray:
        return self.sample(rng.uniforms(size))


class DeterministicCount(StationLaw):
    kind = "deterministic"

    def __init__(self, k: int):
        if int(k) != k or k < 0:
            raise DomainError("station count must be a nonnegative integer")
        self.k = int(k)
        self.max_support = self.k

    def survival(self, j):
        return np.where(np.asarray(j) < self.k, 1.0, 0.0)

    def _tail_pgf(self, x):
        if self.k == 0:
            return np.zeros_like(x)
        with np.errstate(divide="ignore"):
            return -np.expm1(self.k * np.log1p(-x))

    def _sample(self, u):
        return np.full(u.shape, self.k, dtype=np.int64)

    @property
    def mean(self) -> float:
        return float(self.k)

    def near_one(self):
        return TailShape("near_one", const=float(self.k), s=1.0) if self.k else None

    def describe(self):
        return {"kind": "deterministic", "k": self.k}


class BernoulliCount(StationLaw):
    kind = "bernoulli"

    def __init__(self, p: float):
        if not 0.0 < p <= 1.0:
            raise DomainError("bernoulli parameter must lie in (0, 1]")
        self.p = float(p)
        self.max_support = 1

    def survival(self, j):
        j = np.asarray(j)
        return np.where(j < 1, self.p, 0.0)

    def _tail_pgf(self, x):
        return self.p * x

    def _sample(self, u):
        return (u < self.p).astype(np.int64)

    @property
    def mean(self) -> float:
        return self.p

    def describe(self):
        return {"kind": "bernoulli", "p": self.p}


class GeometricCount(StationLaw):
    """P(N >= n) = r**n on {0, 1, 2, ...}."""

    kind = "geometric"

    def __init__(self, r: float):
        if not 0.0 < r < 1.0:
            raise DomainError("geometric ratio must lie in (0, 1)")
        self.r = float(r)

    def survival(self, j):
        return self.r ** (np.asarray(j, dtype=np.float64) + 1.0)

    def _tail_pgf(self, x):
        return self.r * x / (1.0 - self.r + self.r * x)

    def _sample(self, u):
        # N = #{n >= 1 : r**n > u}
        return np.maximum(np.ceil(np.log(u) / math.log(self.r)) - 1.0, 0.0)

    @property
    def mean(self) -> float:
        return self.r / (1.0 - self.r)

    def describe(self):
        return {"kind": "geometric", "r": self.r}


class PmfTable(StationLaw):
    """Finite pmf table P(N = j) = probs[j]."""

    kind = "table"

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0):
            raise DomainError("pmf table must be a nonempty list of nonnegative numbers")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError(f"pmf table sums to {probs.sum()!r}, not 1")
        self.probs = probs / probs.sum()
        self.max_support = int(np.flatnonzero(self.probs)[-1])
        self._surv = 1.0 - np.cumsum(self.probs)
        self._surv[-1] = 0.0

    def survival(self, j):
        j = np.asarray(j, dtype=np.int64)
        return np.where(j < self.probs.size, self._surv[np.clip(j, 0, self.probs.size - 1)], 0.0)

    def _tail_pgf(self, x):
        ks = np.arange(self.probs.size, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.log1p(-x)[..., None] * ks
        lg = np.where(ks == 0, 0.0, lg)  # t**0 = 1 even at t = 0
        return np.sum(self.probs * -np.expm1(lg), axis=-1)

    def _sample(self, u):
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, u, side="right")

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def describe(self):
        return {"kind": "table", "probs": self.probs.tolist()}


@dataclass(frozen=True)
class SlowlyVarying:
    """L(n) = const * (ln max(n, e))**power; power = 0 gives a constant."""

    const: float = 1.0
    power: float = 0.0

    def __post_init__(self):
        if not self.const > 0:
            raise DomainError("slowly varying constant must be positive")

    def __call__(self, n):
        n = np.maximum(np.asarray(n, dtype=np.float64), math.e)
        return self.const * np.log(n) ** self.power

    @property
    def family(self) -> str:
        return "constant" if self.power == 0 else "log-power"

    def describe(self):
        return {"family": self.family, "const": self.const, "power": self.power}


def _li_over_t(alpha: float, x: np.ndarray) -> np.ndarray:
    """sum_{k>=1} t**(k-1) / k**alpha at t = 1 - x, for x in (0, 1], alpha in (0, 1].

    Taking the complement x keeps full precision when t rounds to 1.
    """
    x = np.asarray(x, dtype=np.float64)
    t = 1.0 - x
    out = np.empty_like(x)
    low = t < 0.25
    if np.any(low):
        tl = t[low]
        k = np.arange(1, 40, dtype=np.float64)
        out[low] = np.sum(tl[:, None] ** (k - 1) * k**-alpha, axis=1)
    hi = ~low
    if np.any(hi):
        th = t[hi]
        mu = np.log1p(-x[hi])
        if alpha == 1.0:
            li = -np.log(x[hi])
        else:
            # expansion of the polylogarithm around t = 1
            li = special.gamma(1.0 - alpha) * (-mu) ** (alpha - 1.0)
            fact = 1.0
            for k in range(40):
                if k:
                    fact *= k
                li = li + special.zeta(alpha - k) * mu**k / fact
        out[hi] = li / th
    return out


class PowerTailCount(StationLaw):
    """P(N > j) = min(1, (j+1)**-alpha * L(j+1)), alpha in (0, 1].

    Infinite mean. With a constant L the pgf is evaluated in closed form
    through the polylogarithm; a log-power L falls back to quadrature.
    """

    kind = "power-tail"

    def __init__(self, alpha: float, slowly: SlowlyVarying = SlowlyVarying()):
        if not 0.0 < alpha <= 1.0:
            raise DomainError("tail exponent must lie in (0, 1]")
        self.alpha = float(alpha)
        self.slowly = slowly
        c = slowly.const
        # survival is capped at 1 for the first `cap` indices (constant L only)
        self._cap = int(math.floor(c ** (1.0 / self.alpha))) if slowly.power == 0 and c >= 1 else 0

    def survival(self, j):
        n = np.asarray(j, dtype=np.float64) + 1.0
        return np.minimum(1.0, n**-self.alpha * self.slowly(n))

    @property
    def mean(self) -> float:
        return math.inf

    def near_one(self):
        a, L = self.alpha, self.slowly
        if a < 1.0:
            return TailShape("near_one", const=L.const * math.gamma(1.0 - a), s=a, u=L.power)
        if L.power <= -1.0:
            return None
        return TailShape("near_one", const=L.const / (L.power + 1.0), s=1.0, u=L.power + 1.0)

    def _tail_pgf(self, x):
        if self.slowly.power == 0:
            return self._tail_pgf_closed(x)
        return np.array([self._tail_pgf_quad(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def _tail_pgf_closed(self, x):
        c, J, a = self.slowly.const, self._cap, self.alpha
        x = np.asarray(x, dtype=np.float64)
        t = 1.0 - x
        out = np.zeros_like(x)
        pos = x > 0
        xp, tp = x[pos], t[pos]
        with np.errstate(divide="ignore"):
            head = -np.expm1(J * np.log1p(-xp)) if J else np.zeros_like(xp)
        ks = np.arange(1, J + 1, dtype=np.float64)
        partial = np.sum(tp[:, None] ** (ks - 1) * ks**-a, axis=1) if J else 0.0
        out[pos] = head + c * xp * (_li_over_t(a, xp) - partial)
        return out

    def _tail_pgf_quad(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return float(self.survival(0))
        t = 1.0 - x
        K = 4096
        j = np.arange(K, dtype=np.float64)
        head = float(np.sum(self.survival(j) * t**j))
        lam = -math.log1p(-x)
        f = lambda y: float(self.survival(K + y / lam)) * math.exp(-y)  # noqa: E731
        integral, _ = integrate.quad(f, 0.0, math.inf, limit=200)
        tail = t**K / lam * integral + 0.5 * float(self.survival(K)) * t**K
        return x * (head + tail)

    def _sample(self, u):
        if self.slowly.power == 0:
            c, a = self.slowly.const, self.alpha
            with np.errstate(over="ignore"):
                top = (c / u) ** (1.0 / a)
            return np.maximum(np.ceil(np.minimum(top, 2.0**63)) - 1.0, 0.0)
        # N = #{j >= 0 : survival(j) > u}, found by bisection on j
        return _count_above(lambda j: self.survival(j), u, start=0)

    def describe(self):
        return {"kind": "power-tail", "alpha": self.alpha, "slowly": self.slowly.describe()}


def _count_above(decreasing, u: np.ndarray, start: int = 1) -> np.ndarray:
    """#{j >= start : decreasing(j) > u} for a nonincreasing function, vectorized."""
    u = np.asarray(u, dtype=np.float64)
    lo = np.full(u.shape, start - 1, dtype=np.float64)  # decreasing(lo) > u, or lo = start-1
    hi = np.full(u.shape, float(start), dtype=np.float64)
    active = decreasing(hi) > u
    while np.any(active):
        lo = np.where(active, hi, lo)
        hi = np.where(active, np.minimum(hi * 2.0 + 1.0, float(RADIUS_CAP)), hi)
        active = active & (hi < RADIUS_CAP) & (decreasing(hi) > u)
    hi = np.where(decreasing(hi) > u, float(RADIUS_CAP), hi)
    for _ in range(70):
        gap = hi - lo > 1
        if not np.any(gap):
            break
        mid = np.floor((lo + hi) / 2.0)
        above = decreasing(mid) > u
        lo = np.where(gap & above, mid, lo)
        hi = np.where(gap & ~above, mid, hi)
    return lo - (start - 1)


# ---------------------------------------------------------------------------
# radii


class RadiusLaw(ABC):
    """Distribution of a station radius R >= 0, integer valued."""

    kind: str = "abstract"
    bound: Optional[int] = None

    @abstractmethod
    def _tail(self, n: np.ndarray) -> np.ndarray:
        """P(R >= n) for integer n >= 1 (float array input)."""

    @abstractmethod
    def shape(self) -> TailShape:
        ...

    @abstractmethod
    def describe(self) -> dict:
        ...

    def tail(self, n):
        """P(R >= n); equals 1 for n <= 0."""
        na = np.ceil(np.asarray(n, dtype=np.float64))
        out = np.ones_like(na)
        pos = na >= 1
        if np.any(pos):
            out[pos] = np.clip(self._tail(na[pos]), 0.0, 1.0)
        return _scalar_or_array(na, out)

    def log_tail(self, n):
        with np.errstate(divide="ignore"):
            return np.log(self.tail(n))

    def cdf_strict(self, t):
        """P(R < t)."""
        ta = np.asarray(t, dtype=np.float64)
        out = np.where(ta > 0, 1.0 - np.asarray(self.tail(np.maximum(ta, 0.0))), 0.0)
        return _scalar_or_array(ta, out)

    def inverse(self, v):
        """max{n >= 0 : P(R >= n) > v}; the monotone inverse-cdf sampler."""
        va = np.asarray(v, dtype=np.float64)
        out = _count_above(lambda n: np.asarray(self.tail(n)), va, start=1)
        return _scalar_or_array(va, np.minimum(out, RADIUS_CAP).astype(np.int64))

    def sample(self, u):
        return self.inverse(u)

    @property
    def mean(self) -> float:
        """E[R] = sum_{n>=1} P(R >= n)."""
        if not self.shape().summable():
            return math.inf
        if self.bound is not None:
            return float(np.sum(self.tail(np.arange(1, self.bound + 1))))
        n = np.arange(1, 10**6 + 1, dtype=np.float64)
        head = float(np.sum(self.tail(n)))
        rest, _ = integrate.quad(lambda x: float(self.tail(x)), 10**6 + 0.5, math.inf, limit=200)
        return head + rest


class DeterministicRadius(RadiusLaw):
    kind = "deterministic"

    def __init__(self, r: int):
        if int(r) != r or r < 0:
            raise DomainError("deterministic radius must be a nonnegative integer")
        self.r = int(r)
        self.bound = self.r

    def _tail(self, n):
        return np.where(n <= self.r, 1.0, 0.0)

    def inverse(self, v):
        va = np.asarray(v, dtype=np.float64)
        return _scalar_or_array(va, np.where(va < 1.0, self.r, 0).astype(np.int64))

    def shape(self):
        return TailShape("zero", scale=self.r)

    def describe(self):
        return {"kind": "deterministic", "r": self.r}


class TailTable(RadiusLaw):
    """P(R >= n) = tails[n] for n = 0..M, then 0."""

    kind = "table"

    def __init__(self, tails):
        tails = np.asarray(tails, dtype=np.float64)
        if tails.ndim != 1 or tails.size == 0 or tails[0] != 1.0:
            raise DomainError("tail table must start with P(R >= 0) = 1")
        if np.any(np.diff(tails) > 0) or np.any(tails < 0):
            raise DomainError("tail table must be nonincreasing and nonnegative")
        self.tails = tails
        nz = np.flatnonzero(tails > 0)
        self.bound = int(nz[-1])

    @classmethod
    def from_pmf(cls, pmf) -> "TailTable":
        pmf = np.asarray(pmf, dtype=np.float64)
        if abs(pmf.sum() - 1.0) > 1e-12:
            raise DomainError("radius pmf must sum to 1")
        tails = np.concatenate([[1.0], 1.0 - np.cumsum(pmf)[:-1]])
        return cls(np.clip(tails, 0.0, 1.0))

    def _tail(self, n):
        idx = n.astype(np.int64)
        inside = idx < self.tails.size
        return np.where(inside, self.tails[np.clip(idx, 0, self.tails.size - 1)], 0.0)

    def inverse(self, v):
        va = np.asarray(v, dtype=np.float64)
        # tails is nonincreasing; count entries n >= 1 with tails[n] > v
        desc = -self.tails[1:]
        out = np.searchsorted(desc, -va, side="left")
        return _scalar_or_array(va, out.astype(np.int64))

    def shape(self):
        return TailShape("zero", scale=self.bound)

    def describe(self):
        return {"kind": "table", "tails": self.tails.tolist()}


class GeometricRadius(RadiusLaw):
    """P(R >= n) = q**n."""

    kind = "geometric"

    def __init__(self, q: float):
        if not 0.0 < q < 1.0:
            raise DomainError("geometric radius ratio must lie in (0, 1)")
        self.q = float(q)

    def _tail(self, n):
        return self.q**n

    def log_tail(self, n):
        n = np.asarray(n, dtype=np.float64)
        return _scalar_or_array(n, np.ceil(np.maximum(n, 0.0)) * math.log(self.q))

    def inverse(self, v):
        va = np.asarray(v, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = np.maximum(np.ceil(np.log(va) / math.log(self.q)) - 1.0, 0.0)
        return _scalar_or_array(va, np.minimum(out, RADIUS_CAP).astype(np.int64))

    @property
    def mean(self) -> float:
        return self.q / (1.0 - self.q)

    def shape(self):
        return TailShape("geometric", rate=self.q)

    def describe(self):
        return {"kind": "geometric", "q": self.q}


class PowerRadius(RadiusLaw):
    """P(R >= n) = min(1, c * x**-beta * (ln x)**-gamma * (ln ln x)**-delta), x = n + shift.

    Where a logarithm factor in use is undefined (ln x <= 0 when gamma != 0,
    ln ln x <= 0 when delta != 0) the tail is 1.
    """

    kind = "power"

    def __init__(self, c: float = 1.0, beta: float = 1.0, shift: float = 0.0,
                 log_power: float = 0.0, loglog_power: float = 0.0):
        if not c > 0 or not beta > 0:
            raise DomainError("power radius needs c > 0 and beta > 0")
        if shift < 0:
            raise DomainError("shift must be nonnegative")
        self.c, self.beta, self.shift = float(c), float(beta), float(shift)
        self.log_power, self.loglog_power = float(log_power), float(loglog_power)

    def _log_raw(self, n):
        x = np.asarray(n, dtype=np.float64) + self.shift
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(x)
            val = math.log(self.c) - self.beta * lx
            undefined = x <= 0.0
            if self.log_power:
                undefined = undefined | (lx <= 0.0)
                val = val - self.log_power * np.log(lx)
            if self.loglog_power:
                undefined = undefined | (lx <= 1.0)
                val = val - self.loglog_power * np.log(np.log(lx))
        return np.where(undefined, 0.0, np.minimum(val, 0.0))

    def _tail(self, n):
        return np.exp(self._log_raw(n))

    def log_tail(self, n):
        na = np.ceil(np.asarray(n, dtype=np.float64))
        return _scalar_or_array(na, np.where(na >= 1, self._log_raw(np.maximum(na, 1.0)), 0.0))

    def inverse(self, v):
        va = np.asarray(v, dtype=np.float64)
        if self.log_power == 0 and self.loglog_power == 0:
            with np.errstate(over="ignore"):
                top = np.minimum((self.c / va) ** (1.0 / self.beta), 2.0**63)
            # tail(n) > v  <=>  n + shift < top  (or the cap of 1 applies)
            out = np.ceil(top - self.shift) - 1.0
            return _scalar_or_array(va, np.minimum(np.maximum(out, 0.0), RADIUS_CAP).astype(np.int64))
        return super().inverse(v)

    def shape(self):
        return TailShape("power", const=self.c, s=self.beta, u=self.log_power, v=self.loglog_power)

    def describe(self):
        return {"kind": "power", "c": self.c, "beta": self.beta, "shift": self.shift,
                "log_power": self.log_power, "loglog_power": self.loglog_power}


# ---------------------------------------------------------------------------
# annealed radius


def annealed_tail(nlaw: StationLaw, rlaw: RadiusLaw, n):
    """P(R~ >= n) where R~ is the max of N radii (0 when N = 0)."""
    na = np.asarray(n, dtype=np.float64)
    out = np.where(na <= 0, 1.0, nlaw.tail_pgf(np.asarray(rlaw.tail(np.maximum(na, 1.0)))))
    return _scalar_or_array(na, out)


def annealed_log_tail(nlaw: StationLaw, rlaw: RadiusLaw, n):
    na = np.asarray(n, dtype=np.float64)
    lt = np.asarray(rlaw.log_tail(np.maximum(na, 1.0)), dtype=np.float64)
    out = np.where(na <= 0, 0.0, nlaw.log_tail_pgf(lt))
    return _scalar_or_array(na, out)


def radius_cdf_strict(rlaw: RadiusLaw, t):
    return rlaw.cdf_strict(t)


def pgf_eval(nlaw: StationLaw, t):
    return nlaw.pgf(t)


def annealed_cdf(nlaw: StationLaw, rlaw: RadiusLaw, t):
    """P(R~ < t) = 1{t > 0} * G_N(P(R < t))."""
    ta = np.asarray(t, dtype=np.float64)
    out = np.where(ta > 0, nlaw.pgf(np.asarray(rlaw.cdf_strict(ta))), 0.0)
    return _scalar_or_array(ta, out)


def fold_radius(rlaw: RadiusLaw, counts, u) -> np.ndarray:
    """Max of `counts` i.i.d. radii from a single uniform per site.

    With k stations, P(max >= n) = 1 - (1 - tail(n))**k, so the max equals
    rlaw.inverse(1 - (1 - u)**(1/k)). One uniform per site keeps the draw
    monotone in the radius law, which is what the coupling arguments need.
    """
    counts = np.asarray(counts, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -np.expm1(np.log1p(-u) / counts)
    v = np.where(counts > 0, v, 1.0)
    return np.where(counts > 0, rlaw.inverse(v), 0).astype(np.int64)


def annealed_sample(nlaw: StationLaw, rlaw: RadiusLaw, rng: RandomStream, size: Optional[int] = None):
    """Draw N, then the max of N radii (0 when N = 0)."""
    m = 1 if size is None else size
    counts = nlaw.sample(rng.uniforms(m))
    out = fold_radius(rlaw, counts, rng.uniforms(m))
    return int(out[0]) if size is None else out


def annealed_pmf(nlaw: StationLaw, rlaw: RadiusLaw, upto: int) -> np.ndarray:
    """P(R~ = j) for j = 0..upto-1 followed by P(R~ >= upto)."""
    tails = np.asarray(annealed_tail(nlaw, rlaw, np.arange(0, upto + 1)), dtype=np.float64)
    pmf = tails[:-1] - tails[1:]
    return np.concatenate([np.clip(pmf, 0.0, 1.0), [tails[-1]]])


def standing_assumption(nlaw: StationLaw, rlaw: RadiusLaw) -> float:
    """P(R~ < 1) = G_N(P(R < 1)); the theory needs this strictly inside (0, 1)."""
    return float(nlaw.pgf(float(rlaw.cdf_strict(1.0))))


def check_standing_assumption(nlaw: StationLaw, rlaw: RadiusLaw) -> None:
    p = standing_assumption(nlaw, rlaw)
    if not 0.0 < p < 1.0:
        raise DomainError(
            f"standing assumption violated: P(max radius < 1) = {p!r} must lie strictly in (0, 1)"
        )


def annealed_shape(nlaw: StationLaw, rlaw: RadiusLaw) -> Optional[TailShape]:
    """Asymptotic form of n -> P(R~ >= n), or None when unknown."""
    rs = rlaw.shape()
    if rs.kind == "zero":
        return rs
    ns = nlaw.near_one()
    if ns is None:
        return None
    if rs.kind == "geometric":
        return TailShape("geometric", rate=rs.rate**ns.s)
    # tail(n) ~ K n^-b (ln n)^-g (lnln n)^-d ; ln(1/tail) ~ b ln n
    a, w = ns.s, ns.u
    const = ns.const * rs.const**a * rs.s**w
    return TailShape("power", const=const, s=a * rs.s, u=a * rs.u - w, v=a * rs.v)


# ---------------------------------------------------------------------------
# constructions that force survival


class ThresholdCount(StationLaw):
    """Station law with P(N >= k) = min(1, (1+eps)/(delta * n(k))).

    th(n) = ln(1-delta)/ln P(R < n) is the station count that makes a site
    reach distance n with probability at least delta, and n(k) is the first
    index with k <= ceil(th(n)). Every n then satisfies
    P(N >= th(n)) >= (1+eps)/(n delta), hence n(1 - G_N(P(R < n))) >= 1 + eps.
    """

    kind = "threshold"

    def __init__(self, rlaw: RadiusLaw, eps: float, delta: float):
        self.rlaw, self.eps, self.delta = rlaw, float(eps), float(delta)
        self._ld = math.log1p(-self.delta)

    def threshold(self, n):
        """ln(1-delta)/ln P(R < n); inf once P(R < n) rounds to 1."""
        with np.errstate(divide="ignore", over="ignore"):
            return self._ld / np.log1p(-np.asarray(self.rlaw.tail(n), dtype=np.float64))

    def first_index(self, k):
        """n(k) = min{n >= 1 : th(n) > k - 1}."""
        k = np.asarray(k, dtype=np.float64)
        with np.errstate(divide="ignore", over="ignore"):
            tau = np.where(k > 1, -np.expm1(self._ld / np.maximum(k - 1.0, 1e-300)), 1.0)
        cand = np.maximum(np.asarray(self.rlaw.inverse(tau), dtype=np.float64), 1.0)
        # the inverse works with ">" while we need "<"; fix the boundary cases
        for _ in range(2):
            cand = np.where((cand > 1) & (self.threshold(np.maximum(cand - 1, 1.0)) > k - 1), cand - 1, cand)
            cand = np.where(self.threshold(cand) > k - 1, cand, cand + 1)
        return cand

    def level(self, n):
        return np.minimum(1.0, (1.0 + self.eps) / (self.delta * np.asarray(n, dtype=np.float64)))

    def survival(self, j):
        return self.level(self.first_index(np.asarray(j, dtype=np.float64) + 1.0))

    @property
    def mean(self) -> float:
        return math.inf

    def near_one(self):
        return None

    def _tail_pgf(self, x):
        with np.errstate(divide="ignore"):
            return np.exp(self.log_tail_pgf(np.log(x)))

    def _log_block_top(self, n):
        """log ceil(th(n)); the ceiling is exact while th(n) < 2**52."""
        lt = np.asarray(self.rlaw.log_tail(n), dtype=np.float64)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            tail = np.exp(lt)
            denom = np.where(lt < -18.0, lt, np.log(-np.log1p(-np.minimum(tail, 1.0))))
            lth = math.log(-self._ld) - denom
            small = lth < 36.0
            ceiled = np.log(np.ceil(np.exp(np.where(small, lth, 0.0))))
        return np.where(small, ceiled, lth)

    def log_tail_pgf(self, log_x):
        lx = np.asarray(log_x, dtype=np.float64)
        out = np.array([self._log_tail_pgf_one(float(v)) for v in np.ravel(lx)]).reshape(lx.shape)
        return _scalar_or_array(lx, out)

    def _log_tail_pgf_one(self, log_x: float) -> float:
        # P(N >= k) is constant on blocks k in (top(n-1), top(n)], so
        # 1 - G(t) = x * sum_k P(N >= k) t**(k-1) telescopes block by block
        # into level(n) * (t**top(n-1) - t**top(n)).
        if log_x == -math.inf:
            return -math.inf
        if log_x >= 0.0:
            return math.log(max(float(self.survival(0)), 1e-300))
        lam = log_x if log_x < -30.0 else math.log(-math.log1p(-math.exp(log_x)))
        total = -math.inf
        n0, chunk, prev = 1, 1024, -math.inf
        while n0 <= 10**8:
            ns = np.arange(n0, n0 + chunk, dtype=np.float64)
            top = self._log_block_top(ns)
            bot = np.concatenate([[prev], top[:-1]])
            prev = top[-1]
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                xb = np.exp(lam + bot)
                # log of (x*top - x*bot), then of 1 - exp(-that)
                lw = lam + top + np.log1p(-np.exp(bot - top))
                w = np.exp(lw)
                lgap = np.where(w < 1e-8, lw, np.log(-np.expm1(-w)))
                lp = np.log(self.level(ns)) - xb + lgap
            lp = np.where(top > bot, lp, -np.inf)
            m = float(np.max(lp))
            if m > -math.inf:
                total = float(np.logaddexp(total, m + math.log(np.sum(np.exp(lp - m)))))
            rest = math.log(float(self.level(ns[-1]))) - float(np.exp(min(lam + top[-1], 700.0)))
            if total > -math.inf and rest < total + math.log(1e-15):
                break
            n0 += chunk
            chunk *= 2
        return total

    def _sample(self, u):
        # N = max{k : n(k) <= n*} = ceil(th(n*)) with n* the last index whose level exceeds u
        nstar = np.ceil((1.0 + self.eps) / (u * self.delta)) - 1.0
        th = self.threshold(np.maximum(nstar, 1.0))
        out = np.where(nstar >= 1, np.ceil(np.minimum(th, 2.0**62)), 0.0)
        return np.maximum(out, 0.0)

    def describe(self):
        return {"kind": "threshold", "radius": self.rlaw.describe(), "eps": self.eps, "delta": self.delta}


@dataclass
class SurvivingStationLaw:
    law: ThresholdCount
    threshold_index: int
    probe: dict


def build_surviving_station_law(rlaw: RadiusLaw, eps: float, delta: float) -> SurvivingStationLaw:
    """A station law that makes the homogeneous line firework survive."""
    if rlaw.bound is not None:
        raise UnsupportedError("the construction needs an unbounded radius law")
    if not eps > 0 or not 0 < delta < 1:
        raise DomainError("need eps > 0 and delta in (0, 1)")
    law = ThresholdCount(rlaw, eps, delta)
    # the displayed inequality holds for every n once the level drops below 1
    n0 = int(math.ceil((1.0 + eps) / delta))
    grid = np.unique(np.geomspace(max(n0, 1), max(n0, 1) * 10**3, 25).astype(np.int64)).astype(np.float64)
    th = law.threshold(grid)
    grid, th = grid[th < 2.0**52], th[th < 2.0**52]
    lhs = np.asarray(law.survival(np.maximum(np.ceil(th) - 1.0, 0.0)), dtype=np.float64)
    rhs = (1.0 + eps) / (grid * delta)
    probe = {"n": grid.astype(int).tolist(), "lhs": lhs.tolist(), "rhs": rhs.tolist(),
             "holds": bool(np.all(lhs >= rhs * (1 - 1e-12)))}
    return SurvivingStationLaw(law, n0, probe)


def _bisect_level(nlaw: StationLaw, target: np.ndarray) -> np.ndarray:
    """inf{t : tail_pgf(t) >= target} per entry, capped at 1."""
    target = np.asarray(target, dtype=np.float64)
    lo = np.zeros_like(target)
    hi = np.ones_like(target)
    reachable = np.asarray(nlaw.tail_pgf(hi)) >= target
    for _ in range(BISECT_MAXITER):
        if np.all(hi - lo <= BISECT_TOL * np.maximum(hi, 1e-300)):
            break
        mid = 0.5 * (lo + hi)
        ok = np.asarray(nlaw.tail_pgf(mid)) >= target
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return np.where(reachable, hi, 1.0)


class InverseTailRadius(RadiusLaw):
    """P(R >= n) = p_n = inf{t : G_N(1 - t) <= 1 - level/n} (capped at 1)."""

    kind = "inverse-pgf"

    def __init__(self, nlaw: StationLaw, level: float = 2.0):
        if nlaw.p_zero >= 1.0:
            raise UnsupportedError("needs P(N = 0) < 1")
        self.nlaw, self.level = nlaw, float(level)

    def _tail(self, n):
        n = np.asarray(n, dtype=np.float64)
        if isinstance(self.nlaw, BernoulliCount):
            return np.minimum(1.0, self.level / (n * self.nlaw.p))
        if isinstance(self.nlaw, DeterministicCount) and self.nlaw.k == 1:
            return np.minimum(1.0, self.level / n)
        target = self.level / n
        return np.where(target >= 1.0 - self.nlaw.p_zero, 1.0, _bisect_level(self.nlaw, np.minimum(target, 1.0)))

    def bisected(self, n):
        """p_n by bisection, bypassing closed forms (used as a cross-check)."""
        n = np.asarray(n, dtype=np.float64)
        return _bisect_level(self.nlaw, np.minimum(self.level / n, 1.0))

    def shape(self):
        ns = self.nlaw.near_one()
        if ns is None:
            raise UnsupportedError("station law has no closed-form behaviour near 1")
        a, w = ns.s, ns.u
        return TailShape("power", const=(self.level / ns.const) ** (1.0 / a) * a ** (w / a),
                         s=1.0 / a, u=w / a)

    def describe(self):
        return {"kind": "inverse-pgf", "stations": self.nlaw.describe(), "level": self.level}


def build_surviving_radius_law(nlaw: StationLaw) -> InverseTailRadius:
    """A radius law that makes the homogeneous line firework survive."""
    return InverseTailRadius(nlaw, 2.0)


# ---------------------------------------------------------------------------
# offspring


class OffspringLaw:
    """Finite offspring pmf for Galton-Watson trees."""

    def __init__(self, probs, name: str = "table"):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0):
            raise DomainError("offspring pmf must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise DomainError("offspring pmf must sum to 1")
        self.probs = probs / probs.sum()
        self.name = name
        self.max_degree = int(np.flatnonzero(self.probs)[-1])
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0

    @classmethod
    def deterministic(cls, k: int) -> "OffspringLaw":
        p = np.zeros(k + 1)
        p[k] = 1.0
        return cls(p, f"deterministic({k})")

    @classmethod
    def binomial(cls, n: int, p: float) -> "OffspringLaw":
        from scipy.stats import binom

        return cls(binom.pmf(np.arange(n + 1), n, p), f"binomial({n},{p})")

    @classmethod
    def poisson(cls, lam: float, kmax: Optional[int] = None) -> "OffspringLaw":
        from scipy.stats import poisson

        if kmax is None:
            kmax = int(poisson.isf(1e-16, lam)) + 1
        pm = poisson.pmf(np.arange(kmax + 1), lam)
        return cls(pm / pm.sum(), f"poisson({lam})")

    @classmethod
    def geometric(cls, r: float, kmax: Optional[int] = None) -> "OffspringLaw":
        if kmax is None:
            kmax = int(math.ceil(math.log(1e-16) / math.log(r)))
        pm = (1 - r) * r ** np.arange(kmax + 1)
        return cls(pm / pm.sum(), f"geometric({r})")

    @classmethod
    def two_point(cls, m: float) -> "OffspringLaw":
        """Mass on floor(m) and ceil(m) with mean exactly m."""
        if m < 0:
            raise DomainError("mean must be nonnegative")
        lo = int(math.floor(m))
        frac = m - lo
        p = np.zeros(lo + 2)
        p[lo] = 1.0 - frac
        p[lo + 1] = frac
        return cls(p, f"two-point({m})")

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def pgf(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.polynomial.polynomial.polyval(s, self.probs)

    def extinction_probability(self) -> float:
        """Smallest fixed point of the pgf in [0, 1]."""
        if self.probs[0] == 0.0:
            return 0.0
        if self.mean <= 1.0:
            return 1.0
        f = lambda s: float(self.pgf(s)) - s  # noqa: E731
        hi = 1.0 - 1e-9
        while f(hi) >= 0:
            hi = 1.0 - (1.0 - hi) * 10
            if hi <= 0:
                return 1.0
        return optimize.brentq(f, 0.0, hi, xtol=1e-15)

    def sample(self, u):
        return np.searchsorted(self._cdf, np.asarray(u, dtype=np.float64), side="right").astype(np.int64)

    def describe(self):
        return {"name": self.name, "probs": self.probs.tolist()}
