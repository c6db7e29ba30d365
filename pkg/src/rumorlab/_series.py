"""Summing nonnegative series with a tail estimate and a convergence verdict."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .laws import TailShape


@dataclass(frozen=True)
class SeriesSum:
    value: float  # partial + tail, inf when divergent, nan when undecided
    partial: float
    tail: float
    certificate: str

    @property
    def convergent(self) -> Optional[bool]:
        if math.isnan(self.value):
            return None
        return math.isfinite(self.value)


def _envelope(x, shape: TailShape):
    x = np.asarray(x, dtype=np.float64)
    lx = np.log(x)
    out = -shape.s * lx
    if shape.u:
        out = out - shape.u * np.log(lx)
    if shape.v:
        out = out - shape.v * np.log(np.log(lx))
    return out


def shape_tail(last_index: int, last_term: float, shape: TailShape) -> float:
    """Estimate sum_{n > last_index} of a sequence following `shape`, scaled to last_term."""
    if last_term <= 0.0 or shape.kind == "zero":
        return 0.0
    if shape.kind == "geometric":
        r = shape.rate
        return last_term * r / (1.0 - r)
    a = last_index + 0.5
    if not shape.u and not shape.v:
        return last_term * last_index**shape.s * a ** (1.0 - shape.s) / (shape.s - 1.0)
    base = float(_envelope(last_index, shape))
    scale = last_term * math.exp(-base)
    la = math.log(a)
    if shape.s == 1.0:
        # with z = ln x the envelope integral is z^-u (ln z)^-v dz
        if not shape.v:
            return scale * la ** (1.0 - shape.u) / (shape.u - 1.0)
        if shape.u == 1.0:
            return scale * math.log(la) ** (1.0 - shape.v) / (shape.v - 1.0)
    # substitute x = e^y so slowly decaying envelopes stay well conditioned
    def f(y):
        return math.exp(min(y + float(_envelope(math.exp(y), shape)) - base, 700.0))

    hi = la + 50.0 / max(shape.s - 1.0, 1e-3)
    val, _ = integrate.quad(f, la, min(hi, 700.0), limit=400)
    return last_term * val


def fit_decay(n: np.ndarray, terms: np.ndarray):
    """Least-squares decay rates over a window: (log-linear slope, log-log slope)."""
    pos = terms > 0
    if pos.sum() < 4:
        return -math.inf, -math.inf
    n, lt = n[pos].astype(np.float64), np.log(terms[pos])
    geo = np.polyfit(n, lt, 1)[0]
    pw = np.polyfit(np.log(n), lt, 1)[0]
    return float(geo), float(pw)


def sum_series(terms: np.ndarray, shape: Optional[TailShape] = None, start_index: int = 0,
               margin: float = 0.05) -> SeriesSum:
    """Sum terms[k] (index start_index + k) and decide convergence.

    A known shape settles convergence analytically. Without one, the last
    half of the terms is fitted: geometric or power decay with exponent
    above 1 + margin counts as convergent, terms bounded below by c/n count
    as divergent, anything else stays undecided.
    """
    terms = np.asarray(terms, dtype=np.float64)
    partial = float(np.sum(terms))
    last = start_index + terms.size - 1
    if terms.size == 0:
        return SeriesSum(0.0, 0.0, 0.0, "empty")
    if shape is not None:
        if shape.kind == "zero" and shape.scale <= last:
            return SeriesSum(partial, partial, 0.0, "terms vanish beyond the support")
        if not shape.summable():
            return SeriesSum(math.inf, partial, math.inf, f"envelope n^-{shape.s:g} (ln n)^-{shape.u:g} "
                             f"(ln ln n)^-{shape.v:g} is not summable")
        if shape.kind != "zero":
            tail = shape_tail(last, float(terms[-1]), shape)
            return SeriesSum(partial + tail, partial, tail, f"{shape.kind} envelope")
    if not np.any(terms[terms.size // 2:] > 0):
        return SeriesSum(partial, partial, 0.0, "terms vanish inside the horizon")
    half = terms.size // 2
    n = np.arange(start_index + half, start_index + terms.size, dtype=np.float64)
    window = terms[half:]
    n = np.maximum(n, 1.0)
    geo, pw = fit_decay(n, window)
    if geo < -1e-3 and np.all(window[1:] <= window[:-1] * (1 + 1e-12)):
        r = math.exp(geo)
        tail = float(window[-1]) * r / (1.0 - r)
        if tail < 1e-2 * max(partial, 1e-300) or pw < -(1.0 + margin):
            return SeriesSum(partial + tail, partial, tail, "geometric fit")
    if pw < -(1.0 + margin):
        s = -pw
        tail = float(window[-1]) * n[-1] / (s - 1.0)
        return SeriesSum(partial + tail, partial, tail, f"power fit, exponent {s:.3g}")
    scaled = window * n
    q = max(1, scaled.size // 10)
    if scaled.min() > 0 and scaled[-q:].mean() >= scaled[:q].mean() * (1 - margin):
        return SeriesSum(math.inf, partial, math.inf, f"terms above {scaled.min():.3g}/n")
    return SeriesSum(math.nan, partial, math.nan, "no envelope certificate")
