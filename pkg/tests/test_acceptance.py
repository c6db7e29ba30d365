"""Acceptance gate. Each test prints one PASS/FAIL line before asserting.

Run on its own with ``pytest tests/test_acceptance.py -v``; the summary lines
appear inline even without ``-s``.
"""
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import enumerate_line, reverse_tree_hit_probability
from rumorlab.config import load_config
from rumorlab.criteria_line import Outcome
from rumorlab.criteria_tree import critical_values, phi1, phi2
from rumorlab.estimator import (
    MismatchRule,
    OracleSpec,
    Scenario,
    analytic_verdict,
    estimate_annealed,
    estimate_quenched,
    exact_line_oracle,
    quenched_panel,
)
from rumorlab.laws import (
    BernoulliCount,
    DeterministicCount,
    DeterministicRadius,
    GeometricRadius,
    OffspringLaw,
    PmfTable,
    PowerRadius,
    PowerTailCount,
    TailTable,
)
from rumorlab.sim_tree import gw_vertex

ROOT = Path(__file__).resolve().parents[1]
ONE = DeterministicCount(1)
BINARY = OffspringLaw.deterministic(2)
RULE = MismatchRule()


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert ok, detail

    return emit


# -- 1. exact oracle on bounded radii

def _pmf(p0, p1, p2):
    return TailTable.from_pmf([p0, p1, p2])


LINE_FIXTURES = [
    ("firework", ONE, _pmf(0.02, 0.18, 0.8)),
    ("firework", ONE, _pmf(0.01, 0.04, 0.95)),
    ("firework", BernoulliCount(0.97), _pmf(0.0, 0.1, 0.9)),
    ("firework", PmfTable([0.005, 0.5, 0.495]), _pmf(0.05, 0.25, 0.7)),
    ("firework", PmfTable([0.0, 0.3, 0.7]), _pmf(0.05, 0.15, 0.8)),
    ("reverse", ONE, _pmf(0.01, 0.09, 0.9)),
    ("reverse", ONE, _pmf(0.005, 0.2, 0.795)),
    ("reverse", BernoulliCount(0.98), _pmf(0.0, 0.2, 0.8)),
    ("reverse", PmfTable([0.002, 0.3, 0.698]), _pmf(0.05, 0.2, 0.75)),
    ("reverse", DeterministicCount(2), _pmf(0.05, 0.25, 0.7)),
]


def test_criterion_1_line_oracle(report):
    t0 = time.perf_counter()
    misses, worst = [], 0.0
    for k, (process, nlaw, rlaw) in enumerate(LINE_FIXTURES):
        small = OracleSpec.from_laws(process, nlaw, rlaw, 10)
        worst = max(worst, abs(exact_line_oracle(small) - enumerate_line(process, small.pmf, 10)))
        exact = exact_line_oracle(OracleSpec.from_laws(process, nlaw, rlaw, 200))
        est = estimate_annealed(Scenario("line", process, nlaw, rlaw), 5000, 200, 1000 + k, confidence=0.99)
        if not est.wilson_lo <= exact <= est.wilson_hi:
            misses.append(f"{process}#{k} oracle {exact:.4f} vs [{est.wilson_lo:.4f}, {est.wilson_hi:.4f}]")
    took = time.perf_counter() - t0
    ok = not misses and worst <= 1e-12 and took < 120
    report("criterion 1 (line oracle)", ok,
           f"{len(LINE_FIXTURES) - len(misses)}/10 inside 99% intervals; enumeration gap {worst:.1e}; {took:.0f}s"
           + ("; " + "; ".join(misses) if misses else ""))


# -- 2. firework line regimes

def test_criterion_2_firework_regimes(report):
    t0 = time.perf_counter()
    half = BernoulliCount(0.5)
    lives = Scenario("line", "firework", half, PowerRadius(c=4, beta=1))
    dies = Scenario("line", "firework", half, PowerRadius(c=1, beta=1))
    v_live, v_die = analytic_verdict(lives), analytic_verdict(dies)
    e_live = estimate_annealed(lives, 2000, 10**4, 2)
    e_die = estimate_annealed(dies, 2000, 10**4, 2)
    took = time.perf_counter() - t0
    ok = (v_live.outcome is Outcome.SURVIVAL_POSITIVE and e_live.wilson_lo > 0
          and v_die.outcome is Outcome.EXTINCTION_AS and e_die.point_estimate <= 0.01 and took < 300)
    report("criterion 2 (firework regimes)", ok,
           f"4/n: {v_live.outcome.value}, lower bound {e_live.wilson_lo:.3f}; "
           f"1/n: {v_die.outcome.value}, fraction {e_die.point_estimate:.4f}; {took:.0f}s")


# -- 3. reverse line sharp survival

def test_criterion_3_divergent_sum_always_survives(report):
    sc = Scenario("line", "reverse", ONE, PowerRadius(beta=1, shift=1))
    v, est = analytic_verdict(sc), estimate_annealed(sc, 2000, 10**4, 3)
    ok = v.outcome is Outcome.SURVIVAL_AS and est.successes == est.trials == 2000
    report("criterion 3a (reverse, W infinite)", ok,
           f"{v.outcome.value}, {est.successes}/{est.trials} reach 10^4")


def test_criterion_3_summable_tail_literal(report):
    # min(1, n^-2) puts P(R >= 1) = 1, so with one station per site every
    # neighbour listens and the process cannot stop; the fraction is 1.
    sc = Scenario("line", "reverse", ONE, PowerRadius(beta=2))
    est = estimate_annealed(sc, 2000, 10**4, 3)
    report("criterion 3b (reverse, min(1,n^-2))", est.point_estimate <= 0.05,
           f"{analytic_verdict(sc).outcome.value}, fraction {est.point_estimate:.3f} (ceiling 0.05)")


def test_criterion_3_summable_tail_shifted(report):
    sc = Scenario("line", "reverse", ONE, PowerRadius(beta=2, shift=1))
    v, est = analytic_verdict(sc), estimate_annealed(sc, 2000, 10**4, 3)
    ok = v.outcome is Outcome.EXTINCTION_AS and est.point_estimate <= 0.05
    report("criterion 3b' (reverse, (n+1)^-2)", ok, f"{v.outcome.value}, W={v.criterion_value:.4f}, "
                                                    f"fraction {est.point_estimate:.4f}")


# -- 4. regime tables

def _table_rows(name):
    cfg = load_config(ROOT / "configs" / name)
    rows = []
    for e in cfg.entries:
        v = analytic_verdict(e.scenario)
        est = estimate_annealed(e.scenario, e.replicates, e.horizon, cfg.master_seed, cfg.confidence)
        rows.append((e.cell, e.id, e.scenario, v, est))
    return rows


# second fixtures for the mixed firework cells, each with the opposite behaviour
EXTRA_FIREWORK = [
    ("E[N]=inf, E[R]<inf", "infiniteN-finiteR-extinction", PowerTailCount(0.5), PowerRadius(beta=2.5, shift=1)),
    ("E[N]<inf, E[R]=inf", "finiteN-infiniteR-extinction", ONE, PowerRadius(beta=1, shift=3, log_power=1)),
    ("E[N]=inf, E[R]=inf", "infiniteN-infiniteR-survival", PowerTailCount(0.5), PowerRadius(beta=1, shift=1)),
]

TABLES = {
    "firework": ("firework_regimes.json", {"E[N]<inf, E[R]<inf": "extinction"}),
    "reverse": ("reverse_regimes.json", {"E[N]<inf, E[R]<inf": "extinction", "E[N]<inf, E[R]=inf": "survival",
                                         "E[N]=inf, E[R]=inf": "survival"}),
}


def _behaviour(v, est):
    if v.outcome is Outcome.EXTINCTION_AS and est.wilson_lo <= RULE.extinction_ceiling:
        return "extinction"
    if v.outcome in (Outcome.SURVIVAL_POSITIVE, Outcome.SURVIVAL_AS) and est.successes > 0:
        return "survival"
    return "disagree"


@pytest.mark.parametrize("process", ["firework", "reverse"])
def test_criterion_4_regime_tables(report, process):
    t0 = time.perf_counter()
    name, decisive = TABLES[process]
    rows = _table_rows(name)
    if process == "firework":
        for cell, ident, nlaw, rlaw in EXTRA_FIREWORK:
            sc = Scenario("line", "firework", nlaw, rlaw, name=ident)
            rows.append((cell, ident, sc, analytic_verdict(sc), estimate_annealed(sc, 400, 2000, 35)))
    seen = {}
    for cell, ident, sc, v, est in rows:
        seen.setdefault(cell, set()).add(_behaviour(v, est))
    problems = []
    for cell, kinds in sorted(seen.items()):
        want = {decisive[cell]} if cell in decisive else {"extinction", "survival"}
        if kinds != want:
            problems.append(f"{cell}: {sorted(kinds)}")
    took = time.perf_counter() - t0
    ok = len(seen) == 4 and not problems and took < 600
    pattern = ", ".join(f"{c} -> {'/'.join(sorted(k))}" for c, k in sorted(seen.items()))
    report(f"criterion 4 ({process} table)", ok, pattern + (f"; problems {problems}" if problems else ""))


# -- 5. reverse process on the binary tree

def test_criterion_5_heavy_tail_reaches_depth(report):
    rlaw = GeometricRadius(0.5)
    sc = Scenario("gw-tree", "reverse", ONE, rlaw, BINARY)
    est = estimate_annealed(sc, 500, 20, 5)
    ok = phi1(ONE, rlaw, 2.0) == math.inf and est.successes == est.trials == 500 and est.excluded == 0
    report("criterion 5a (tree, 2^-n)", ok, f"{est.successes}/{est.trials} reach depth 20")


def test_criterion_5_light_tail_literal(report):
    rlaw = GeometricRadius(0.25)
    sc = Scenario("gw-tree", "reverse", ONE, rlaw, BINARY)
    est = estimate_annealed(sc, 500, 30, 5)
    exact = reverse_tree_hit_probability(lambda k: 0.25**k, 2, 30)
    report("criterion 5b (tree, 4^-n)", est.point_estimate <= 0.02,
           f"phi1(2)={phi1(ONE, rlaw, 2.0):.6f}, phi2(2)={phi2(ONE, rlaw, 2.0):.4f}, fraction "
           f"{est.point_estimate:.4f} (ceiling 0.02, exact finite-depth value {exact:.4f})")


def test_criterion_5_light_tail_against_exact_depth_probability(report):
    rlaw = GeometricRadius(0.25)
    sc = Scenario("gw-tree", "reverse", ONE, rlaw, BINARY)
    est = estimate_annealed(sc, 4000, 30, 5, confidence=0.99)
    exact = reverse_tree_hit_probability(lambda k: 0.25**k, 2, 30)
    deeper = reverse_tree_hit_probability(lambda k: 0.25**k, 2, 120)
    v = analytic_verdict(sc)
    ok = (v.outcome is Outcome.EXTINCTION_AS and est.wilson_lo <= exact <= est.wilson_hi and deeper < exact)
    report("criterion 5b' (tree, 4^-n vs exact)", ok,
           f"{v.outcome.value}; MC [{est.wilson_lo:.4f}, {est.wilson_hi:.4f}] holds {exact:.4f}; "
           f"depth 120 gives {deeper:.2e}")


# -- 6. critical offspring means

@pytest.mark.parametrize("q", [0.3, 0.5, 0.7])
def test_criterion_6_critical_values(report, q):
    rlaw = GeometricRadius(q)
    cv = critical_values(ONE, rlaw)
    analytic = (abs(cv.Mc - 1 / q) <= 1e-6 and 1.0 <= cv.mc <= 1 / q
                and phi2(ONE, rlaw, cv.mc) <= 1.0 < phi2(ONE, rlaw, cv.mc + 1e-6))
    below = [cv.mc * f for f in (0.6, 0.75, 0.9)]
    between = [cv.mc + (cv.Mc - cv.mc) * f for f in (0.25, 0.5, 0.75)]
    bad = []
    for m, want in [(m, Outcome.EXTINCTION_AS) for m in below] + [(m, Outcome.SURVIVAL_POSITIVE) for m in between]:
        sc = Scenario("gw-tree", "reverse", ONE, rlaw, OffspringLaw.two_point(m))
        v = analytic_verdict(sc)
        est = estimate_annealed(sc, 1000, 30, 6)
        direction = est.wilson_lo <= RULE.extinction_ceiling if want is Outcome.EXTINCTION_AS else est.wilson_lo > 0
        if v.outcome is not want or not direction:
            bad.append(f"m={m:.3f}: {v.outcome.value}, MC {est.point_estimate:.3f}")
    report(f"criterion 6 (q={q})", analytic and not bad,
           f"Mc={cv.Mc:.6f}, mc={cv.mc:.6f}, 6 probes" + (f"; off: {bad}" if bad else " agree"))


# -- 7. quenched panel

def test_criterion_7_quenched_maximality(report):
    sc = Scenario("line", "firework", BernoulliCount(0.5), PowerRadius(c=4, beta=1))
    panel = quenched_panel(sc, 200, 500, 1000, 7)
    report("criterion 7 (quenched panel)", panel.positive_fraction >= 0.95,
           f"{panel.positive_fraction:.3f} of 200 environments have a positive lower bound "
           f"({panel.skipped_envs} silent origins skipped)")


# -- 8. forced silent generations

def test_criterion_8_silenced_generations(report):
    off = OffspringLaw.deterministic(3)
    forced = Scenario("gw-tree", "firework", BernoulliCount(0.5), DeterministicRadius(2), off,
                      forced_labels=((1, 0), (2, 0)), engine="explicit")
    env = next(s for s in range(100) if gw_vertex(forced.tree_key(s), ())[1] > 0)
    quenched = estimate_quenched(forced, env, 10**4, 6, 8)
    free = Scenario("gw-tree", "firework", BernoulliCount(0.5), DeterministicRadius(2), off)
    annealed = estimate_annealed(free, 10**4, 6, 8)
    ok = quenched.successes == 0 and quenched.trials == 10**4 and annealed.wilson_lo > 0
    report("criterion 8 (silenced depths 1-2)", ok,
           f"quenched {quenched.successes}/{quenched.trials} with a broadcasting root; "
           f"annealed {annealed.point_estimate:.3f} ({analytic_verdict(free).outcome.value})")


# -- 9. invariant suites

def test_criterion_9_invariant_suites(report):
    suites = sorted(str(p) for p in (ROOT / "tests").glob("test_*.py") if p.name != "test_acceptance.py")
    env = dict(os.environ, HYPOTHESIS_PROFILE="fixed")
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *suites],
                          cwd=ROOT, env=env, capture_output=True, text=True)
    took = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-300:]
    report("criterion 9 (invariant suites)", proc.returncode == 0 and took < 900, f"{tail}; {took:.0f}s")
