import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rumorlab.criteria_line import Outcome
from rumorlab.criteria_tree import (
    classify_firework_gw,
    classify_reverse_gw,
    critical_values,
    phi1,
    phi2,
    phi_firework,
)
from rumorlab.laws import (
    BernoulliCount,
    DeterministicCount,
    DeterministicRadius,
    DomainError,
    GeometricRadius,
    OffspringLaw,
    PmfTable,
    PowerRadius,
    TailTable,
    annealed_tail,
)

ONE = DeterministicCount(1)
BINARY = OffspringLaw.deterministic(2)


# -- firework generating function

@pytest.mark.parametrize("r", [1, 2, 3])
@pytest.mark.parametrize("t", [0.0, 0.5, 1.7, 3.0])
def test_phi_deterministic_radius_is_a_power(r, t):
    assert phi_firework(ONE, DeterministicRadius(r), t) == pytest.approx(t**r, rel=1e-12)


def test_phi_at_zero_is_probability_of_no_reach():
    assert phi_firework(BernoulliCount(0.3), GeometricRadius(0.5), 0.0) == pytest.approx(0.7 + 0.3 * 0.5)


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0, 1.5, 1.9])
def test_phi_geometric_closed_form(t):
    assert phi_firework(ONE, GeometricRadius(0.5), t) == pytest.approx(1.0 / (2.0 - t), rel=1e-9)


@pytest.mark.parametrize("t", [2.0, 2.5])
def test_phi_geometric_diverges_past_the_radius(t):
    assert phi_firework(ONE, GeometricRadius(0.5), t) == math.inf


def test_phi_negative_argument_rejected():
    with pytest.raises(DomainError):
        phi_firework(ONE, GeometricRadius(0.5), -0.1)


# -- reverse series

@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 3.0])
def test_phi1_deterministic_radius(m):
    assert phi1(ONE, DeterministicRadius(3), m) == pytest.approx(m + m**2 + m**3, rel=1e-12)


def test_phi1_quarter_geometric_at_two():
    assert phi1(ONE, GeometricRadius(0.25), 2.0) == pytest.approx(1.0, rel=1e-12)


def test_phi1_half_geometric_at_two_diverges():
    assert phi1(ONE, GeometricRadius(0.5), 2.0) == math.inf


@pytest.mark.parametrize("nlaw,rlaw", [
    (ONE, GeometricRadius(0.5)),
    (BernoulliCount(0.5), GeometricRadius(0.7)),
    (PmfTable([0.2, 0.5, 0.3]), TailTable([1.0, 0.6, 0.3, 0.1])),
    (BernoulliCount(0.4), PowerRadius(beta=2, shift=1)),
])
def test_phi2_at_one_is_one_minus_the_keep_product(nlaw, rlaw):
    j = np.arange(1, 200_001, dtype=float)
    keep = 1.0 - np.asarray(annealed_tail(nlaw, rlaw, j))
    assert phi2(nlaw, rlaw, 1.0) == pytest.approx(1.0 - np.prod(keep), abs=1e-5)


_LAWS = st.sampled_from([
    (ONE, GeometricRadius(0.5)),
    (ONE, GeometricRadius(0.3)),
    (BernoulliCount(0.5), GeometricRadius(0.6)),
    (PmfTable([0.3, 0.3, 0.4]), TailTable([1.0, 0.5, 0.2])),
    (BernoulliCount(0.7), PowerRadius(beta=2, shift=1)),
])


@given(pair=_LAWS, m=st.floats(0.0, 1.9))
def test_phi2_never_exceeds_phi1(pair, m):
    nlaw, rlaw = pair
    p1 = phi1(nlaw, rlaw, m, horizon=2000)
    if math.isfinite(p1):
        assert phi2(nlaw, rlaw, m, horizon=2000) <= p1 * (1 + 1e-12) + 1e-15


@pytest.mark.parametrize("nlaw,rlaw,top", [
    (ONE, GeometricRadius(0.5), 1.99),
    (BernoulliCount(0.5), GeometricRadius(0.6), 1.66),
    (PmfTable([0.3, 0.3, 0.4]), TailTable([1.0, 0.5, 0.2]), 6.0),
])
def test_phi2_strictly_increasing(nlaw, rlaw, top):
    grid = np.linspace(0.05, top, 40)
    vals = [phi2(nlaw, rlaw, m, horizon=2000) for m in grid]
    assert np.all(np.diff(vals) > 0)


# -- critical values

@pytest.mark.parametrize("q", [0.3, 0.5, 0.7])
def test_critical_values_geometric(q):
    cv = critical_values(ONE, GeometricRadius(q))
    assert cv.Mc == pytest.approx(1.0 / q, abs=1e-6)
    assert 1.0 <= cv.mc <= cv.Mc
    assert phi2(ONE, GeometricRadius(q), cv.mc) <= 1.0
    assert phi2(ONE, GeometricRadius(q), cv.mc + 1e-6) > 1.0
    assert not cv.mBarLowerFlag


def test_bounded_radius_has_no_upper_critical_value():
    cv = critical_values(ONE, TailTable([1.0, 0.5, 0.2]))
    assert cv.Mc == math.inf
    assert cv.mc >= 1.0
    assert phi2(ONE, TailTable([1.0, 0.5, 0.2]), cv.mc) <= 1.0 < phi2(ONE, TailTable([1.0, 0.5, 0.2]), cv.mc + 1e-6)


def test_cubic_pmf_radius_sets_the_lower_flag():
    # P(n <= R < n+1) ~ n^-3 means P(R >= n) ~ n^-2 and a root limsup of 1
    cv = critical_values(ONE, PowerRadius(beta=2, shift=1))
    assert cv.mBarLowerFlag
    assert cv.Mc == 1.0
    assert cv.mc == 1.0


def test_mc_nonincreasing_in_bernoulli_parameter():
    mcs = [critical_values(BernoulliCount(p), GeometricRadius(0.5)).mc for p in np.arange(1, 10) / 10]
    assert np.all(np.diff(mcs) <= 1e-9)
    assert all(1.0 <= v <= 2.0 for v in mcs)


def test_critical_values_report_divergent_first_series():
    cv = critical_values(ONE, GeometricRadius(0.5), offspring=BINARY)
    assert cv.phi1AtM == math.inf
    assert cv.m == 2.0


# -- firework classifier

def test_firework_radius_one_on_binary_tree_survives():
    v = classify_firework_gw(ONE, DeterministicRadius(1), BINARY)
    assert v.outcome is Outcome.SURVIVAL_POSITIVE
    assert v.theorem_tag == "Thm5.2"


def test_firework_mostly_silent_binary_tree_dies():
    # Phi(t) = 0.8 + 0.2 t, so Phi(2) - 1 = 0.2 <= 1/2
    v = classify_firework_gw(ONE, TailTable([1.0, 0.2]), BINARY)
    assert v.outcome is Outcome.EXTINCTION_AS
    assert v.criterion_value == pytest.approx(0.2)


@pytest.mark.parametrize("p,m", [(0.5, 3.0), (0.8, 2.0)])
def test_firework_bernoulli_survival_condition(p, m):
    rlaw = GeometricRadius(0.3)
    n = np.arange(1, 200)
    increments = rlaw.tail(n) - rlaw.tail(n + 1)
    lhs = float(np.sum(increments * m**n))
    v = classify_firework_gw(BernoulliCount(p), rlaw, OffspringLaw.deterministic(int(m)))
    assert (lhs > 1.0 / p) == (v.outcome is Outcome.SURVIVAL_POSITIVE)


def test_firework_bound_must_cover_offspring():
    with pytest.raises(DomainError):
        classify_firework_gw(ONE, DeterministicRadius(1), OffspringLaw.deterministic(3), k_bound=2)


def test_firework_subcritical_tree():
    v = classify_firework_gw(ONE, DeterministicRadius(5), OffspringLaw([0.5, 0.5]))
    assert v.outcome is Outcome.EXTINCTION_AS


def test_firework_positive_empty_probability_changes_scope_note():
    v = classify_firework_gw(BernoulliCount(0.9), DeterministicRadius(2), BINARY)
    assert v.outcome is Outcome.SURVIVAL_POSITIVE
    assert "positive-measure" in v.margin_note


# -- reverse classifier

def test_reverse_half_geometric_on_binary_tree_survives_surely():
    assert classify_reverse_gw(ONE, GeometricRadius(0.5), BINARY).outcome is Outcome.SURVIVAL_AS


def test_reverse_quarter_geometric_on_binary_tree_dies():
    v = classify_reverse_gw(ONE, GeometricRadius(0.25), BINARY)
    assert v.outcome is Outcome.EXTINCTION_AS
    assert v.criterion_value <= 1.0


@pytest.mark.parametrize("offspring", [OffspringLaw.deterministic(1), OffspringLaw([0.3, 0.4, 0.3])])
def test_reverse_critical_or_subcritical_tree_dies(offspring):
    assert classify_reverse_gw(ONE, GeometricRadius(0.9), offspring).outcome is Outcome.EXTINCTION_AS


def test_reverse_verdict_tracks_critical_value():
    rlaw = GeometricRadius(0.5)
    cv = critical_values(ONE, rlaw)
    below = classify_reverse_gw(ONE, rlaw, OffspringLaw.two_point(cv.mc - 0.1))
    between = classify_reverse_gw(ONE, rlaw, OffspringLaw.two_point(0.5 * (cv.mc + cv.Mc)))
    above = classify_reverse_gw(ONE, rlaw, OffspringLaw.two_point(cv.Mc + 0.1))
    assert below.outcome is Outcome.EXTINCTION_AS
    assert between.outcome is Outcome.SURVIVAL_POSITIVE
    assert above.outcome is Outcome.SURVIVAL_AS
