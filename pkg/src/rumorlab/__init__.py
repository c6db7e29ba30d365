"""Firework and reverse-firework rumor processes on the line and on Galton-Watson trees.

Stations sit at every vertex in random numbers, each with a random radius.
The package classifies survival analytically, simulates both processes with
reproducible counter-based randomness, and estimates survival probabilities
by Monte Carlo with score intervals.
"""
from .criteria_line import (
    IndexedLawFamily,
    Outcome,
    Verdict,
    classify_firework_heterogeneous,
    classify_firework_homogeneous,
    classify_firework_tail_regime,
    classify_reverse_heterogeneous,
    classify_reverse_homogeneous,
    reverse_W,
)
from .criteria_tree import (
    TreeCriteria,
    classify_firework_gw,
    classify_reverse_gw,
    critical_values,
    phi1,
    phi2,
    phi_firework,
)
from .estimator import (
    Estimate,
    OracleSpec,
    Scenario,
    analytic_verdict,
    estimate_annealed,
    estimate_quenched,
    exact_line_oracle,
    quenched_panel,
    run_scenario_panel,
    wilson_interval,
)
from .laws import (
    BernoulliCount,
    DeterministicCount,
    DeterministicRadius,
    DomainError,
    GeometricCount,
    GeometricRadius,
    InverseTailRadius,
    OffspringLaw,
    PmfTable,
    PowerRadius,
    PowerTailCount,
    SlowlyVarying,
    TailTable,
    ThresholdCount,
    UnsupportedError,
    annealed_cdf,
    annealed_tail,
    build_surviving_radius_law,
    build_surviving_station_law,
    check_standing_assumption,
)
from .sim_line import gen_line_env, run_firework_line, run_reverse_line, simulate_line_batch
from .sim_tree import TreeEnvKey, run_firework_tree, run_reverse_tree

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
