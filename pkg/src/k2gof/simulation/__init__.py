"""Replication engine: bootstrap and Monte Carlo nulls, p-values, power studies"""

from k2gof.simulation.power import PowerReport, power_study
from k2gof.simulation.replication import (
    METHODS,
    DistributionComparison,
    NullDistribution,
    compare_distributions,
    critical_value,
    holm_adjust,
    p_value,
    run_replicates,
    simulate_null_mc,
    simulate_null_projected,
    simulate_null_refit,
    simulate_null_rotated,
)
from k2gof.simulation.rng import RngStream

__all__ = [
    "METHODS",
    "DistributionComparison",
    "NullDistribution",
    "PowerReport",
    "RngStream",
    "compare_distributions",
    "critical_value",
    "holm_adjust",
    "p_value",
    "power_study",
    "run_replicates",
    "simulate_null_mc",
    "simulate_null_projected",
    "simulate_null_refit",
    "simulate_null_rotated",
]
