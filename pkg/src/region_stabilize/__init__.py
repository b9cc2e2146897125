"""Simulation and verification toolkit for sums of region-stabilizing
scores over Poisson processes.

Three concrete models are provided: minimal points of a Poisson sample in
the unit cube, isolated sites of a multiplicity-marked integer lattice,
and isolated vertices of a random geometric graph.  The package samples
them reproducibly, evaluates add-one-point difference operators exactly,
computes every ingredient of the normal-approximation distance bounds by
quadrature with Monte Carlo cross-checks, and measures empirical
Kolmogorov and Wasserstein distances of the normalized statistic.
"""

from __future__ import annotations

from .bounds import (
    BoundReport,
    FAlpha,
    McSpec,
    OuterIntegrals,
    QuadratureSpec,
    assemble_bound,
    c_alpha_s,
    f_alpha,
    g_s,
    G_s,
    kappa_s,
    lattice_mean_value,
    mean_minimal,
    minimal_c_exact,
    outer_integrals,
    q_s,
    rgg_mean_value,
    rgg_weight_power_integral,
    variance_exact_lattice,
)
from .empirics import (
    EnsembleSummary,
    ScalingFit,
    ks_distance,
    run_ensemble,
    scaling_fit,
    variance_mecke_minimal,
    wasserstein1,
)
from .malliavin import (
    DifferenceValue,
    MainTheoremTerms,
    diff1,
    diff2,
    distance_bounds_from_terms,
    estimate_main_terms,
    lattice_nonzero_probability,
    verify_dnull,
)
from .pointproc import (
    IntensitySpec,
    PointConfiguration,
    SeedSpec,
    add,
    generator_for,
    replicate_seed,
    restrict,
    sample_poisson,
)
from .scores import (
    RegionDescriptor,
    ScoreModel,
    StatisticValue,
    count_minimal_fast,
    default_intensity,
    lattice_model,
    minimal_model,
    moment_bound,
    region,
    rgg_model,
    score,
    statistic,
)

__all__ = [name for name in dir() if not name.startswith("_")]
