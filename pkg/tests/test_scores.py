from __future__ import annotations

import math

import numpy as np
import pytest

from region_stabilize.pointproc import IntensitySpec, PointConfiguration, SeedSpec, add, sample_poisson
from region_stabilize.scores import (
    count_minimal_fast,
    lattice_model,
    minimal_model,
    moment_bound,
    rate,
    region,
    rgg_model,
    score,
    statistic,
)

from conftest import (
    brute_minimal_count,
    check_region_monotone,
    check_restriction_invariance,
    check_score_sandwich,
    three_models,
    within_se,
)


def cube_config(points, mults=None):
    return PointConfiguration.from_points(points, mults, dimension=2, space_tag="cube")


def test_score_examples():
    m = minimal_model(s=10.0, d=2)
    assert score(m, (0.5, 0.5), cube_config([(0.5, 0.5)])) == 1.0
    assert score(m, (0.5, 0.5), cube_config([(0.2, 0.2), (0.5, 0.5)])) == 0.0
    # a coincident duplicate counts as another point below
    assert score(m, (0.3, 0.3), cube_config([(0.3, 0.3)], [2])) == 0.0
    lat = lattice_model(window_n=6)
    occupied = PointConfiguration.from_points(
        [(0, 0), (5, 5)], dimension=2, space_tag="lattice"
    )
    assert score(lat, (0, 0), occupied) == 1.0


def test_score_requires_membership():
    m = minimal_model(s=10.0, d=2)
    with pytest.raises(ValueError):
        score(m, (0.9, 0.9), cube_config([(0.5, 0.5)]))


def test_region_examples():
    m = minimal_model(s=10.0, d=2)
    only = region(m, (0.5, 0.5), cube_config([(0.5, 0.5)]))
    assert only.kind == "box_to_origin" and only.center == (0.5, 0.5)
    blocked = region(m, (0.5, 0.5), cube_config([(0.2, 0.2), (0.5, 0.5)]))
    assert blocked.kind == "empty"
    lat = lattice_model(window_n=6)
    occupied = PointConfiguration.from_points(
        [(0, 0), (5, 5)], dimension=2, space_tag="lattice"
    )
    assert region(lat, (0, 0), occupied).kind == "neighbor_set"


def test_rate_examples():
    m = minimal_model(s=7.0, d=2)
    assert rate(m, (0.5, 0.5), (0.1, 0.1)) == 7.0 * 0.25
    assert rate(m, (0.5, 0.5), (0.6, 0.1)) == math.inf
    lat = lattice_model(window_n=6, s=1.0)
    assert rate(lat, (0, 0), (1, 0)) == 4.0
    assert rate(lat, (0, 0), (2, 0)) == math.inf
    rg = rgg_model(s=4.0, d=2, rho=0.5)
    ball_mass = math.pi * 4.0 * 0.25
    assert rate(rg, (1.0, 1.0), (1.0, 1.3)) == ball_mass
    assert rate(rg, (1.0, 1.0), (3.0, 3.0)) == math.inf


def test_statistic_examples():
    m = minimal_model(s=10.0, d=2)
    assert statistic(m, PointConfiguration.empty(2)).value == 0.0
    antichain = cube_config([(0.1, 0.9), (0.5, 0.5), (0.9, 0.1)])
    assert statistic(m, antichain).value == 3.0
    chain = cube_config([(0.1, 0.1), (0.2, 0.2), (0.3, 0.3)])
    assert statistic(m, chain).value == 1.0
    assert statistic(m, chain).point_count == 3
    assert statistic(m, chain).scored_count == 1


def test_statistic_counts_multiplicity():
    m = minimal_model(s=10.0, d=2)
    config = cube_config([(0.4, 0.6), (0.7, 0.9)], [1, 3])
    value = statistic(m, config)
    assert value.point_count == 4
    # (0.7, 0.9) copies dominate each other and the lower point
    assert value.value == 1.0


def test_statistic_invariant_under_entry_order():
    m = minimal_model(s=10.0, d=2)
    rng = np.random.default_rng(3)
    pts = rng.uniform(size=(40, 2))
    base = statistic(m, cube_config(pts)).value
    for _ in range(10):
        perm = rng.permutation(40)
        assert statistic(m, cube_config(pts[perm])).value == base


def test_count_minimal_fast_examples():
    rng = np.random.default_rng(5)
    for d in (2, 3, 4):
        pts = rng.uniform(size=(200, d))
        assert count_minimal_fast(pts) == brute_minimal_count(pts)
    assert count_minimal_fast(np.tile([0.3, 0.4], (5, 1))) == 0
    assert count_minimal_fast([(0.3, 0.4)]) == 1
    assert count_minimal_fast(np.empty((0, 2))) == 0


def test_count_minimal_fast_handles_ties_and_duplicates():
    # shared coordinates exercise the non-strict dominance tie-breaking
    rng = np.random.default_rng(6)
    for trial in range(60):
        base = rng.integers(0, 6, size=(rng.integers(2, 60), 2)) / 5.0
        pts = np.vstack([base, base[: rng.integers(1, base.shape[0] + 1)]])
        assert count_minimal_fast(pts) == brute_minimal_count(pts), f"trial {trial}"


def test_restriction_invariance_small():
    for model in three_models().values():
        check_restriction_invariance(model, 300)


def test_region_shrinks_under_added_points_small():
    for model in three_models().values():
        check_region_monotone(model, 300)


def test_score_sandwich_small():
    for model in three_models().values():
        check_score_sandwich(model, 300)


def test_region_membership_frequency_matches_rate():
    # P{probe below x lands in the region of x} = exp(-s * |x|) for the cube
    # model: the region is the full box [0, x] exactly when x stays minimal.
    s, x, y = 30.0, (0.5, 0.1), (0.2, 0.05)
    model = minimal_model(s=s, d=2)
    spec = IntensitySpec(space_tag="cube", s=s, d=2)
    n = 5000
    hits = 0
    for i in range(n):
        config = add(sample_poisson(spec, SeedSpec(31, i)), x, 1)
        reg = region(model, x, config)
        hits += bool(reg.contains(np.asarray([y]))[0])
    p = math.exp(-s * x[0] * x[1])
    assert within_se(hits / n, p, math.sqrt(p * (1.0 - p) / n))


def test_moment_bound_per_model():
    assert moment_bound(minimal_model(s=5.0, d=2), (0.4, 0.4)) == 1.0
    lat = lattice_model(window_n=3)
    assert moment_bound(lat, (1, 2)) == 1.0
    assert moment_bound(lat, (9, 9)) == 0.0
    rg = rgg_model(s=8.0, d=2, rho=0.4)
    assert moment_bound(rg, (1.0, 0.0)) == pytest.approx(math.log(8.0))
    assert moment_bound(rg, (9.0, 0.0)) == 0.0
