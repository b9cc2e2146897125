from __future__ import annotations

import math

import numpy as np
import pytest

from region_stabilize.bounds import McSpec
from region_stabilize.malliavin import (
    diff1,
    diff2,
    distance_bounds_from_terms,
    estimate_main_terms,
    lattice_nonzero_probability,
    verify_dnull,
)
from region_stabilize.pointproc import PointConfiguration, SeedSpec, add, sample_poisson
from region_stabilize.scores import (
    default_intensity,
    lattice_model,
    minimal_model,
    rgg_indicator_weight,
    rgg_model,
    score,
)

from conftest import (
    check_difference_confinement,
    check_first_difference_decomposition,
    random_location,
    sampled_config,
    three_models,
    within_se,
)


def cube_config(points, mults=None):
    return PointConfiguration.from_points(points, mults, dimension=2, space_tag="cube")


def exact_models():
    """Model set with integer-valued scores, so sums compare exactly."""
    models = three_models()
    models["rgg"] = rgg_model(s=3.0, d=2, rho=0.6, weight_fn=rgg_indicator_weight(3.0))
    return models


def test_first_difference_examples():
    m = minimal_model(s=10.0, d=2)
    empty = PointConfiguration.empty(2)
    assert diff1(m, empty, (0.7, 0.2)).value == 1.0
    one = cube_config([(0.5, 0.5)])
    assert diff1(m, one, (0.2, 0.2)).value == 0.0
    assert diff1(m, one, (0.2, 0.9)).value == 1.0
    val = diff1(m, one, (0.2, 0.9))
    assert val.order == 1 and val.at_points == ((0.2, 0.9),)


def test_second_difference_examples():
    m = minimal_model(s=10.0, d=2)
    empty = PointConfiguration.empty(2)
    assert diff2(m, empty, (0.3, 0.3), (0.6, 0.6)).value == -1.0
    assert diff2(m, empty, (0.3, 0.7), (0.7, 0.3)).value == 0.0
    # the second point cannot reach anything the first one senses
    one = cube_config([(0.5, 0.5)])
    assert diff2(m, one, (0.1, 0.8), (0.9, 0.9)).value == 0.0


def test_second_difference_is_symmetric():
    rng = np.random.default_rng(23)
    for model in exact_models().values():
        for i in range(50):
            config = sampled_config(model, i, base_seed=95)
            y1 = random_location(model, rng)
            y2 = random_location(model, rng)
            assert diff2(model, config, y1, y2).value == diff2(model, config, y2, y1).value


def test_second_difference_iterates_the_first():
    rng = np.random.default_rng(29)
    for model in exact_models().values():
        for i in range(50):
            config = sampled_config(model, i, base_seed=96)
            y1 = random_location(model, rng)
            y2 = random_location(model, rng)
            nested = diff1(model, add(config, y2), y1).value - diff1(model, config, y1).value
            assert diff2(model, config, y1, y2).value == nested


def test_confinement_examples():
    m = minimal_model(s=10.0, d=2)
    one = cube_config([(0.5, 0.5)])
    assert verify_dnull(m, one, (0.5, 0.5), (0.9, 0.9), (0.9, 0.9), (0.2, 0.2))
    lat = lattice_model(window_n=6)
    empty = PointConfiguration.empty(2, space_tag="lattice")
    assert verify_dnull(lat, empty, (0, 0), (3, 3), (3, 3), (1, 0))


def test_confinement_property_small():
    for model in three_models().values():
        check_difference_confinement(model, 300)


def test_first_difference_decomposition_small():
    for tag, model in exact_models().items():
        check_first_difference_decomposition(model, 300)
    # float weights reintroduce summation-order rounding, so approximate
    check_first_difference_decomposition(
        three_models()["rgg"], 300, exact=False
    )


def test_difference_of_scores_is_bounded_by_weight():
    rng = np.random.default_rng(31)
    for model in exact_models().values():
        for i in range(100):
            config = sampled_config(model, i, base_seed=97)
            if config.n_entries == 0:
                continue
            y = random_location(model, rng)
            k = int(rng.integers(config.n_entries))
            x = tuple(float(v) for v in config.coords[k])
            grown = add(config, y, 1)
            d_score = score(model, x, grown) - score(model, x, config)
            assert abs(d_score) <= float(model.weight(np.asarray([x]))[0])


def test_zero_weight_model_gives_zero_terms():
    lat = lattice_model(window_n=2, weight_fn=lambda pts: np.zeros(np.atleast_2d(pts).shape[0]))
    terms = estimate_main_terms(lat, mc=McSpec(n_samples=2_000, base_seed=2))
    assert terms.gamma_F == 0.0
    assert terms.bracket_W == 0.0
    assert terms.bracket_K == 0.0
    assert terms.var_F == 0.0
    assert terms.vacuous


def test_lattice_nonzero_probabilities_match_simulation():
    model = lattice_model(window_n=2, s=0.8)
    intensity = default_intensity(model)
    x1, x2 = (0, 0), (1, 1)
    p1_exact = lattice_nonzero_probability(model, x1)
    p2_exact = lattice_nonzero_probability(model, x1, x2)
    n = 4000
    hit1 = 0
    hit2 = 0
    for i in range(n):
        config = sample_poisson(intensity, SeedSpec(47, i))
        hit1 += diff1(model, config, x1).value != 0.0
        hit2 += diff2(model, config, x1, x2).value != 0.0
    assert within_se(hit1 / n, p1_exact, math.sqrt(p1_exact * (1 - p1_exact) / n))
    assert within_se(hit2 / n, p2_exact, math.sqrt(p2_exact * (1 - p2_exact) / n))


def test_main_terms_smoke_minimal():
    model = minimal_model(s=1000.0, d=2)
    terms = estimate_main_terms(model, mc=McSpec(n_samples=100_000, base_seed=3))
    for name in ("gamma_F", "bracket_W", "bracket_K", "var_F", "mean_F"):
        value = getattr(terms, name)
        assert math.isfinite(value) and value > 0.0, name
    for name in ("se_gamma_F", "se_bracket_W", "se_bracket_K", "se_var_F"):
        assert math.isfinite(getattr(terms, name))
    assert terms.q_exponent == 0.5
    assert terms.dk_bound >= 0.0 and terms.dw_bound >= 0.0
    # d=2 grid is 32 cells per axis
    assert len(terms.c_x) == 32 * 32
    assert all(v >= 0.0 for v in terms.c_x.values())


def test_main_terms_reject_small_scale():
    with pytest.raises(ValueError):
        estimate_main_terms(minimal_model(s=0.5, d=2))


def test_distance_bound_assembly_degenerates_to_infinity():
    dw, dk = distance_bounds_from_terms(0.0, 0.0, 0.0, 0.0)
    assert math.isinf(dw) and math.isinf(dk)
    dw, dk = distance_bounds_from_terms(0.0, 0.0, 0.0, 2.0)
    assert dw == 0.0 and dk == 0.0
