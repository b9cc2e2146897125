from __future__ import annotations

import math

import numpy as np
import pytest

from region_stabilize.bounds import (
    BoundReport,
    McSpec,
    QuadratureSpec,
    assemble_bound,
    c_alpha_s,
    c_power_outer_integral,
    f_alpha,
    g_s,
    G_s,
    kappa_s,
    lattice_mean_value,
    mc_c_alpha_s,
    mc_crep_power,
    mc_f_alpha,
    mc_mean_minimal,
    mc_outer_integrals,
    mc_q_minimal,
    mean_minimal,
    minimal_c_exact,
    outer_integrals,
    q_s,
    rgg_mean_value,
    rgg_weight_power_integral,
    variance_exact_lattice,
)
from region_stabilize.empirics import run_ensemble, variance_mecke_minimal
from region_stabilize.scores import lattice_model, minimal_model, rgg_model

from conftest import within_se


# High-precision reference values, recomputed independently with mpmath at
# 50 digits: the d=2 kernel via the four-corner exponential-integral
# combination, d=3 by one extra mpmath quadrature of that closed form along
# the axis with the largest coordinate, the mean via EulerGamma + log s + E1(s).
C1_D2_S100 = 4.1568705744324153e-6  # y=(0.2,0.5), alpha=1, s=100
C025_D2_S200 = 0.051930200410298813  # y=(0.15,0.4), alpha=0.25, s=200
C1_D2_S1000_TAIL = 2.9777347503352961e-94  # y=(0.3,0.7), alpha=1, s=1000
C1_D3_S50 = 0.0066168717447740991  # y=(0.2,0.4,0.6), alpha=1, s=50
C1_D3_S30 = 0.001929423594515612  # y=(0.3,0.5,0.7), alpha=1, s=30
MEAN_D2_S100 = 5.1823858508896242
MEAN_D2_S1000 = 7.4849709438836699
MEAN_D2_S10000 = 9.7875560368777156

ZETA_P1 = 1.0 / 50.0
BETA_P1 = 1.0 / 36.0


def test_c_kernel_closed_form_d1():
    # d=1 the kernel is (exp(-alpha*s*y) - exp(-alpha*s)) / alpha
    got = c_alpha_s((0.5,), 1.0, 2.0)
    assert math.isclose(got, math.exp(-1.0) - math.exp(-2.0), rel_tol=1e-9)
    for s, alpha, y in [(10.0, 0.5, 0.3), (7.0, 0.25, 0.8)]:
        got = c_alpha_s((y,), alpha, s)
        want = (math.exp(-alpha * s * y) - math.exp(-alpha * s)) / alpha
        assert math.isclose(got, want, rel_tol=1e-9)


def test_c_kernel_at_far_corner_is_zero():
    assert c_alpha_s((1.0, 1.0), 1.0, 5.0) == 0.0
    assert c_alpha_s((1.0, 1.0, 1.0), 0.5, 3.0) == 0.0


def test_c_kernel_reference_values_d2():
    assert math.isclose(c_alpha_s((0.2, 0.5), 1.0, 100.0), C1_D2_S100, rel_tol=1e-7)
    assert math.isclose(c_alpha_s((0.15, 0.4), 0.25, 200.0), C025_D2_S200, rel_tol=1e-7)
    assert math.isclose(minimal_c_exact((0.2, 0.5), 1.0, 100.0), C1_D2_S100, rel_tol=1e-12)
    assert math.isclose(minimal_c_exact((0.15, 0.4), 0.25, 200.0), C025_D2_S200, rel_tol=1e-12)


def test_c_kernel_reference_value_deep_tail():
    # at s=1000 the mass sits in a sliver 94 orders below one; the
    # log-substituted rule has to hold relative accuracy there
    assert math.isclose(
        c_alpha_s((0.3, 0.7), 1.0, 1000.0), C1_D2_S1000_TAIL, rel_tol=1e-6
    )
    assert math.isclose(
        minimal_c_exact((0.3, 0.7), 1.0, 1000.0), C1_D2_S1000_TAIL, rel_tol=1e-12
    )


def test_c_kernel_reference_values_d3():
    assert math.isclose(c_alpha_s((0.2, 0.4, 0.6), 1.0, 50.0), C1_D3_S50, rel_tol=1e-6)
    assert math.isclose(c_alpha_s((0.3, 0.5, 0.7), 1.0, 30.0), C1_D3_S30, rel_tol=1e-6)
    assert math.isclose(minimal_c_exact((0.2, 0.4, 0.6), 1.0, 50.0), C1_D3_S50, rel_tol=1e-9)


def test_c_kernel_scale_identity():
    # c_{alpha,s} = c_{1,alpha*s} / alpha on a 1000-point grid
    rng = np.random.default_rng(41)
    n = 1000
    ys = rng.uniform(0.02, 0.98, size=(n, 2))
    alphas = rng.uniform(0.05, 2.5, size=n)
    ss = rng.uniform(1.0, 300.0, size=n)
    for y, alpha, s in zip(ys, alphas, ss):
        a = c_alpha_s(tuple(y), float(alpha), float(s))
        b = c_alpha_s(tuple(y), 1.0, float(alpha * s)) / float(alpha)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))
    # the halving example
    y = (0.3, 0.6)
    a = c_alpha_s(y, 2.0, 40.0)
    b = 0.5 * c_alpha_s(y, 1.0, 80.0)
    assert math.isclose(a, b, rel_tol=1e-9)


def test_c_kernel_decreases_as_the_corner_moves_up():
    vals = [c_alpha_s((t, t), 1.0, 40.0) for t in (0.05, 0.3, 0.6, 0.95)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_c_kernel_mc_agrees_with_quadrature():
    for y, alpha, s in [((0.2, 0.5), 1.0, 100.0), ((0.3, 0.5, 0.7), 1.0, 30.0)]:
        quad_val = c_alpha_s(y, alpha, s)
        mc_val, se = mc_c_alpha_s(y, alpha, s, mc=McSpec(n_samples=400_000, base_seed=5))
        assert within_se(mc_val, quad_val, se)


def test_c_kernel_mc_path_d4():
    # above the tensor cutoff the kernel itself routes through MC
    y = (0.3, 0.4, 0.5, 0.6)
    val = c_alpha_s(y, 1.0, 10.0, mc=McSpec(n_samples=50_000, base_seed=6))
    direct, se = mc_c_alpha_s(y, 1.0, 10.0, mc=McSpec(n_samples=50_000, base_seed=6))
    assert val == direct
    assert 0.0 < val < 1.0 and se > 0.0


def test_c_bound_envelope_ratio_stays_bounded():
    # ratio of the kernel to alpha^{-1} e^{-alpha s|y|/2} (1+|log(alpha s|y|)|^{d-1}):
    # finite everywhere sampled, and the per-s slice maxima stop growing once
    # s clears 10^3, so extending the s-grid leaves the supremum alone
    rng = np.random.default_rng(42)
    for d in (2, 3):
        ys = [np.full(d, v) for v in (0.1, 0.3, 0.5, 0.7, 0.9)]
        ys += [rng.uniform(0.05, 0.95, d) for _ in range(10)]
        slice_max = []
        for s in (1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6):
            mx = 0.0
            for alpha in (0.25, 1.0, 2.0):
                for y in ys:
                    ay = alpha * s * float(np.prod(y))
                    if ay < 1e-12:
                        continue  # singular log guard
                    c = minimal_c_exact(tuple(y), alpha, s, d)
                    env = (
                        (1.0 / alpha)
                        * math.exp(-0.5 * ay)
                        * (1.0 + abs(math.log(ay)) ** (d - 1))
                    )
                    if env > 0.0:
                        mx = max(mx, c / env)
            assert math.isfinite(mx)
            slice_max.append(mx)
        overall = max(slice_max)
        assert overall == max(slice_max[:4]), f"supremum moved past s=1e3 at d={d}"
        tail = slice_max[3:]
        assert all(a >= b for a, b in zip(tail, tail[1:])), f"tail slices grew at d={d}"


def test_min_product_inequality_exact():
    # |a^y| |b^y| <= |a^b^y| |y| with ^ the coordinatewise minimum
    rng = np.random.default_rng(44)
    a, b, y = rng.uniform(0.0, 1.0, size=(3, 20_000, 2))
    # pair the factors per coordinate so both sides round through the same
    # operation tree; rounding is monotone, so <= survives exactly
    lhs = np.prod(np.minimum(a, y) * np.minimum(b, y), axis=1)
    rhs = np.prod(np.minimum(np.minimum(a, b), y) * y, axis=1)
    assert np.all(lhs <= rhs)


def test_power_vs_shifted_kernel_inequality():
    # c_{1,s}(x)^alpha <= e^{-alpha s|x|} + c_{alpha,s}(x)
    rng = np.random.default_rng(45)
    for _ in range(200):
        x = tuple(rng.uniform(0.05, 0.95, 2))
        alpha = float(rng.uniform(0.05, 0.95))
        s = float(rng.uniform(1.0, 200.0))
        lhs = c_alpha_s(x, 1.0, s) ** alpha
        rhs = math.exp(-alpha * s * x[0] * x[1]) + c_alpha_s(x, alpha, s)
        assert lhs <= rhs * (1.0 + 1e-9) + 1e-15


def test_kappa_examples():
    m = minimal_model(s=2.0, d=2)
    assert kappa_s(m, (0.0, 0.5)) == 1.0
    m10 = minimal_model(s=10.0, d=2)
    assert math.isclose(kappa_s(m10, (0.5, 0.2)), math.exp(-1.0), rel_tol=1e-12)
    lat = lattice_model(window_n=4, s=1.0)
    assert math.isclose(kappa_s(lat, (0, 0)), math.exp(-4.0), rel_tol=1e-12)
    rgg = rgg_model(s=2.0, d=2, rho=0.5)
    u = math.pi * 2.0 * 0.25
    assert math.isclose(kappa_s(rgg, (0.1, 0.1)), math.exp(-u), rel_tol=1e-12)


def test_decay_profile_examples():
    # lattice, p=1: 4 s e^{-4 s / 50}
    lat = lattice_model(window_n=4, s=1.0, p=1.0)
    assert math.isclose(g_s(lat, (0, 0)), 4.0 * math.exp(-4.0 / 50.0), rel_tol=1e-12)
    assert math.isclose(g_s(lat, (0, 0)), 3.69249, rel_tol=1e-5)
    m = minimal_model(s=5.0, d=2)
    assert g_s(m, (1.0, 1.0)) == 0.0
    rgg = rgg_model(s=2.0, d=2, rho=0.5, p=1.0)
    assert g_s(rgg, (1.9, 0.0)) == g_s(rgg, (0.0, 0.0))  # spatially constant


def test_decay_profile_minimal_matches_mc():
    m = minimal_model(s=50.0, d=2, p=1.0)
    quad_val = g_s(m, (0.3, 0.4))
    mc_val, se = mc_c_alpha_s(
        (0.3, 0.4), ZETA_P1, 50.0, mc=McSpec(n_samples=400_000, base_seed=7)
    )
    assert within_se(mc_val, quad_val, se)


def test_moment_envelope_examples():
    m = minimal_model(s=10.0, d=2)
    assert G_s(m, (1.0, 1.0)) == 1.0  # g vanishes, indicator weight
    g = g_s(m, (0.5, 0.5))
    assert G_s(m, (0.5, 0.5)) == 1.0 + g**5
    lat = lattice_model(window_n=4, s=1.0)
    g = 4.0 * math.exp(-4.0 / 50.0)
    assert math.isclose(G_s(lat, (0, 0)), 1.0 + g**5, rel_tol=1e-12)
    rgg = rgg_model(s=4.0, d=2, rho=0.5)
    assert G_s(rgg, (4.5, 0.0)) == 0.0  # outside the weight support


def test_pair_interaction_examples():
    m = minimal_model(s=5.0, d=2)
    assert q_s(m, (1.0, 1.0), (0.5, 0.5)) == 0.0
    a, b = (0.2, 0.6), (0.5, 0.3)
    assert q_s(m, a, b) == q_s(m, b, a)
    # only the coordinatewise maximum enters
    assert q_s(m, a, b) == c_alpha_s((0.5, 0.6), 1.0, 5.0)
    lat = lattice_model(window_n=4, s=0.7)
    w = 4 * 0.7 * math.exp(-4 * 0.7)
    # interaction iff the offset is a sum of two neighbor steps
    assert math.isclose(q_s(lat, (0, 0), (1, 1)), w, rel_tol=1e-12)
    assert math.isclose(q_s(lat, (0, 0), (2, 0)), w, rel_tol=1e-12)
    assert q_s(lat, (0, 0), (1, 0)) == 0.0
    assert q_s(lat, (0, 0), (3, 0)) == 0.0
    rgg = rgg_model(s=2.0, d=2, rho=0.5)
    u = math.pi * 2.0 * 0.25
    assert math.isclose(q_s(rgg, (0.0, 0.0), (0.9, 0.0)), u * math.exp(-u), rel_tol=1e-12)
    assert q_s(rgg, (0.0, 0.0), (1.1, 0.0)) == 0.0


def test_pair_interaction_mc_agrees():
    m = minimal_model(s=100.0, d=2)
    a, b = (0.25, 0.55), (0.45, 0.35)
    exact = q_s(m, a, b)
    est, se = mc_q_minimal(m, a, b, mc=McSpec(n_samples=200_000, base_seed=8))
    assert within_se(est, exact, se)


def test_coupling_field_zero_cases():
    lat0 = lattice_model(window_n=3, weight_fn=lambda pts: np.zeros(np.atleast_2d(pts).shape[0]))
    val = f_alpha(lat0, (0, 0), 0.5)
    assert val == (0.0, 0.0, 0.0, 0.0)
    m = minimal_model(s=100.0, d=2)
    # nothing dominates the far corner, so the incoming component dies
    assert f_alpha(m, (1.0, 1.0), 0.5).incoming == 0.0


def test_coupling_field_lattice_closed_form():
    s, alpha = 0.9, 0.5
    lat = lattice_model(window_n=3, s=s, p=1.0)
    val = f_alpha(lat, (0, 0), alpha)
    g = 4.0 * s * math.exp(-4.0 * s * ZETA_P1)
    base = 1.0 + g**5
    near = s * math.exp(-4.0 * s * alpha) * 4.0 * base
    joint = s * (4.0 * s * math.exp(-4.0 * s)) ** alpha * 9.0 * base
    assert math.isclose(val.incoming, near, rel_tol=1e-12)
    assert math.isclose(val.outgoing, near, rel_tol=1e-12)
    assert math.isclose(val.joint, joint, rel_tol=1e-12)
    assert math.isclose(val.total, 2 * near + joint, rel_tol=1e-12)


def test_coupling_field_quadrature_vs_mc_d2():
    m = minimal_model(s=100.0, d=2, p=1.0)
    x = (0.3, 0.55)
    alpha = 2.0 * BETA_P1
    quad_val = f_alpha(m, x, alpha)
    mc_val, ses = mc_f_alpha(m, x, alpha, mc=McSpec(n_samples=200_000, base_seed=9))
    for name in ("incoming", "outgoing", "joint", "total"):
        assert within_se(getattr(mc_val, name), getattr(quad_val, name), getattr(ses, name)), name


@pytest.mark.slow
def test_coupling_field_quadrature_vs_mc_d3():
    m = minimal_model(s=30.0, d=3, p=1.0)
    x = (0.3, 0.5, 0.6)
    alpha = 2.0 * BETA_P1
    quad_val = f_alpha(m, x, alpha)
    mc_val, ses = mc_f_alpha(m, x, alpha, mc=McSpec(n_samples=100_000, base_seed=13))
    assert within_se(mc_val.total, quad_val.total, ses.total)
    assert within_se(mc_val.joint, quad_val.joint, ses.joint)


def test_mean_minimal_examples():
    assert math.isclose(mean_minimal(1.0, 1), 1.0 - math.exp(-1.0), rel_tol=1e-9)
    assert mean_minimal(1e-6, 2) < 2e-6
    assert math.isclose(mean_minimal(100.0, 2), MEAN_D2_S100, rel_tol=1e-9)
    assert math.isclose(mean_minimal(1000.0, 2), MEAN_D2_S1000, rel_tol=1e-9)
    assert math.isclose(mean_minimal(10000.0, 2), MEAN_D2_S10000, rel_tol=1e-9)


def test_mean_minimal_mc_and_simulation_agree():
    s = 1000.0
    exact = mean_minimal(s, 2)
    est, se = mc_mean_minimal(s, 2, mc=McSpec(n_samples=300_000, base_seed=10))
    assert within_se(est, exact, se)
    out = run_ensemble(minimal_model(s=s, d=2), n_reps=1000, base_seed=60)
    assert within_se(out.mean, exact, out.se_mean)


def test_lattice_moments_closed_form():
    lat = lattice_model(window_n=5, s=1.0)
    mean = lattice_mean_value(lat)
    assert math.isclose(mean, 121.0 * math.exp(-4.0), rel_tol=1e-12)
    var = variance_exact_lattice(lat)
    assert var > 0.0
    out = run_ensemble(lat, n_reps=3000, base_seed=61)
    assert within_se(out.mean, mean, out.se_mean)
    assert within_se(out.var, var, out.se_var)


def test_rgg_weight_power_integrals():
    # d=2 log weight: s * int w^k over the radius-s disc is
    # s * 2 pi s^2 k! / 2^{k+1} after r = s e^{-t}
    model = rgg_model(s=5.0, d=2, rho=0.4)
    for k in (1, 2):
        got = rgg_weight_power_integral(model, k)
        want = 5.0 * 2.0 * math.pi * 25.0 * math.factorial(k) / 2.0 ** (k + 1)
        assert math.isclose(got, want, rel_tol=1e-9), k
    mean = rgg_mean_value(model)
    want = math.exp(-model.ball_mass()) * rgg_weight_power_integral(model, 1)
    assert math.isclose(mean, want, rel_tol=1e-12)


def test_outer_integrals_zero_weight():
    lat0 = lattice_model(window_n=3, weight_fn=lambda pts: np.zeros(np.atleast_2d(pts).shape[0]))
    assert tuple(outer_integrals(lat0)) == (0.0, 0.0, 0.0)


def test_outer_integrals_lattice_kernel_term_tracks_site_count():
    ratios = []
    for n in (5, 10, 20):
        vals = outer_integrals(lattice_model(window_n=n, s=1.0))
        ratios.append(vals.int_kg_G / (2 * n + 1) ** 2)
    assert max(ratios) <= 1.05 * min(ratios)


def test_outer_integrals_quadrature_vs_mc_d2():
    model = minimal_model(s=100.0, d=2, p=1.0)
    quad_vals = outer_integrals(model)
    mc_vals = mc_outer_integrals(model, mc=McSpec(n_samples=200_000, base_seed=11))
    assert within_se(mc_vals.int_f_beta_sq, quad_vals.int_f_beta_sq, mc_vals.se_int_f_beta_sq)
    assert within_se(mc_vals.int_f_2beta, quad_vals.int_f_2beta, mc_vals.se_int_f_2beta)
    assert within_se(mc_vals.int_kg_G, quad_vals.int_kg_G, mc_vals.se_int_kg_G)


@pytest.mark.slow
def test_outer_integrals_quadrature_vs_mc_d3():
    model = minimal_model(s=30.0, d=3, p=1.0)
    quad_vals = outer_integrals(model)
    mc_vals = mc_outer_integrals(model, mc=McSpec(n_samples=100_000, base_seed=12))
    assert within_se(mc_vals.int_f_beta_sq, quad_vals.int_f_beta_sq, mc_vals.se_int_f_beta_sq)
    assert within_se(mc_vals.int_f_2beta, quad_vals.int_f_2beta, mc_vals.se_int_f_2beta)
    assert within_se(mc_vals.int_kg_G, quad_vals.int_kg_G, mc_vals.se_int_kg_G)


def test_kernel_power_integral_matches_multipoint_mc():
    # s int c^i equals the (i+1)-fold integral of the min-product form
    for power in (1, 2):
        quad_val = c_power_outer_integral(1.0, 100.0, 2, power)
        est, se = mc_crep_power(
            1.0, 100.0, 2, power, mc=McSpec(n_samples=400_000, base_seed=14)
        )
        assert within_se(est, quad_val, se), power
    quad_val = c_power_outer_integral(0.25, 60.0, 2, 2)
    est, se = mc_crep_power(0.25, 60.0, 2, 2, mc=McSpec(n_samples=400_000, base_seed=15))
    assert within_se(est, quad_val, se)


@pytest.mark.slow
def test_kernel_power_integral_matches_multipoint_mc_d3():
    for power in (1, 2):
        quad_val = c_power_outer_integral(1.0, 30.0, 3, power)
        est, se = mc_crep_power(
            1.0, 30.0, 3, power, mc=McSpec(n_samples=400_000, base_seed=16)
        )
        assert within_se(est, quad_val, se), power


def test_assemble_bound_examples():
    m = minimal_model(s=10.0, d=2)
    rep = assemble_bound(m, (0.0, 0.0, 0.0), 1.0)
    assert rep.dW_norm == 0.0 and rep.dK_norm == 0.0
    rep = assemble_bound(m, (1.0, 1.0, 1.0), 1.0)
    assert math.isclose(rep.dW_norm, 2.0, rel_tol=1e-12)
    assert math.isclose(rep.dK_norm, 6.0, rel_tol=1e-12)
    with pytest.raises(ValueError):
        assemble_bound(m, (1.0, 1.0, 1.0), 0.0)
    with pytest.raises(ValueError):
        assemble_bound(m, (-1.0, 1.0, 1.0), 1.0)


def test_assembled_sweep_is_finite_and_term_monotone():
    # the g^5 envelope keeps the integral terms growing through desk scales
    # (they are only O(log s) asymptotically), so the sweep checks finiteness
    # and the report's term-monotonicity invariant, not a decreasing trend
    for s in (100.0, 1000.0, 10000.0):
        model = minimal_model(s=s, d=2)
        terms = tuple(outer_integrals(model))
        var = variance_mecke_minimal(s)
        rep = assemble_bound(model, terms, var, var_source="mecke")
        assert math.isfinite(rep.dW_norm) and rep.dW_norm > 0.0
        assert math.isfinite(rep.dK_norm) and rep.dK_norm > 0.0
        for k in range(3):
            bumped = tuple(t * (2.0 if i == k else 1.0) for i, t in enumerate(terms))
            rep_up = assemble_bound(model, bumped, var, var_source="mecke")
            assert rep_up.dW_norm >= rep.dW_norm
            assert rep_up.dK_norm > rep.dK_norm


def test_bound_report_serialization_fields():
    m = minimal_model(s=10.0, d=2)
    rep = assemble_bound(m, (2.0, 3.0, 4.0), 5.0, var_source="supplied")
    blob = rep.to_json_dict()
    for key in (
        "s",
        "d",
        "p",
        "zeta",
        "beta",
        "int_f_beta_sq",
        "int_f_2beta",
        "int_kg_G",
        "var",
        "var_source",
        "dW_norm",
        "dK_norm",
        "se_int_f_beta_sq",
        "se_int_f_2beta",
        "se_int_kg_G",
    ):
        assert key in blob, key
    assert blob["var"] == 5.0
    assert blob["var_source"] == "supplied"
    assert isinstance(rep, BoundReport)


def test_quadrature_and_mc_spec_validation():
    spec = QuadratureSpec(nodes_per_axis=16)
    assert spec.t_upper(10.0) > 0.0
    with pytest.raises(ValueError):
        QuadratureSpec(nodes_per_axis=1)
    with pytest.raises(ValueError):
        McSpec(n_samples=10)
    with pytest.raises(ValueError):
        c_alpha_s((0.5, 0.5), -1.0, 10.0)
    with pytest.raises(ValueError):
        c_alpha_s((0.5, 0.5), 1.0, -10.0)
    with pytest.raises(ValueError):
        f_alpha(minimal_model(s=5.0, d=2), (0.5, 0.5), 0.0)
