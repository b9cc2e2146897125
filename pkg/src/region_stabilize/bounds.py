"""Numerical evaluation of every ingredient of the Gaussian-approximation
bounds, and their assembly into normalized Wasserstein/Kolmogorov distances.

Ingredient glossary (names say what the quantity does):

* ``c_alpha_s(y)``       expected alpha-damped mass dominating y (minimal model
                         kernel; every other ingredient of that model reduces
                         to it),
* ``kappa_s``            probability that a single inserted point scores,
* ``g_s``                expected zeta-damped mass of centers whose region can
                         cover a location,
* ``G_s``                moment envelope max(M^2, M^4) * (1 + g^5),
* ``q_s``                expected mass of centers whose region covers two given
                         locations jointly,
* ``f_alpha``            G-weighted region-coupling field (three components),
* ``outer_integrals``    the three integrated terms entering the distance
                         bounds.

Numerical tiers:

* tier A - composite tensor Gauss-Legendre after the substitution
  x_i = exp(-t_i), used for c-type integrals up to dimension 3 with a 1e-9
  relative target;
* tier B - a uniform lattice in the same t coordinates where cumulative
  trapezoid sums yield every nested prefix/suffix integral in one pass; used
  for the f fields and outer integrals (cross-checked against Monte Carlo);
* Monte Carlo with reported standard errors for dimensions above the tensor
  cutoff and as an independent oracle everywhere else.

All reductions use numpy summation (pairwise tree order), so results do not
depend on evaluation order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import exp1

from .pointproc import SeedSpec, generator_for
from .quadrature import (
    PANEL_LEN,
    PANEL_ORDER,
    cumtrapz_along,
    em_trapezoid_weights,
    gauss_legendre_panels,
    log_axis_rule,
    mc_mean_se,
    tail_truncation,
    uniform_samples,
)
from .scores import (
    NEIGHBOR_OFFSETS,
    NEIGHBOR_OFFSETS_2,
    ScoreModel,
    moment_bound,
    unit_ball_volume,
)

EULER_GAMMA = 0.5772156649015328606

__all__ = [
    "QuadratureSpec",
    "McSpec",
    "FAlpha",
    "OuterIntegrals",
    "BoundReport",
    "exp_deficit_integral",
    "minimal_c_exact",
    "c_alpha_s",
    "kappa_s",
    "g_s",
    "G_s",
    "q_s",
    "f_alpha",
    "mean_minimal",
    "outer_integrals",
    "assemble_bound",
    "c_power_outer_integral",
    "lattice_mean_value",
    "variance_exact_lattice",
    "rgg_mean_value",
    "rgg_weight_power_integral",
    "rgg_max_weight_integral",
    "mc_c_alpha_s",
    "mc_crep_power",
    "mc_q_minimal",
    "mc_mean_minimal",
    "mc_f_alpha",
    "mc_outer_integrals",
]


# -- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """Knobs of the deterministic integrators.

    truncation: upper limit of each substituted axis; None picks the
    analytic default log(scale) + 45, which puts the neglected tail around
    exp(-45), far below the 1e-12 design margin.  max_dim_tensor: largest
    dimension evaluated by tensor quadrature before falling back to Monte
    Carlo.
    """

    nodes_per_axis: int = 64
    truncation: float | None = None
    max_dim_tensor: int = 3

    def __post_init__(self) -> None:
        if self.nodes_per_axis < 2:
            raise ValueError(f"nodes_per_axis must be >= 2, got {self.nodes_per_axis}")
        if self.truncation is not None and self.truncation <= 0:
            raise ValueError(f"truncation must be positive, got {self.truncation}")
        if self.max_dim_tensor < 1:
            raise ValueError("max_dim_tensor must be >= 1")

    def t_upper(self, scale: float) -> float:
        """Resolved axis limit for an integrand concentrated at t ~ log(scale)."""
        if self.truncation is not None:
            return self.truncation
        return tail_truncation(scale)


@dataclass(frozen=True)
class McSpec:
    """Knobs of the Monte Carlo estimators (sample count, seed, stratification)."""

    n_samples: int = 1_000_000
    base_seed: int = 0
    stratification: bool = True

    def __post_init__(self) -> None:
        if self.n_samples < 1_000:
            raise ValueError(f"n_samples must be >= 1000, got {self.n_samples}")

    def rng(self, stream: int = 0) -> np.random.Generator:
        return generator_for(SeedSpec(base_seed=self.base_seed, replicate_index=stream))


class FAlpha(NamedTuple):
    """Value of the coupling field f_alpha and its three components.

    incoming: centers whose region can cover the probe location;
    outgoing:  locations the probe's own region can cover;
    joint:     pairs covered together through a third center's region.
    """

    total: float
    incoming: float
    outgoing: float
    joint: float


@dataclass(frozen=True)
class OuterIntegrals:
    """The three integrated bound terms with standard errors and provenance.

    kind_* is "value" when every ingredient of the term is an exact
    probability/expectation, "bound" when an upper-bound ingredient (rgg
    score probability, lattice/rgg joint-coverage) enters the integrand.
    """

    int_f_beta_sq: float
    int_f_2beta: float
    int_kg_G: float
    se_int_f_beta_sq: float = 0.0
    se_int_f_2beta: float = 0.0
    se_int_kg_G: float = 0.0
    kind_int_f_beta_sq: str = "value"
    kind_int_f_2beta: str = "value"
    kind_int_kg_G: str = "value"

    def __iter__(self):
        return iter((self.int_f_beta_sq, self.int_f_2beta, self.int_kg_G))


@dataclass(frozen=True)
class BoundReport:
    """Flat record of one assembled distance bound (C = 1 normalization).

    The unspecified theory constant is carried symbolically: dW_norm and
    dK_norm are the bracketed expressions only, which is why rates and
    monotonicity are the testable content, never absolute values.
    """

    s: float
    d: int
    p: float
    zeta: float
    beta: float
    int_f_beta_sq: float
    int_f_2beta: float
    int_kg_G: float
    var: float
    var_source: str
    dW_norm: float
    dK_norm: float
    se_int_f_beta_sq: float = 0.0
    se_int_f_2beta: float = 0.0
    se_int_kg_G: float = 0.0
    kind_int_f_beta_sq: str = "value"
    kind_int_f_2beta: str = "value"
    kind_int_kg_G: str = "value"

    def to_json_dict(self) -> dict:
        out = {}
        for name in (
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
            "kind_int_f_beta_sq",
            "kind_int_f_2beta",
            "kind_int_kg_G",
        ):
            out[name] = getattr(self, name)
        return out


_DEFAULT_QUAD = QuadratureSpec()
_DEFAULT_MC = McSpec()


# -- closed forms for the minimal-model kernel -------------------------------


def exp_deficit_integral(z):
    """phi(z) = integral_0^z (1 - exp(-u))/u du, elementwise.

    Equals EulerGamma + log z + E1(z) for z > 0; a series is used near zero
    where that expression cancels catastrophically.
    """
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    small = (z > 0) & (z < 1e-3)
    big = z >= 1e-3
    if np.any(small):
        u = z[small]
        # alternating series sum_k (-1)^(k+1) z^k / (k * k!), five terms
        out[small] = u * (1 - u * (1 / 4 - u * (1 / 18 - u * (1 / 96 - u / 600))))
    if np.any(big):
        u = z[big]
        out[big] = EULER_GAMMA + np.log(u) + exp1(u)
    if out.ndim == 0:
        return float(out)
    return out


def _phi_box_d2(scale, y1, y2):
    """scale * integral over [y1,1]x[y2,1] of exp(-scale*u*v) d(u,v).

    Inclusion-exclusion over the four corners.  The gamma and log parts of
    phi cancel exactly in the four-term combination, so it is evaluated
    with E1 alone: the answer decays like exp(-scale*y1*y2), and the E1
    form keeps full accuracy at that scale where differencing the
    O(log scale) phi values would lose every significant digit.  Corners
    with a zero argument keep the phi form, where they simply drop out.
    Broadcasts over all three arguments.
    """
    scale, y1, y2 = np.broadcast_arrays(
        np.asarray(scale, dtype=float),
        np.asarray(y1, dtype=float),
        np.asarray(y2, dtype=float),
    )
    scalar = scale.ndim == 0
    scale, y1, y2 = np.atleast_1d(scale, y1, y2)
    out = np.empty(scale.shape)
    inner = (y1 > 0) & (y2 > 0)
    if np.any(inner):
        sc, u, v = scale[inner], y1[inner], y2[inner]
        out[inner] = exp1(sc) - exp1(sc * u) - exp1(sc * v) + exp1(sc * u * v)
    if not np.all(inner):
        phi = exp_deficit_integral
        sc, u, v = scale[~inner], y1[~inner], y2[~inner]
        out[~inner] = phi(sc) - phi(sc * u) - phi(sc * v) + phi(sc * u * v)
    out = np.maximum(out, 0.0)
    if scalar:
        return float(out[0])
    return out


def minimal_c_exact(y, alpha: float, s: float, d: int | None = None) -> float:
    """Reference value of c_alpha_s, independent of the tensor quadrature.

    d=1 and d=2 are closed forms; d=3 reduces to a one-dimensional integral
    of the d=2 closed form along the axis with the shortest range.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    y = np.asarray(y, dtype=float).reshape(-1)
    if d is None:
        d = y.size
    if y.size != d:
        raise ValueError(f"point has {y.size} coordinates, expected {d}")
    scale = alpha * s
    if d == 1:
        # exp(-a*y) - exp(-a) written to stay accurate when both shrink alike
        return float(-np.exp(-scale * y[0]) * np.expm1(-scale * (1.0 - y[0])) / alpha)
    if d == 2:
        return float(_phi_box_d2(scale, y[0], y[1])) / alpha
    if d == 3:
        # reduce along the axis with the largest coordinate (shortest range)
        k = int(np.argmax(y))
        rest = np.delete(y, k)
        t_hi = min(-math.log(max(y[k], 1e-300)), tail_truncation(scale))
        if t_hi <= 0:
            return 0.0
        n_panels = max(int(math.ceil(t_hi / PANEL_LEN)), 2)
        t, wt = gauss_legendre_panels(0.0, t_hi, n_panels, PANEL_ORDER)
        inner = _phi_box_d2(scale * np.exp(-t), rest[0], rest[1])
        return float(np.sum(wt * inner)) / alpha
    raise ValueError("exact reference is available for d <= 3 only")


# -- tier A: tensor Gauss-Legendre for c-type integrals ----------------------


def _validate_cube_point(y, d: int | None):
    y = np.asarray(y, dtype=float).reshape(-1)
    if d is None:
        d = y.size
    if y.size != d:
        raise ValueError(f"point has {y.size} coordinates, expected {d}")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("point must lie in the unit cube")
    return y, d


def c_alpha_s(
    y,
    alpha: float,
    s: float,
    d: int | None = None,
    quad: QuadratureSpec | None = None,
    mc: McSpec | None = None,
) -> float:
    """Expected alpha-damped mass dominating y: s * int_{x >= y} e^{-alpha*s*|x|} dx.

    |x| is the coordinate product.  Tensor Gauss-Legendre in t = -log x up
    to max_dim_tensor dimensions; Monte Carlo beyond (see mc_c_alpha_s for
    the standard error).
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    y, d = _validate_cube_point(y, d)
    quad = quad or _DEFAULT_QUAD
    if d > quad.max_dim_tensor:
        val, _ = mc_c_alpha_s(y, alpha, s, d, mc or _DEFAULT_MC)
        return val
    t_max = quad.t_upper(alpha * s)
    limits = np.minimum(-np.log(np.maximum(y, math.exp(-t_max))), t_max)
    if np.any(limits <= 0):
        return 0.0
    rules = [log_axis_rule(float(L), min_nodes=quad.nodes_per_axis) for L in limits]
    scale = alpha * s
    if d == 1:
        x, w = rules[0]
        return float(s * np.sum(w * np.exp(-scale * x)))
    if d == 2:
        (x1, w1), (x2, w2) = rules
        prod = np.outer(x1, x2)
        return float(s * np.sum(np.outer(w1, w2) * np.exp(-scale * prod)))
    (x1, w1), (x2, w2), (x3, w3) = rules
    prod12 = np.outer(x1, x2)
    w12 = np.outer(w1, w2)
    acc = 0.0
    for xk, wk in zip(x3, w3):
        acc += wk * np.sum(w12 * np.exp(-scale * (prod12 * xk)))
    return float(s * acc)


def mc_c_alpha_s(y, alpha: float, s: float, d: int | None = None, mc: McSpec | None = None):
    """Monte Carlo companion of c_alpha_s: (value, standard error).

    Importance sampling draws each axis log-uniformly over [y_i, 1], which
    keeps the integrand bounded after the change of variables.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    y, d = _validate_cube_point(y, d)
    mc = mc or _DEFAULT_MC
    t_max = tail_truncation(alpha * s)
    limits = np.minimum(-np.log(np.maximum(y, math.exp(-t_max))), t_max)
    if np.any(limits <= 0):
        return 0.0, 0.0
    rng = mc.rng()
    t = uniform_samples(rng, mc.n_samples, d, mc.stratification) * limits
    log_density = -t.sum(axis=1)
    vals = s * float(np.prod(limits)) * np.exp(log_density - alpha * s * np.exp(log_density))
    return mc_mean_se(vals)


# -- per-model closed-form ingredients ---------------------------------------


def kappa_s(model: ScoreModel, x) -> float:
    """Probability that one point inserted at x scores.

    Exact for the minimal and lattice models; the rgg value is the standard
    upper bound exp(-ball mass) (exact wherever the weight is positive) and
    is tagged "bound" in reports.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if model.model_tag == "minimal":
        return float(np.exp(-model.s * np.prod(x)))
    if model.model_tag == "lattice_isolated":
        return float(np.exp(-4.0 * model.s))
    return float(np.exp(-model.ball_mass()))


def g_s(model: ScoreModel, y, quad: QuadratureSpec | None = None) -> float:
    """Expected zeta-damped mass of centers whose region can cover y."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if model.model_tag == "minimal":
        return c_alpha_s(y, model.zeta, model.s, model.d, quad)
    if model.model_tag == "lattice_isolated":
        return float(4.0 * model.s * np.exp(-4.0 * model.s * model.zeta))
    u = model.ball_mass()
    return float(u * np.exp(-model.zeta * u))


def G_s(model: ScoreModel, y, quad: QuadratureSpec | None = None) -> float:
    """Moment envelope max(M^2, M^4) * (1 + g^5) at y."""
    y = np.asarray(y, dtype=float).reshape(-1)
    m = moment_bound(model, y)
    g = g_s(model, y, quad)
    return float(max(m**2, m**4) * (1.0 + g**5))


def q_s(model: ScoreModel, x1, x2, quad: QuadratureSpec | None = None) -> float:
    """Expected mass of centers whose region covers x1 and x2 jointly.

    Equality for the minimal model (it reduces to c_{1,s} at the
    coordinatewise maximum); the lattice/rgg returns are the standard upper
    bounds with the exact interaction cutoffs, tagged "bound" in reports.
    """
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    if model.model_tag == "minimal":
        return c_alpha_s(np.maximum(x1, x2), 1.0, model.s, model.d, quad)
    if model.model_tag == "lattice_isolated":
        diff = x2 - x1
        hit = any(diff[0] == off[0] and diff[1] == off[1] for off in NEIGHBOR_OFFSETS_2)
        return float(4.0 * model.s * np.exp(-4.0 * model.s)) if hit else 0.0
    u = model.ball_mass()
    if float(np.linalg.norm(x2 - x1)) <= 2.0 * model.rho:
        return float(u * np.exp(-u))
    return 0.0


def mc_q_minimal(model: ScoreModel, x1, x2, mc: McSpec | None = None):
    """Monte Carlo oracle for the minimal-model q_s: (value, standard error).

    Samples the third center z uniformly; the probability that z's region
    covers both arguments is the exact indicator-times-exponential, so the
    only randomness is in z.
    """
    if model.model_tag != "minimal":
        raise ValueError("this oracle is specific to the minimal model")
    mc = mc or _DEFAULT_MC
    m = np.maximum(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)).reshape(-1)
    rng = mc.rng()
    z = uniform_samples(rng, mc.n_samples, model.d, mc.stratification)
    covers = np.all(z >= m, axis=1)
    vals = model.s * covers * np.exp(-model.s * np.prod(z, axis=1))
    return mc_mean_se(vals)


# -- tier B: lattice fields for the minimal model ----------------------------


_GRID_CELL_BUDGET = 4_000_000


def _lattice_per_axis(nodes_per_axis: int, d: int, budget: int = _GRID_CELL_BUDGET) -> int:
    """Axis sample count for the shared t-lattice.

    4*nodes+1 across all dimensions, capped so the full tensor grid stays
    inside a fixed cell budget (the cap only binds at d=3, where it holds
    the bundle near a hundred MB instead of past a GB).
    """
    per_axis = 4 * nodes_per_axis + 1
    cap = int(budget ** (1.0 / d))
    if per_axis > cap:
        per_axis = cap if cap % 2 == 1 else cap - 1
    return per_axis


def _axis_with_insert(t_max: float, n_nodes: int, insert: float | None):
    """Uniform t-axis 0..t_max, optionally with one extra node placed exactly.

    Returns (t, index-of-insert-or-None).  Keeping the probe point on the
    lattice makes the per-point field reads exact in the grid sense instead
    of snapping to the nearest node.
    """
    t = np.linspace(0.0, t_max, n_nodes)
    if insert is None:
        return t, None
    ti = min(max(float(insert), 0.0), t_max)
    k = int(np.searchsorted(t, ti))
    if k < t.size and abs(float(t[k]) - ti) < 1e-12:
        return t, k
    t = np.insert(t, k, ti)
    return t, k


def _broadcast_sum(axes: list[np.ndarray]) -> np.ndarray:
    d = len(axes)
    total = np.zeros(tuple(t.size for t in axes))
    for i, t in enumerate(axes):
        total = total + t.reshape((1,) * i + (-1,) + (1,) * (d - 1 - i))
    return total


def _minimal_field_bundle(
    s: float,
    d: int,
    zeta: float,
    quad: QuadratureSpec,
    alphas: tuple[float, ...],
    insert_t: tuple[float, ...] | None = None,
):
    """Shared t-lattice with the c grids, G grid and f-component fields.

    Fields are indexed by the lattice: entry [i, j, ...] is the field value
    at the location x = (exp(-t_i), exp(-t_j), ...).  d=2 uses the closed
    form for the c grids; d=3 obtains them from the same lattice with
    cumulative trapezoid prefix sums.
    """
    if d > 3:
        raise ValueError("lattice fields are limited to d <= 3")
    t_max = quad.t_upper(s)
    per_axis = _lattice_per_axis(quad.nodes_per_axis, d)
    axes = []
    marks = []
    for i in range(d):
        ins = None if insert_t is None else insert_t[i]
        t, k = _axis_with_insert(t_max, per_axis, ins)
        axes.append(t)
        marks.append(k)
    sum_t = _broadcast_sum(axes)
    E = np.exp(-sum_t)  # coordinate product |x|; also the Jacobian density
    del sum_t

    def c_grid(alpha: float, exact_tail: bool = False) -> np.ndarray:
        if d == 1:
            x1 = np.exp(-axes[0])
            return -np.exp(-alpha * s * x1) * np.expm1(-alpha * s * (1.0 - x1)) / alpha
        if d == 2:
            x1 = np.exp(-axes[0])[:, None]
            x2 = np.exp(-axes[1])[None, :]
            return _phi_box_d2(alpha * s, x1, x2) / alpha
        kernel = np.exp(-alpha * s * E) * E
        for ax in range(d):
            kernel = cumtrapz_along(kernel, axes[ax], ax, corrected=True)
        # nonnegative integral; the slope correction can overshoot below
        # zero at the far corner where the value underflows
        out = s * np.maximum(kernel, 0.0)
        if exact_tail:
            # prefix sums lose all relative accuracy once the value decays
            # below their error floor, and fractional powers re-inflate
            # that region; the affected corner holds few lattice points,
            # so those are recomputed pointwise
            deep = alpha * s * E > 2.0
            if np.any(deep):
                idx = np.argwhere(deep)
                pts = np.exp(-np.stack([axes[a][idx[:, a]] for a in range(d)], axis=1))
                out[deep] = _c_exact_points(pts, alpha, s, d)
        return out

    c_zeta = c_grid(zeta)
    G = 1.0 + c_zeta**5
    c_one = c_grid(1.0, exact_tail=True)
    GJ = G * E

    def prefix_all(arr: np.ndarray) -> np.ndarray:
        for ax in range(d):
            arr = cumtrapz_along(arr, axes[ax], ax, corrected=True)
        return arr

    def suffix_over(arr: np.ndarray, which) -> np.ndarray:
        for ax in which:
            arr = cumtrapz_along(arr, axes[ax], ax, reverse=True, corrected=True)
        return arr

    suffix_GJ = suffix_over(GJ, range(d))
    fields: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for alpha in alphas:
        f1 = s * prefix_all(G * np.exp(-alpha * s * E) * E)
        f2 = s * np.exp(-alpha * s * E) * suffix_GJ
        c1a = c_one**alpha
        # c1a vanishes like t**alpha into each t=0 face (no point of the
        # cube sits above the matching unit-coordinate corner), so the
        # prefix sums over it need the singular-head rule to converge
        # past O(h^(1+alpha))
        f3 = np.zeros_like(E)
        for r in range(d + 1):
            for subset in combinations(range(d), r):
                term = GJ if not subset else suffix_over(GJ, subset)
                term = c1a * term
                for ax in range(d):
                    if ax not in subset:
                        term = cumtrapz_along(
                            term, axes[ax], ax, corrected=True, head_power=alpha
                        )
                f3 += term
        f3 *= s
        fields[alpha] = (f1, f2, f3)
    return {
        "axes": axes,
        "marks": marks,
        "E": E,
        "c_zeta": c_zeta,
        "c_one": c_one,
        "G": G,
        "fields": fields,
        "t_max": t_max,
    }


def _outer_weights(
    axes: list[np.ndarray], E: np.ndarray, head_power: float | None = None
) -> np.ndarray:
    """End-corrected trapezoid weights of the outer integral, Jacobian included.

    head_power marks integrands with an algebraic cusp into each t=0 face,
    matching the joint coupling component.
    """
    d = len(axes)
    w = np.ones(())
    for i, t in enumerate(axes):
        wt = em_trapezoid_weights(t, head_power=head_power)
        w = w * wt.reshape((1,) * i + (-1,) + (1,) * (d - 1 - i))
    return w * E


def f_alpha(
    model: ScoreModel,
    y,
    alpha: float,
    quad: QuadratureSpec | None = None,
    mc: McSpec | None = None,
) -> FAlpha:
    """G-weighted coupling field at y: total plus its three components."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    quad = quad or _DEFAULT_QUAD
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != model.d:
        raise ValueError(f"point has {y.size} coordinates, expected {model.d}")
    if model.model_tag == "minimal":
        if model.d > quad.max_dim_tensor:
            vals, _ = mc_f_alpha(model, y, alpha, mc or _DEFAULT_MC)
            return vals
        t_max = tail_truncation(model.s)
        insert = tuple(
            min(-math.log(max(float(c), math.exp(-t_max))), t_max) for c in y
        )
        bundle = _minimal_field_bundle(
            model.s, model.d, model.zeta, quad, (alpha,), insert_t=insert
        )
        idx = tuple(bundle["marks"])
        f1, f2, f3 = (float(f[idx]) for f in bundle["fields"][alpha])
        return FAlpha(total=f1 + f2 + f3, incoming=f1, outgoing=f2, joint=f3)
    if model.model_tag == "lattice_isolated":
        s = model.s
        g = g_s(model, y)
        base = 1.0 + g**5

        def env_sum(offsets) -> float:
            pts = np.asarray(y)[None, :] + np.asarray(offsets, dtype=float)
            w = model.weight(pts)
            return float(np.sum(np.maximum(w**2, w**4))) * base

        near = s * math.exp(-4.0 * s * alpha) * env_sum(NEIGHBOR_OFFSETS)
        joint = s * (4.0 * s * math.exp(-4.0 * s)) ** alpha * env_sum(NEIGHBOR_OFFSETS_2)
        return FAlpha(total=2.0 * near + joint, incoming=near, outgoing=near, joint=joint)
    # rgg: radial inner integrals of the weight envelope over balls
    s = model.s
    u = model.ball_mass()
    g = u * math.exp(-model.zeta * u)
    base = 1.0 + g**5
    radius = float(np.linalg.norm(y))
    if model.d <= 3:
        near_mass = _rgg_ball_envelope_integral(model, radius, model.rho)
        joint_mass = _rgg_ball_envelope_integral(model, radius, 2.0 * model.rho)
    else:
        mc = mc or _DEFAULT_MC
        near_mass = _mc_ball_envelope(model, y, model.rho, mc.rng(11), mc.n_samples)
        joint_mass = _mc_ball_envelope(model, y, 2.0 * model.rho, mc.rng(12), mc.n_samples)
    near = s * math.exp(-alpha * u) * base * near_mass
    joint = s * (u * math.exp(-u)) ** alpha * base * joint_mass
    return FAlpha(total=2.0 * near + joint, incoming=near, outgoing=near, joint=joint)


def _mc_ball_envelope(
    model: ScoreModel, center, radius: float, rng: np.random.Generator, n: int
) -> float:
    """Monte Carlo mass of max(w^2, w^4) over a ball, any dimension."""
    d = model.d
    dirs = rng.normal(size=(n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rr = radius * rng.random(n) ** (1.0 / d)
    pts = np.asarray(center, dtype=float)[None, :] + dirs * rr[:, None]
    vol = unit_ball_volume(d) * radius**d
    return float(vol * np.mean(_envelope_at(model, pts)))


def mc_f_alpha(model: ScoreModel, y, alpha: float, mc: McSpec | None = None):
    """Monte Carlo oracle for the minimal-model f_alpha: (values, standard errors).

    Uses the closed-form c kernel, so it shares nothing with the lattice
    fields beyond the integrand definition.
    """
    if model.model_tag != "minimal":
        raise ValueError("the Monte Carlo field oracle covers the minimal model")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    mc = mc or _DEFAULT_MC
    s, d = model.s, model.d
    y = np.asarray(y, dtype=float).reshape(-1)
    n = mc.n_samples if d <= 3 else min(mc.n_samples, 20_000)
    # uniform draws on the sub-boxes keep the importance weights constant,
    # which the heavy G envelope requires for usable variance
    base = uniform_samples(mc.rng(1), n, d, mc.stratification)
    x_up = y[None, :] + base * (1.0 - y)[None, :]
    x_dn = uniform_samples(mc.rng(2), n, d, mc.stratification) * y[None, :]
    x_all = uniform_samples(mc.rng(3), n, d, mc.stratification)
    vol_up = float(np.prod(1.0 - y))
    vol_dn = float(np.prod(y))
    prod_y = float(np.prod(y))

    def c_at(pts: np.ndarray, a: float) -> np.ndarray:
        if d <= 3:
            return _c_exact_points(pts, a, s, d)
        # nested estimate; the smoothing bias of the fractional powers is
        # quadratic in the inner standard error, far below the outer one
        return _c_mc_points(pts, a, s, d, mc.rng(21))

    g_of = lambda pts: 1.0 + c_at(pts, model.zeta) ** 5
    f1_vals = s * vol_up * g_of(x_up) * np.exp(-alpha * s * np.prod(x_up, axis=1))
    f2_vals = s * vol_dn * math.exp(-alpha * s * prod_y) * g_of(x_dn)
    f3_vals = s * g_of(x_all) * c_at(np.maximum(x_all, y[None, :]), 1.0) ** alpha
    stats = [mc_mean_se(v) for v in (f1_vals, f2_vals, f3_vals)]
    vals = FAlpha(
        total=sum(m for m, _ in stats),
        incoming=stats[0][0],
        outgoing=stats[1][0],
        joint=stats[2][0],
    )
    ses = FAlpha(
        total=math.sqrt(sum(se**2 for _, se in stats)),
        incoming=stats[0][1],
        outgoing=stats[1][1],
        joint=stats[2][1],
    )
    return vals, ses


def _c_mc_points(
    pts: np.ndarray,
    alpha: float,
    s: float,
    d: int,
    rng: np.random.Generator,
    inner: int = 512,
) -> np.ndarray:
    """Plain Monte Carlo c values at many points (d >= 4 fallback), chunked."""
    pts = np.atleast_2d(pts)
    out = np.empty(pts.shape[0])
    chunk = max(1, 2_000_000 // (inner * d))
    for lo in range(0, pts.shape[0], chunk):
        block = pts[lo : lo + chunk]
        z = rng.random((block.shape[0], inner, d))
        z = block[:, None, :] + z * (1.0 - block[:, None, :])
        box_vol = np.prod(1.0 - block, axis=1)
        vals = np.exp(-alpha * s * np.prod(z, axis=2))
        out[lo : lo + block.shape[0]] = s * box_vol * np.mean(vals, axis=1)
    return out


def _c_exact_points(pts: np.ndarray, alpha: float, s: float, d: int) -> np.ndarray:
    """Vectorized closed-form c over rows of pts (d <= 3).

    d=3 reduces each row to a one-dimensional integral of the d=2 closed
    form along its largest coordinate, with a Gauss-Legendre rule shared
    across the batch and chunking to cap the working set.
    """
    pts = np.atleast_2d(pts)
    scale = alpha * s
    if d == 1:
        return -np.exp(-scale * pts[:, 0]) * np.expm1(-scale * (1.0 - pts[:, 0])) / alpha
    if d == 2:
        return _phi_box_d2(scale, pts[:, 0], pts[:, 1]) / alpha
    order = np.argsort(pts, axis=1)
    y_hi = np.take_along_axis(pts, order[:, 2:3], axis=1)[:, 0]
    rest = np.take_along_axis(pts, order[:, :2], axis=1)
    t_cap = tail_truncation(scale)
    t_hi = np.minimum(-np.log(np.maximum(y_hi, math.exp(-t_cap))), t_cap)
    out = np.zeros(pts.shape[0])
    live = t_hi > 0
    if not np.any(live):
        return out
    # panel count per row from its own range, rounded up to a power of two
    # so the batch splits into a handful of equal-rule groups
    need = np.maximum(np.ceil(t_hi / PANEL_LEN), 2.0)
    need = (2 ** np.ceil(np.log2(need))).astype(int)
    for n_panels in np.unique(need[live]):
        rows = np.flatnonzero(live & (need == n_panels))
        sig, wsig = gauss_legendre_panels(0.0, 1.0, int(n_panels), PANEL_ORDER)
        chunk = max(1, 8_000_000 // sig.size)
        for lo in range(0, rows.size, chunk):
            idx = rows[lo : lo + chunk]
            rng_t = t_hi[idx][:, None]
            tau = rng_t * sig[None, :]
            inner = _phi_box_d2(scale * np.exp(-tau), rest[idx, 0:1], rest[idx, 1:2])
            out[idx] = (rng_t[:, 0] * (inner @ wsig)) / alpha
    return out


def mean_minimal(s: float, d: int, quad: QuadratureSpec | None = None) -> float:
    """Expected count of score-1 points in the minimal model: s * int e^{-s|x|} dx."""
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    return c_alpha_s(np.zeros(d), 1.0, s, d, quad)


def mc_mean_minimal(s: float, d: int, mc: McSpec | None = None):
    """Monte Carlo companion of mean_minimal: (value, standard error)."""
    return mc_c_alpha_s(np.zeros(d), 1.0, s, d, mc)


# -- outer integrals ----------------------------------------------------------


def outer_integrals(
    model: ScoreModel,
    quad: QuadratureSpec | None = None,
    mc: McSpec | None = None,
) -> OuterIntegrals:
    """The three integrated bound terms for one model.

    minimal: lattice fields integrated over the cube (deterministic);
    lattice: exact finite sums over the weight window;
    rgg: exact convolution identities for the second and third terms and a
    radial nested quadrature for the first.
    """
    quad = quad or _DEFAULT_QUAD
    if model.model_tag == "minimal":
        return _outer_minimal(model, quad, mc)
    if model.model_tag == "lattice_isolated":
        return _outer_lattice(model)
    return _outer_rgg(model, quad, mc)


def _outer_minimal(model: ScoreModel, quad: QuadratureSpec, mc: McSpec | None) -> OuterIntegrals:
    s, d = model.s, model.d
    if d > quad.max_dim_tensor:
        return mc_outer_integrals(model, mc or _DEFAULT_MC)
    beta = model.beta
    bundle = _minimal_field_bundle(s, d, model.zeta, quad, (beta, 2.0 * beta))
    axes, E = bundle["axes"], bundle["E"]
    f_beta = sum(bundle["fields"][beta])
    f_2beta = sum(bundle["fields"][2.0 * beta])
    # the joint component gives each integrand a t**alpha cusp into the
    # t=0 faces, with alpha matching the field's own exponent
    t1 = float(s * np.sum(_outer_weights(axes, E, head_power=beta) * f_beta**2))
    t2 = float(s * np.sum(_outer_weights(axes, E, head_power=2.0 * beta) * f_2beta))
    if d == 2:
        t3 = _minimal_kgG_gl(model, quad)
    else:
        W = _outer_weights(axes, E, head_power=2.0 * beta)
        kappa = np.exp(-s * E)
        t3 = float(s * np.sum(W * (kappa + bundle["c_zeta"]) ** (2.0 * beta) * bundle["G"]))
    return OuterIntegrals(int_f_beta_sq=t1, int_f_2beta=t2, int_kg_G=t3)


def _minimal_kgG_gl(model: ScoreModel, quad: QuadratureSpec) -> float:
    """d=2 third term by tensor Gauss-Legendre on the closed-form integrand."""
    s = model.s
    beta2 = 2.0 * model.beta
    t_max = quad.t_upper(s)
    x1, w1 = log_axis_rule(t_max, min_nodes=quad.nodes_per_axis)
    prod = np.outer(x1, x1)
    c_zeta = _phi_box_d2(model.zeta * s, x1[:, None], x1[None, :]) / model.zeta
    kappa = np.exp(-s * prod)
    vals = (kappa + c_zeta) ** beta2 * (1.0 + c_zeta**5)
    return float(s * np.sum(np.outer(w1, w1) * vals))


def _lattice_window_grid(model: ScoreModel, margin: int):
    n = model.window_n if model.window_n is not None else 10
    half = n + margin
    ii, jj = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1), indexing="ij")
    pts = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(float)
    w = model.weight(pts).reshape(ii.shape)
    return ii, jj, w


def _shift_sum(arr: np.ndarray, offsets) -> np.ndarray:
    """out[i, j] = sum over offsets of arr[i + di, j + dj], zero outside."""
    out = np.zeros_like(arr)
    n0, n1 = arr.shape
    for di, dj in offsets:
        src0 = slice(max(di, 0), n0 + min(di, 0))
        dst0 = slice(max(-di, 0), n0 + min(-di, 0))
        src1 = slice(max(dj, 0), n1 + min(dj, 0))
        dst1 = slice(max(-dj, 0), n1 + min(-dj, 0))
        out[dst0, dst1] += arr[src0, src1]
    return out


def _outer_lattice(model: ScoreModel) -> OuterIntegrals:
    """Exact finite sums; the weight must vanish outside the window box."""
    s = model.s
    beta = model.beta
    g = 4.0 * s * math.exp(-4.0 * s * model.zeta)
    kappa = math.exp(-4.0 * s)
    _, _, w = _lattice_window_grid(model, margin=4)
    G = np.maximum(w**2, w**4) * (1.0 + g**5)
    near = _shift_sum(G, NEIGHBOR_OFFSETS)
    joint = _shift_sum(G, NEIGHBOR_OFFSETS_2)

    def f_total(alpha: float) -> np.ndarray:
        return (
            2.0 * s * math.exp(-4.0 * s * alpha) * near
            + s * (4.0 * s * math.exp(-4.0 * s)) ** alpha * joint
        )

    t1 = float(s * np.sum(f_total(beta) ** 2))
    t2 = float(s * np.sum(f_total(2.0 * beta)))
    t3 = float(s * (kappa + g) ** (2.0 * beta) * np.sum(G))
    return OuterIntegrals(
        int_f_beta_sq=t1,
        int_f_2beta=t2,
        int_kg_G=t3,
        kind_int_f_beta_sq="bound",
        kind_int_f_2beta="bound",
        kind_int_kg_G="value",
    )


# -- rgg radial machinery -----------------------------------------------------


def _rgg_envelope(model: ScoreModel, r: np.ndarray) -> np.ndarray:
    """max(w^2, w^4) along a ray (the weights of this model are radial)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    pts = np.zeros((r.size, model.d))
    pts[:, 0] = r
    w = model.weight(pts)
    return np.maximum(w**2, w**4)


def _rgg_weight_radial(model: ScoreModel, r: np.ndarray, power: int) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    pts = np.zeros((r.size, model.d))
    pts[:, 0] = r
    return model.weight(pts) ** power


def _radial_rule(model: ScoreModel, v_lo: float = 0.0, v_hi: float = 45.0):
    """Gauss-Legendre nodes in v = -log(r/s), split at the integrand kinks.

    Panel edges are pinned to v = 0 (support edge of the weights) and v = 1
    (kink radius of the envelope max(w^2, w^4) for the log weight), then
    filled with roughly unit-length panels.
    """
    edges = sorted({v_lo, v_hi, *(b for b in (0.0, 1.0) if v_lo < b < v_hi)})
    nodes = []
    weights = []
    for a, b in zip(edges[:-1], edges[1:]):
        n_panels = max(int(math.ceil(b - a)), 2)
        t, wt = gauss_legendre_panels(a, b, n_panels, PANEL_ORDER)
        nodes.append(t)
        weights.append(wt)
    return np.concatenate(nodes), np.concatenate(weights)


def _rgg_radial_integral(model: ScoreModel, profile: Callable[[np.ndarray], np.ndarray]) -> float:
    """s * integral over R^d of profile(|x|) dx for a radial profile."""
    s, d = model.s, model.d
    v, wv = _radial_rule(model)
    r = s * np.exp(-v)
    vals = profile(r) * np.exp(-d * v)
    return float(s * d * unit_ball_volume(d) * s**d * np.sum(wv * vals))


def rgg_weight_power_integral(model: ScoreModel, power: int) -> float:
    """W_power = s * int w(x)^power dx by radial quadrature."""
    if model.model_tag != "rgg_isolated":
        raise ValueError("weight power integrals apply to the rgg model")
    return _rgg_radial_integral(model, lambda r: _rgg_weight_radial(model, r, power))


def rgg_max_weight_integral(model: ScoreModel) -> float:
    """s * int max(w^2, w^4) dx, the mass of the moment envelope."""
    if model.model_tag != "rgg_isolated":
        raise ValueError("the envelope integral applies to the rgg model")
    return _rgg_radial_integral(model, lambda r: _rgg_envelope(model, r))


def rgg_mean_value(model: ScoreModel) -> float:
    """Expected statistic: exp(-ball mass) * s * int w dx."""
    if model.model_tag != "rgg_isolated":
        raise ValueError("the mean formula applies to the rgg model")
    return math.exp(-model.ball_mass()) * rgg_weight_power_integral(model, 1)


def _sphere_cap_measure(t: np.ndarray, center_dist: float, radius: float, d: int) -> np.ndarray:
    """Measure of the sphere of radius t about the origin inside a ball.

    The ball has the given radius and its center at distance center_dist.
    Clipping the cosine handles full containment and disjointness in one
    expression.  d=2 gives an arc length, d=3 a cap area.
    """
    t = np.asarray(t, dtype=float)
    if center_dist < 1e-12 * max(radius, 1.0):
        full = np.where(t <= radius, 1.0, 0.0)
        if d == 2:
            return 2.0 * np.pi * t * full
        return 4.0 * np.pi * t**2 * full
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_half = (t**2 + center_dist**2 - radius**2) / (2.0 * t * center_dist)
    cos_half = np.clip(np.nan_to_num(cos_half, nan=1.0), -1.0, 1.0)
    if d == 2:
        return 2.0 * t * np.arccos(cos_half)
    return 2.0 * np.pi * t**2 * (1.0 - cos_half)


def _rgg_ball_envelope_integral(model: ScoreModel, center_norm: float, radius: float) -> float:
    """integral of max(w^2, w^4) over a ball at distance center_norm."""
    if model.d > 3:
        raise ValueError("ball integrals are implemented for d <= 3")
    s = model.s
    lo = max(center_norm - radius, 0.0)
    hi = min(center_norm + radius, s)  # weight support ends at radius s
    if hi <= lo:
        return 0.0
    breaks = sorted({lo, hi, *(b for b in (s / math.e,) if lo < b < hi)})
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        n_panels = max(int(math.ceil((b - a) / max(radius / 8.0, 1e-12))), 4)
        t, wt = gauss_legendre_panels(a, b, min(n_panels, 64), PANEL_ORDER)
        vals = _rgg_envelope(model, t) * _sphere_cap_measure(t, center_norm, radius, model.d)
        total += float(np.sum(wt * vals))
    return total


def _outer_rgg(model: ScoreModel, quad: QuadratureSpec, mc: McSpec | None) -> OuterIntegrals:
    s, d = model.s, model.d
    beta = model.beta
    u = model.ball_mass()
    g = u * math.exp(-model.zeta * u)
    kappa = math.exp(-u)
    env_base = 1.0 + g**5
    wbar = rgg_max_weight_integral(model)
    t3 = (kappa + g) ** (2.0 * beta) * env_base * wbar
    # exact convolution identities: integrating the ball indicator over the
    # probe location frees the ball volume as a constant factor
    t2 = env_base * wbar * u * (
        2.0 * math.exp(-2.0 * beta * u) + 2.0**d * (u * math.exp(-u)) ** (2.0 * beta)
    )
    if d > 3:
        vals = mc_outer_integrals(model, mc or _DEFAULT_MC)
        t1, se1 = vals.int_f_beta_sq, vals.se_int_f_beta_sq
    else:
        t1, se1 = _rgg_t1_radial(model), 0.0
    return OuterIntegrals(
        int_f_beta_sq=t1,
        int_f_2beta=t2,
        int_kg_G=t3,
        se_int_f_beta_sq=se1,
        kind_int_f_beta_sq="bound",
        kind_int_f_2beta="bound",
        kind_int_kg_G="bound",
    )


def _rgg_f_profile(model: ScoreModel, radii: np.ndarray, alpha: float) -> np.ndarray:
    s = model.s
    u = model.ball_mass()
    g = u * math.exp(-model.zeta * u)
    env_base = 1.0 + g**5
    near = np.array([_rgg_ball_envelope_integral(model, r, model.rho) for r in radii])
    joint = np.array([_rgg_ball_envelope_integral(model, r, 2.0 * model.rho) for r in radii])
    return env_base * s * (2.0 * math.exp(-alpha * u) * near + (u * math.exp(-u)) ** alpha * joint)


def _rgg_t1_radial(model: ScoreModel) -> float:
    """s * int f_beta^2 by radial quadrature (the field is radial)."""
    s, d = model.s, model.d
    v_lo = -math.log1p(2.0 * model.rho / s)  # cover the pad beyond the support
    v, wv = _radial_rule(model, v_lo=v_lo)
    r = s * np.exp(-v)
    f_vals = _rgg_f_profile(model, r, model.beta)
    vals = f_vals**2 * r**d  # r^(d-1) surface factor plus the r dv Jacobian
    return float(s * d * unit_ball_volume(d) * np.sum(wv * vals))


# -- Monte Carlo outer-integral oracles ---------------------------------------


def mc_outer_integrals(model: ScoreModel, mc: McSpec | None = None):
    """Monte Carlo estimates of the three outer terms, standard errors filled.

    minimal: pair-expansion over location triples with the closed-form c
    kernel; rgg: radial importance sampling with unbiased ball-pair
    estimates of the squared field.
    """
    mc = mc or _DEFAULT_MC
    if model.model_tag == "minimal":
        return _mc_outer_minimal(model, mc)
    if model.model_tag == "rgg_isolated":
        return _mc_outer_rgg(model, mc)
    raise ValueError("the lattice outer integrals are exact sums; no oracle needed")


def _minimal_field_hat(
    model: ScoreModel, y: np.ndarray, alpha: float, mc: McSpec, stream: int
) -> np.ndarray:
    """One-sample unbiased estimate of f_alpha at each row of y.

    Each component draws its inner point uniformly on the exact sub-box it
    integrates over, so the importance weight is the box volume and the
    integrand stays bounded.
    """
    s, d = model.s, model.d
    n = y.shape[0]
    u1 = uniform_samples(mc.rng(stream), n, d, mc.stratification)
    u2 = uniform_samples(mc.rng(stream + 1), n, d, mc.stratification)
    u3 = uniform_samples(mc.rng(stream + 2), n, d, mc.stratification)
    x_up = y + u1 * (1.0 - y)
    x_dn = u2 * y
    vol_up = np.prod(1.0 - y, axis=1)
    vol_dn = np.prod(y, axis=1)
    prod_y = np.prod(y, axis=1)
    g_up = 1.0 + _c_exact_points(x_up, model.zeta, s, d) ** 5
    g_dn = 1.0 + _c_exact_points(x_dn, model.zeta, s, d) ** 5
    g_all = 1.0 + _c_exact_points(u3, model.zeta, s, d) ** 5
    c_join = _c_exact_points(np.maximum(u3, y), 1.0, s, d)
    f1 = s * vol_up * g_up * np.exp(-alpha * s * np.prod(x_up, axis=1))
    f2 = s * vol_dn * np.exp(-alpha * s * prod_y) * g_dn
    f3 = s * g_all * c_join**alpha
    return f1 + f2 + f3


def _mc_outer_minimal(model: ScoreModel, mc: McSpec):
    s, d = model.s, model.d
    beta = model.beta
    n = mc.n_samples
    y = uniform_samples(mc.rng(1), n, d, mc.stratification)
    # two independent field estimates multiply to an unbiased square
    f_a = _minimal_field_hat(model, y, beta, mc, stream=30)
    f_b = _minimal_field_hat(model, y, beta, mc, stream=40)
    t1_vals = s * f_a * f_b
    t2_vals = s * _minimal_field_hat(model, y, 2.0 * beta, mc, stream=50)
    c_zeta_y = _c_exact_points(y, model.zeta, s, d)
    kappa_y = np.exp(-s * np.prod(y, axis=1))
    t3_vals = s * (kappa_y + c_zeta_y) ** (2.0 * beta) * (1.0 + c_zeta_y**5)
    (m1, e1), (m2, e2), (m3, e3) = (mc_mean_se(v) for v in (t1_vals, t2_vals, t3_vals))
    return OuterIntegrals(
        int_f_beta_sq=m1,
        int_f_2beta=m2,
        int_kg_G=m3,
        se_int_f_beta_sq=e1,
        se_int_f_2beta=e2,
        se_int_kg_G=e3,
    )


def _mc_outer_rgg(model: ScoreModel, mc: McSpec):
    s, d = model.s, model.d
    beta = model.beta
    u = model.ball_mass()
    g = u * math.exp(-model.zeta * u)
    env_base = 1.0 + g**5
    kappa = math.exp(-u)
    kd = unit_ball_volume(d)
    v_lo = -math.log1p(2.0 * model.rho / s)
    v_hi = 45.0
    rng = mc.rng()
    n = mc.n_samples
    v = v_lo + (v_hi - v_lo) * uniform_samples(rng, n, 1, mc.stratification)[:, 0]
    radii = s * np.exp(-v)
    centers = np.zeros((n, d))
    centers[:, 0] = radii  # radial symmetry: the field depends on |y| only

    def ball_draws(radius: float) -> np.ndarray:
        """One uniform point in the ball of given radius around each center."""
        dirs = rng.normal(size=(n, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rr = radius * rng.random(n) ** (1.0 / d)
        return centers + dirs * rr[:, None]

    def f_hat(alpha: float) -> np.ndarray:
        near = kd * model.rho**d * _envelope_at(model, ball_draws(model.rho))
        joint = kd * (2.0 * model.rho) ** d * _envelope_at(model, ball_draws(2.0 * model.rho))
        return env_base * s * (
            2.0 * math.exp(-alpha * u) * near + (u * math.exp(-u)) ** alpha * joint
        )

    meas = (v_hi - v_lo) * d * kd * radii**d  # surface factor and r dv Jacobian
    t1_vals = s * meas * f_hat(beta) * f_hat(beta)
    t2_vals = s * meas * f_hat(2.0 * beta)
    t3_vals = (kappa + g) ** (2.0 * beta) * env_base * s * meas * _envelope_at(model, centers)
    (m1, e1), (m2, e2), (m3, e3) = (mc_mean_se(x) for x in (t1_vals, t2_vals, t3_vals))
    return OuterIntegrals(
        int_f_beta_sq=m1,
        int_f_2beta=m2,
        int_kg_G=m3,
        se_int_f_beta_sq=e1,
        se_int_f_2beta=e2,
        se_int_kg_G=e3,
        kind_int_f_beta_sq="bound",
        kind_int_f_2beta="bound",
        kind_int_kg_G="bound",
    )


def _envelope_at(model: ScoreModel, pts: np.ndarray) -> np.ndarray:
    w = model.weight(pts)
    return np.maximum(w**2, w**4)


# -- power integrals of the c kernel ------------------------------------------


def c_power_outer_integral(
    alpha: float, s: float, d: int, power: int, quad: QuadratureSpec | None = None
) -> float:
    """s * int c_alpha_s(x)^power dx over the cube, by the lattice grid."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if power < 1:
        raise ValueError("power must be a positive integer")
    quad = quad or _DEFAULT_QUAD
    if d > 3:
        raise ValueError("use mc_crep_power beyond three dimensions")
    t_max = quad.t_upper(s)
    # only two grid-sized arrays live here, so the cap can sit well above
    # the field bundle's
    per_axis = _lattice_per_axis(quad.nodes_per_axis, d, budget=32_000_000)
    axes = [np.linspace(0.0, t_max, per_axis) for _ in range(d)]
    E = np.exp(-_broadcast_sum(axes))
    if d == 1:
        x1 = np.exp(-axes[0])
        c = -np.exp(-alpha * s * x1) * np.expm1(-alpha * s * (1.0 - x1)) / alpha
    elif d == 2:
        x1 = np.exp(-axes[0])[:, None]
        x2 = np.exp(-axes[1])[None, :]
        c = _phi_box_d2(alpha * s, x1, x2) / alpha
    else:
        c = np.exp(-alpha * s * E) * E
        for ax in range(d):
            c = cumtrapz_along(c, axes[ax], ax, corrected=True)
        c = s * np.maximum(c, 0.0)
    W = _outer_weights(axes, E)
    return float(s * np.sum(W * c**power))


def mc_crep_power(alpha: float, s: float, d: int, power: int, mc: McSpec | None = None):
    """Mecke-style oracle for s * int c^power: (value, standard error).

    Rewrites the power as a coordinatewise-minimum moment over independent
    uniform points, which needs no c evaluations at all.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    mc = mc or _DEFAULT_MC
    rng = mc.rng()
    z = uniform_samples(rng, mc.n_samples, power * d, mc.stratification).reshape(
        mc.n_samples, power, d
    )
    min_prod = np.prod(np.min(z, axis=1), axis=1)
    sum_prod = np.sum(np.prod(z, axis=2), axis=1)
    vals = s ** (power + 1) * min_prod * np.exp(-alpha * s * sum_prod)
    return mc_mean_se(vals)


# -- lattice closed forms ------------------------------------------------------


def lattice_mean_value(model: ScoreModel) -> float:
    """Expected statistic of the lattice model: s e^{-4s} * sum of weights."""
    if model.model_tag != "lattice_isolated":
        raise ValueError("the mean formula applies to the lattice model")
    _, _, w = _lattice_window_grid(model, margin=0)
    return float(model.s * math.exp(-4.0 * model.s) * np.sum(w))


def variance_exact_lattice(model: ScoreModel) -> float:
    """Exact variance of the lattice statistic from the two-point identity.

    Pairs of sites interact only when their neighbor sets overlap; the
    overlap size is 4, 2, 1 for offsets 0, diagonal, double-step, and the
    four nearest-neighbor offsets exclude joint isolation outright.
    """
    if model.model_tag != "lattice_isolated":
        raise ValueError("the exact variance applies to the lattice model")
    s = model.s
    _, _, w = _lattice_window_grid(model, margin=4)
    w2 = float(np.sum(w**2))
    e4, e6, e7, e8 = (math.exp(-k * s) for k in (4, 6, 7, 8))
    diag = [(di, dj) for di in (-1, 1) for dj in (-1, 1)]
    double = [(2, 0), (-2, 0), (0, 2), (0, -2)]
    pair_diag = float(np.sum(w * _shift_sum(w, diag)))
    pair_double = float(np.sum(w * _shift_sum(w, double)))
    pair_near = float(np.sum(w * _shift_sum(w, NEIGHBOR_OFFSETS)))
    return s * e4 * w2 + s**2 * (
        w2 * (e4 - e8)
        + pair_diag * (e6 - e8)
        + pair_double * (e7 - e8)
        - pair_near * e8
    )


# -- assembly -----------------------------------------------------------------


def assemble_bound(
    model: ScoreModel,
    terms,
    var: float,
    var_source: str = "supplied",
) -> BoundReport:
    """Plug the three integral terms and a variance into both distance bounds.

    The reported values are normalized: the theory's p-dependent constant
    multiplies everything and is not quantified, so only rates and
    monotonicity of these numbers are meaningful.
    """
    if var <= 0:
        raise ValueError(f"variance must be positive, got {var}")
    t1, t2, t3 = tuple(terms)
    for name, val in (("int_f_beta_sq", t1), ("int_f_2beta", t2), ("int_kg_G", t3)):
        if val < 0:
            raise ValueError(f"{name} must be nonnegative, got {val}")
    dw = math.sqrt(t1) / var + t3 / var**1.5
    dk = (
        (math.sqrt(t1) + math.sqrt(t2)) / var
        + math.sqrt(t3) / var
        + t3 / var**1.5
        + (t3**1.25 + t3**1.5) / var**2
    )
    ses = (0.0, 0.0, 0.0)
    kinds = ("value", "value", "value")
    if isinstance(terms, OuterIntegrals):
        ses = (terms.se_int_f_beta_sq, terms.se_int_f_2beta, terms.se_int_kg_G)
        kinds = (terms.kind_int_f_beta_sq, terms.kind_int_f_2beta, terms.kind_int_kg_G)
    return BoundReport(
        s=model.s,
        d=model.d,
        p=model.p,
        zeta=model.zeta,
        beta=model.beta,
        int_f_beta_sq=t1,
        int_f_2beta=t2,
        int_kg_G=t3,
        var=var,
        var_source=var_source,
        dW_norm=dw,
        dK_norm=dk,
        se_int_f_beta_sq=ses[0],
        se_int_f_2beta=ses[1],
        se_int_kg_G=ses[2],
        kind_int_f_beta_sq=kinds[0],
        kind_int_f_2beta=kinds[1],
        kind_int_kg_G=kinds[2],
    )
