"""Ensemble simulation and statistical verification.

Runs independent replicates of a score model, summarizes the sampled
statistic, and measures how far the normalized ensemble sits from the
standard normal in Kolmogorov and 1-Wasserstein distance.  Both distances
are exact functionals of the empirical CDF: no binning, no numerical
integration error beyond the accuracy of the normal CDF itself.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .bounds import QuadratureSpec, mean_minimal
from .pointproc import IntensitySpec, SeedSpec, replicate_seed, sample_poisson
from .quadrature import log_axis_rule, tail_truncation
from .scores import ScoreModel, default_intensity, statistic

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_DEFAULT_QUAD = QuadratureSpec()


def thread_count(requested: int | None = None) -> int:
    """Worker count: explicit argument, else REGION_STABILIZE_THREADS, else 1.

    Results never depend on this value; it only sets how many replicates
    run concurrently.
    """
    if requested is not None:
        if requested < 1:
            raise ValueError("thread count must be at least 1")
        return requested
    env = os.environ.get("REGION_STABILIZE_THREADS", "")
    if env.strip():
        n = int(env)
        if n < 1:
            raise ValueError("REGION_STABILIZE_THREADS must be at least 1")
        return n
    return 1


@dataclass(frozen=True)
class EnsembleSummary:
    """Replicated statistic values and their normal-approximation summary."""

    n_reps: int
    samples: np.ndarray = field(repr=False)
    point_counts: np.ndarray = field(repr=False)
    seeds: np.ndarray = field(repr=False)
    mean: float
    var: float
    se_mean: float
    se_var: float
    degenerate: bool
    normalized: np.ndarray | None = field(repr=False)
    dk_emp: float
    dw_emp: float
    ci_halfwidths: dict[str, float]

    def __post_init__(self):
        if self.var < 0:
            raise ValueError("variance cannot be negative")
        if not self.degenerate:
            if not 0.0 <= self.dk_emp <= 1.0:
                raise ValueError(f"Kolmogorov distance {self.dk_emp} outside [0, 1]")
            if self.dw_emp < 0.0:
                raise ValueError(f"Wasserstein distance {self.dw_emp} is negative")


def run_ensemble(
    model: ScoreModel,
    intensity: IntensitySpec | None = None,
    n_reps: int = 100,
    base_seed: int = 0,
    n_threads: int | None = None,
) -> EnsembleSummary:
    """Simulate n_reps independent replicates and summarize the statistic.

    Replicate i draws from SeedSpec(base_seed, i), so the sample set is a
    pure function of (model, intensity, n_reps, base_seed) regardless of
    the worker count or completion order.  A degenerate ensemble (all
    values equal) is flagged and normalization refused rather than divided
    by zero.
    """
    if n_reps < 2:
        raise ValueError(f"need at least two replicates, got {n_reps}")
    if intensity is None:
        intensity = default_intensity(model)

    def one(i: int) -> tuple[float, int, int]:
        spec = SeedSpec(base_seed=base_seed, replicate_index=i)
        config = sample_poisson(intensity, spec)
        value = statistic(model, config)
        return value.value, value.point_count, replicate_seed(spec)

    workers = thread_count(n_threads)
    if workers == 1:
        rows = [one(i) for i in range(n_reps)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(n_reps)))
    samples = np.array([r[0] for r in rows])
    counts = np.array([r[1] for r in rows], dtype=np.int64)
    seeds = np.array([r[2] for r in rows], dtype=np.uint64)

    n = n_reps
    mean = float(samples.mean())
    var = float(samples.var(ddof=1))
    se_mean = math.sqrt(var / n)
    centered = samples - mean
    m4 = float(np.mean(centered**4))
    # variance of the unbiased sample variance, via the fourth moment
    var_of_var = max(m4 - var * var * (n - 3) / (n - 1), 0.0) / n
    se_var = math.sqrt(var_of_var)

    degenerate = bool(np.all(samples == samples[0]))
    if degenerate:
        normalized = None
        dk = float("nan")
        dw = float("nan")
    else:
        normalized = centered / math.sqrt(var)
        dk = ks_distance(normalized)
        dw = wasserstein1(normalized)
    return EnsembleSummary(
        n_reps=n,
        samples=samples,
        point_counts=counts,
        seeds=seeds,
        mean=mean,
        var=var,
        se_mean=se_mean,
        se_var=se_var,
        degenerate=degenerate,
        normalized=normalized,
        dk_emp=dk,
        dw_emp=dw,
        ci_halfwidths={"mean": 1.96 * se_mean, "var": 1.96 * se_var},
    )


def ks_distance(samples) -> float:
    """Kolmogorov distance between the empirical CDF and the standard normal.

    The supremum of |F_n - Phi| over the whole line is attained at a sample
    point, approached from one side or the other, so it equals the maximum
    over sorted samples x_(i) of |i/n - Phi| and |(i-1)/n - Phi|.  Phi is
    scipy's erf-based ndtr, accurate to a few ulp (far below the 1e-12
    budget this estimator promises).
    """
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = x.size
    if n == 0:
        raise ValueError("Kolmogorov distance needs at least one sample")
    cdf = ndtr(x)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def _phi_antiderivative(t: np.ndarray) -> np.ndarray:
    """Integral of Phi from -infinity to t: t*Phi(t) + phi(t)."""
    return t * ndtr(t) + INV_SQRT_2PI * np.exp(-0.5 * t * t)


def wasserstein1(samples) -> float:
    """1-Wasserstein distance between the empirical CDF and the standard
    normal, as the exact integral of |F_n - Phi|.

    Between consecutive order statistics F_n is the constant c = i/n, and
    Phi crosses level c at the quantile ndtri(c); the integral of |c - Phi|
    over each piece is closed-form in the antiderivative of Phi.  The two
    tails contribute the usual normal partial expectations.
    """
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = x.size
    if n == 0:
        raise ValueError("Wasserstein distance needs at least one sample")
    # tails: int_{-inf}^{x_0} Phi and int_{x_last}^{inf} (1 - Phi)
    total = float(_phi_antiderivative(x[:1])[0])
    total += float(INV_SQRT_2PI * math.exp(-0.5 * x[-1] ** 2) - x[-1] * ndtr(-x[-1]))
    if n > 1:
        a, b = x[:-1], x[1:]
        c = np.arange(1, n) / n
        q = ndtri(c)
        anti_a, anti_b, anti_q = (
            _phi_antiderivative(a),
            _phi_antiderivative(b),
            _phi_antiderivative(np.clip(q, a, b)),
        )
        cross = np.clip(q, a, b)
        # on [a, cross] the empirical CDF is above Phi, below it after
        below = c * (cross - a) - (anti_q - anti_a)
        above = (anti_b - anti_q) - c * (b - cross)
        total += float(np.sum(np.abs(below) + np.abs(above)))
    return total


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit of response ~ C * (log s)^gamma."""

    s_grid: np.ndarray = field(repr=False)
    response: np.ndarray = field(repr=False)
    coefficient: float
    exponent: float
    r_squared: float

    def __post_init__(self):
        s = np.asarray(self.s_grid, dtype=float)
        if s.size < 4:
            raise ValueError("scaling fit needs at least four grid points")
        if np.any(np.diff(s) <= 0):
            raise ValueError("s grid must be strictly increasing")


def scaling_fit(points) -> ScalingFit:
    """Fit log(response) = log C + gamma * log(log s) by least squares.

    A constant response fits exactly with gamma = 0, and the zero-spread
    case reports r^2 = 1 (the model explains everything there is).
    """
    pts = sorted((float(s), float(r)) for s, r in points)
    s = np.array([p[0] for p in pts])
    resp = np.array([p[1] for p in pts])
    if np.any(resp <= 0):
        raise ValueError("responses must be positive for a log-log fit")
    if np.any(s <= 1):
        raise ValueError("scaling in log s needs s > 1")
    u = np.log(np.log(s))
    v = np.log(resp)
    gamma, logc = np.polyfit(u, v, 1)
    fitted = gamma * u + logc
    ss_res = float(np.sum((v - fitted) ** 2))
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ScalingFit(
        s_grid=s,
        response=resp,
        coefficient=float(np.exp(logc)),
        exponent=float(gamma),
        r_squared=r2,
    )


def variance_mecke_minimal(
    s: float, d: int = 2, quad: QuadratureSpec | None = None
) -> float:
    """Variance of the minimal-point count by exact moment identities, d=2.

    Var = E F - (E F)^2 + J, where J is the expected number of ordered
    pairs of distinct minimal points.  Reducing the pair integral over
    incomparable (x, y) leaves a two-dimensional integrand
    2 s * exp(-s x1 x2) * phi(s (1-x1) x2) with phi the exponential
    deficit integral, evaluated on the log-substituted tensor rule.
    """
    if d != 2:
        raise ValueError(
            "the pair integral is implemented for d=2 only; "
            "use run_ensemble for an empirical variance in other dimensions"
        )
    quad = quad or _DEFAULT_QUAD
    from .bounds import exp_deficit_integral

    t_max = tail_truncation(s)
    x1, w1 = log_axis_rule(t_max, min_nodes=quad.nodes_per_axis)
    # pair integral: x1 axis log-substituted, x2 axis likewise
    xx1 = x1[:, None]
    xx2 = x1[None, :]
    vals = np.exp(-s * xx1 * xx2) * exp_deficit_integral(s * (1.0 - xx1) * xx2)
    pair = 2.0 * s * float(np.sum(np.outer(w1, w1) * vals))
    ef = mean_minimal(s, 2, quad)
    return ef - ef * ef + pair
