"""Add-one difference operators and grid estimators for the distance bounds.

The first difference of the statistic is its change under inserting one
point; the second difference is the change of the change.  Both are
computed by full statistic re-evaluations: the algebraic identities they
satisfy are the oracle for everything else in the package, so there is no
incremental caching to get wrong.

The estimator half turns ensemble frequencies of "difference is nonzero"
events, collected on a deterministic cell-center grid, into the three
aggregate ingredients of the normal-approximation bounds: the gamma
integral over single locations and the two bracketed double integrals over
location pairs.  For each concrete model the per-replicate indicator
fields are evaluated in closed form over the whole grid at once; the
closed forms are exact (integer arithmetic against the drawn
configuration, no discretization beyond the grid itself) and are property
tested against the re-evaluation operators point by point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .bounds import McSpec, _c_exact_points, g_s
from .pointproc import (
    IntensitySpec,
    PointConfiguration,
    SeedSpec,
    add,
    sample_poisson,
)
from .scores import (
    NEIGHBOR_OFFSETS,
    NEIGHBOR_OFFSETS_2,
    ScoreModel,
    _minimal_entry_mask,
    _rgg_isolated_mask,
    default_intensity,
    region,
    score,
    statistic,
)

__all__ = [
    "DifferenceValue",
    "MainTheoremTerms",
    "diff1",
    "diff2",
    "verify_dnull",
    "lattice_nonzero_probability",
    "distance_bounds_from_terms",
    "estimate_main_terms",
]


# -- difference operators ----------------------------------------------------


@dataclass(frozen=True)
class DifferenceValue:
    """Result of a first or second difference of the statistic.

    value is the signed change; order records which operator produced it;
    at_points keeps the inserted location(s) for reporting.
    """

    value: float
    order: int
    at_points: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if self.order not in (1, 2):
            raise ValueError(f"difference order must be 1 or 2, got {self.order}")
        if len(self.at_points) != self.order:
            raise ValueError("at_points must list one location per difference order")


def _as_point(model: ScoreModel, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != model.d:
        raise ValueError(f"point has {y.shape[0]} coordinates, expected {model.d}")
    return y


def diff1(model: ScoreModel, config: PointConfiguration, y) -> DifferenceValue:
    """First difference: statistic(config + point at y) - statistic(config)."""
    y = _as_point(model, y)
    before = statistic(model, config).value
    after = statistic(model, add(config, y)).value
    return DifferenceValue(value=after - before, order=1, at_points=(tuple(y),))


def diff2(model: ScoreModel, config: PointConfiguration, y1, y2) -> DifferenceValue:
    """Second difference via the four-term inclusion-exclusion.

    Equals diff1 at y1 of the map m -> statistic(m), re-differenced at y2;
    symmetric in (y1, y2) exactly.
    """
    y1 = _as_point(model, y1)
    y2 = _as_point(model, y2)
    with_1 = add(config, y1)
    h_base = statistic(model, config).value
    h_1 = statistic(model, with_1).value
    h_2 = statistic(model, add(config, y2)).value
    h_12 = statistic(model, add(with_1, y2)).value
    return DifferenceValue(
        value=h_12 - h_1 - h_2 + h_base,
        order=2,
        at_points=(tuple(y1), tuple(y2)),
    )


def verify_dnull(model: ScoreModel, config: PointConfiguration, x, y, y1, y2) -> bool:
    """Check that points outside the region of x cannot move the score of x.

    Two implications are tested against the score evaluated at the fixed
    center x on top of config + point at x.  First: if y is outside the
    region of x, adding y leaves the score of x unchanged.  Second: if y1
    and y2 are not both inside the region, the four-term second difference
    of the score of x vanishes.  Returns True iff both hold (vacuously when
    the membership condition does).
    """
    x = _as_point(model, x)
    y = _as_point(model, y)
    y1 = _as_point(model, y1)
    y2 = _as_point(model, y2)
    base = add(config, x)
    reg = region(model, x, base)
    ok = True
    if not bool(reg.contains(y.reshape(1, -1))[0]):
        before = score(model, x, base)
        after = score(model, x, add(base, y))
        ok = ok and (after - before) == 0.0
    in1 = bool(reg.contains(y1.reshape(1, -1))[0])
    in2 = bool(reg.contains(y2.reshape(1, -1))[0])
    if not (in1 and in2):
        s00 = score(model, x, base)
        s10 = score(model, x, add(base, y1))
        s01 = score(model, x, add(base, y2))
        s11 = score(model, x, add(add(base, y1), y2))
        ok = ok and (s11 - s10 - s01 + s00) == 0.0
    return ok


# -- exact lattice probabilities ---------------------------------------------

_B = tuple(np.array(off, dtype=int) for off in NEIGHBOR_OFFSETS)


def _lattice_support_sites(x1: np.ndarray, x2: np.ndarray | None) -> list[tuple[int, int]]:
    """Sites whose occupancy can influence the difference indicator.

    For a first difference at x the support is x, its four neighbours and
    their neighbours.  For a second difference only the overlap structure
    matters: coincident centers see the shared neighbourhood, adjacent
    centers see the two neighbourhoods, next-nearest centers see the (at
    most two) common neighbours plus their neighbourhoods.  Farther pairs
    have an identically zero second difference and get an empty support.
    """
    if x2 is None:
        sites = {tuple(x1)}
        for off in _B:
            y = x1 + off
            sites.add(tuple(y))
            for off2 in _B:
                sites.add(tuple(y + off2))
        return sorted(sites)
    delta = tuple(x2 - x1)
    if delta == (0, 0):
        sites = set()
        for off in _B:
            y = x1 + off
            sites.add(tuple(y))
            for off2 in _B:
                sites.add(tuple(y + off2))
        return sorted(sites)
    if delta in NEIGHBOR_OFFSETS:
        sites = set()
        for center in (x1, x2):
            for off in _B:
                sites.add(tuple(center + off))
        return sorted(sites)
    if delta in NEIGHBOR_OFFSETS_2:
        shared = [
            x1 + off
            for off in _B
            if any(np.array_equal(x1 + off, x2 + off2) for off2 in _B)
        ]
        sites = set()
        for y in shared:
            sites.add(tuple(y))
            for off in _B:
                sites.add(tuple(y + off))
        return sorted(sites)
    return []


def lattice_nonzero_probability(model: ScoreModel, x1, x2=None) -> float:
    """Exact probability that a lattice difference at x1 (and x2) is nonzero.

    Enumerates occupancy patterns of the finite support-site set, evaluates
    the difference by statistic re-evaluation on each pattern, and sums the
    pattern probabilities (sites are independently occupied with
    probability 1 - exp(-s)).  Occupancy determines the indicator because
    the positive and negative parts of the difference cannot both be active
    (the enumeration uses multiplicity one per occupied site).  Assumes
    every support site is inside the sampled window.
    """
    if model.model_tag != "lattice_isolated":
        raise ValueError("exact enumeration applies to the lattice model only")
    x1 = _as_point(model, x1).astype(int)
    x2v = None if x2 is None else _as_point(model, x2).astype(int)
    sites = _lattice_support_sites(x1, x2v)
    if not sites:
        return 0.0
    p_occ = -math.expm1(-model.s)
    coords = np.array(sites, dtype=float)
    total = 0.0
    for pattern in itertools.product((0, 1), repeat=len(sites)):
        mask = np.array(pattern, dtype=bool)
        if mask.any():
            config = PointConfiguration.from_points(
                coords[mask], dimension=2, space_tag="lattice"
            )
        else:
            config = PointConfiguration.empty(2, space_tag="lattice")
        if x2v is None:
            value = diff1(model, config, x1).value
        else:
            value = diff2(model, config, x1, x2v).value
        if value != 0.0:
            k = int(mask.sum())
            total += p_occ**k * (1.0 - p_occ) ** (len(sites) - k)
    return total


# -- grid indicator engines ---------------------------------------------------


class _MinimalGrid:
    """Exact nonzero-difference indicators on a product grid in [0,1]^d.

    For a drawn configuration M, the first difference at a grid point x is
    a(x) - b(x): a(x) flags that no point of M lies below x, b(x) counts
    minimal points of M above x.  Both reduce to per-axis binning followed
    by running maxima / suffix sums, so one pass serves every grid point.
    The second difference over a grid pair is assembled from the same two
    fields plus the componentwise index maximum.
    """

    def __init__(self, model: ScoreModel, cells_per_axis: int):
        self.model = model
        d = model.d
        m = cells_per_axis
        h = 1.0 / m
        self.axis = (np.arange(m) + 0.5) * h
        self.shape = (m,) * d
        idx = np.indices(self.shape).reshape(d, -1).T  # (n_cells, d)
        self.points = self.axis[idx]
        self.mass = np.full(idx.shape[0], model.s * h**d)
        leq = np.all(idx[:, None, :] <= idx[None, :, :], axis=2)
        self.pair_leq = leq
        joint = np.maximum(idx[:, None, :], idx[None, :, :])
        strides = np.array([m ** (d - 1 - k) for k in range(d)])
        self.pair_joint_flat = (joint * strides).sum(axis=2)

    def indicators(self, config: PointConfiguration) -> tuple[np.ndarray, np.ndarray]:
        coords, mults = config.coords, config.mults
        occupied = np.zeros(self.shape, dtype=bool)
        if coords.shape[0]:
            lo_bin = np.stack(
                [np.searchsorted(self.axis, coords[:, k], side="left") for k in range(coords.shape[1])],
                axis=1,
            )
            inside = np.all(lo_bin < self.shape[0], axis=1)
            if inside.any():
                occupied[tuple(lo_bin[inside].T)] = True
        dominated = occupied
        for ax in range(len(self.shape)):
            dominated = np.maximum.accumulate(dominated, axis=ax)
        a = (~dominated).astype(np.int64).ravel()

        b_grid = np.zeros(self.shape, dtype=np.int64)
        if coords.shape[0]:
            minimal = _minimal_entry_mask(coords, mults)
            if minimal.any():
                pts = coords[minimal]
                hi_bin = np.stack(
                    [np.searchsorted(self.axis, pts[:, k], side="right") - 1 for k in range(pts.shape[1])],
                    axis=1,
                )
                inside = np.all(hi_bin >= 0, axis=1)
                if inside.any():
                    np.add.at(b_grid, tuple(hi_bin[inside].T), 1)
        for ax in range(len(self.shape)):
            b_grid = np.flip(np.cumsum(np.flip(b_grid, axis=ax), axis=ax), axis=ax)
        b = b_grid.ravel()

        ind1 = (a - b) != 0
        leq = self.pair_leq
        d2 = b[self.pair_joint_flat] - a[None, :] * leq - a[:, None] * leq.T
        return ind1, d2 != 0


class _LatticeGrid:
    """Exact nonzero-difference indicators over the window sites.

    Isolation flips are local: the first difference at site x is nonzero
    iff x itself would score, or some occupied neighbour of x is currently
    scoring.  Second differences vanish unless the two sites coincide, are
    neighbours, or share a neighbour, and each of those cases reads the
    same two per-site fields.  Sites outside the window count as empty,
    matching the sampled model.
    """

    def __init__(self, model: ScoreModel, intensity: IntensitySpec):
        self.model = model
        lo, hi = intensity.sampling_bounds()
        self.lo = np.array([int(np.ceil(v)) for v in lo])
        axes = [
            np.arange(int(np.ceil(l)), int(np.floor(h)) + 1) for l, h in zip(lo, hi)
        ]
        self.shape = tuple(len(a) for a in axes)
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        self.points = grid.reshape(-1, 2).astype(float)
        self.mass = np.full(self.points.shape[0], model.s)
        self.w_pos = (model.weight(self.points) > 0).reshape(self.shape)
        # pair offset classes, found once: (flat row shift, class payload)
        self._pair_plan = self._build_pair_plan()

    def _shift(self, arr: np.ndarray, off: tuple[int, int]) -> np.ndarray:
        """arr sampled at x + off, zero-filled outside the window."""
        out = np.zeros_like(arr)
        r0, c0 = off
        rows_src = slice(max(0, r0), arr.shape[0] + min(0, r0))
        cols_src = slice(max(0, c0), arr.shape[1] + min(0, c0))
        rows_dst = slice(max(0, -r0), arr.shape[0] + min(0, -r0))
        cols_dst = slice(max(0, -c0), arr.shape[1] + min(0, -c0))
        out[rows_dst, cols_dst] = arr[rows_src, cols_src]
        return out

    def _build_pair_plan(self):
        plan = []
        for off in NEIGHBOR_OFFSETS:
            plan.append((off, "adjacent", None))
        plan.append(((0, 0), "coincident", None))
        for off in NEIGHBOR_OFFSETS_2:
            if off == (0, 0):
                continue
            shared = [
                b1
                for b1 in NEIGHBOR_OFFSETS
                for b2 in NEIGHBOR_OFFSETS
                if (b1[0] - b2[0], b1[1] - b2[1]) == off
            ]
            plan.append((off, "shared", tuple(shared)))
        return plan

    def _pair_assign(self, ind2: np.ndarray, off: tuple[int, int], values: np.ndarray):
        """ind2[i, j] = values at i, for every grid pair with x_j = x_i + off."""
        n_rows, n_cols = self.shape
        r0, c0 = off
        rows = np.arange(max(0, -r0), n_rows - max(0, r0))
        cols = np.arange(max(0, -c0), n_cols - max(0, c0))
        if rows.size == 0 or cols.size == 0:
            return
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        i_flat = (rr * n_cols + cc).ravel()
        j_flat = ((rr + r0) * n_cols + (cc + c0)).ravel()
        ind2[i_flat, j_flat] = values[rr, cc].ravel()

    def indicators(self, config: PointConfiguration) -> tuple[np.ndarray, np.ndarray]:
        occ = np.zeros(self.shape, dtype=bool)
        if config.n_entries:
            idx = config.coords.astype(int) - self.lo
            inside = np.all((idx >= 0) & (idx < np.array(self.shape)), axis=1)
            occ[tuple(idx[inside].T)] = True
        nbr_occ = np.zeros(self.shape, dtype=bool)
        for off in NEIGHBOR_OFFSETS:
            nbr_occ |= self._shift(occ, off)
        iso = ~nbr_occ
        would_score = self.w_pos & iso  # empty-or-not, a fresh point here scores
        scoring = occ & would_score  # an existing point here is scoring now
        nbr_scoring = np.zeros(self.shape, dtype=bool)
        for off in NEIGHBOR_OFFSETS:
            nbr_scoring |= self._shift(scoring, off)
        ind1 = (would_score | nbr_scoring).ravel()

        n = self.points.shape[0]
        ind2 = np.zeros((n, n), dtype=bool)
        for off, kind, shared in self._pair_plan:
            if kind == "adjacent":
                vals = would_score | self._shift(would_score, off)
            elif kind == "coincident":
                vals = nbr_scoring
            else:
                vals = np.zeros(self.shape, dtype=bool)
                for b1 in shared:
                    vals |= self._shift(scoring, b1)
            self._pair_assign(ind2, off, vals)
        return ind1, ind2


class _RggGrid:
    """Exact nonzero-difference indicators on a cell-center grid in the box.

    Same decomposition as the lattice: a fresh point at x changes the
    statistic iff it would score itself or deafens a currently scoring
    point within reach; a pair interacts iff the points are within one
    radius of each other or share a scoring point within reach of both.
    """

    def __init__(self, model: ScoreModel, intensity: IntensitySpec, cells_per_axis: int):
        self.model = model
        lo, hi = intensity.sampling_bounds()
        d = model.d
        m = cells_per_axis
        h = (hi - lo) / m
        axes = [lo[k] + (np.arange(m) + 0.5) * h[k] for k in range(d)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        self.points = grid.reshape(-1, d)
        self.mass = np.full(self.points.shape[0], model.s * float(np.prod(h)))
        self.w_pos = model.weight(self.points) > 0
        diff = self.points[:, None, :] - self.points[None, :, :]
        self.pair_near = (diff**2).sum(axis=2) <= model.rho**2
        self.grid_tree = cKDTree(self.points)

    def indicators(self, config: PointConfiguration) -> tuple[np.ndarray, np.ndarray]:
        rho = self.model.rho
        if config.n_entries == 0:
            clear = self.w_pos.copy()
            ind2 = self.pair_near & (clear[:, None] | clear[None, :])
            return clear, ind2
        tree = cKDTree(config.coords)
        crowd = np.array(
            [len(hits) for hits in tree.query_ball_point(self.points, rho)]
        )
        clear = self.w_pos & (crowd == 0)  # a fresh point here would score
        iso = _rgg_isolated_mask(self.model, config)
        scoring = iso & (self.model.weight(config.coords) > 0)
        ind1 = clear.copy()
        ind2 = self.pair_near & (clear[:, None] | clear[None, :])
        if scoring.any():
            reach = self.grid_tree.query_ball_point(config.coords[scoring], rho)
            for cells in reach:
                if cells:
                    sel = np.asarray(cells)
                    ind1[sel] = True
                    ind2[np.ix_(sel, sel)] = True
        return ind1, ind2


def _make_grid(model: ScoreModel, intensity: IntensitySpec, cells_per_axis: int | None):
    if model.model_tag == "lattice_isolated":
        return _LatticeGrid(model, intensity)
    if cells_per_axis is None:
        cells_per_axis = 32 if model.d <= 2 else 10
    if cells_per_axis < 2:
        raise ValueError(f"need at least 2 cells per axis, got {cells_per_axis}")
    if model.model_tag == "minimal":
        return _MinimalGrid(model, cells_per_axis)
    return _RggGrid(model, intensity, cells_per_axis)


# -- main estimation ----------------------------------------------------------


@dataclass(frozen=True)
class MainTheoremTerms:
    """Grid estimates of the aggregate bound ingredients, with uncertainty.

    c_x maps each grid location to its per-point moment constant.  The two
    brackets carry their square roots already (they plug into the distance
    bounds as written).  q_exponent is the moment surplus entering every
    probability power.  Standard errors come from batch means over
    replicate blocks; se_var_F uses the asymptotic fourth-moment formula.
    """

    c_x: dict[tuple[float, ...], float] = field(repr=False)
    gamma_F: float
    bracket_W: float
    bracket_K: float
    q_exponent: float
    var_F: float
    mean_F: float
    n_replicates: int
    se_gamma_F: float
    se_bracket_W: float
    se_bracket_K: float
    se_var_F: float
    dw_bound: float
    dk_bound: float
    vacuous: bool

    def __post_init__(self) -> None:
        if self.q_exponent <= 0:
            raise ValueError("q_exponent must be positive")
        for name in ("gamma_F", "bracket_W", "bracket_K", "var_F"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def distance_bounds_from_terms(
    gamma_F: float, bracket_W: float, bracket_K: float, var_F: float
) -> tuple[float, float]:
    """Assemble the Wasserstein/Kolmogorov bounds from the four aggregates.

    A zero variance with any mass in the numerators yields infinity; the
    all-zero degenerate case also reports infinity (the normalized
    statistic does not exist).
    """
    if var_F < 0:
        raise ValueError(f"variance must be nonnegative, got {var_F}")
    if var_F == 0.0:
        return math.inf, math.inf
    v = var_F
    dw = 12.0 / v * bracket_W + 2.0 * gamma_F / v**1.5
    dk = (
        12.0 / v * bracket_W
        + math.sqrt(gamma_F) / v
        + 2.0 * gamma_F / v**1.5
        + (gamma_F**1.25 + 2.0 * gamma_F**1.5) / v**2
        + 12.0 / v * bracket_K
    )
    return dw, dk


def _c_values(model: ScoreModel, points: np.ndarray, q: float) -> np.ndarray:
    """Per-point moment constant: local weight bound^(4+q) times 1 + g^5."""
    if model.model_tag == "minimal":
        base = np.ones(points.shape[0])
        g = _c_exact_points(points, model.zeta, model.s, model.d)
    else:
        base = model.weight(points) ** (4.0 + q)
        g = np.full(points.shape[0], g_s(model, points[0]))
    return base * (1.0 + g**5)


def _assemble(
    mass: np.ndarray,
    c_vals: np.ndarray,
    p1: np.ndarray,
    p2: np.ndarray,
    q: float,
) -> tuple[float, float, float]:
    c_lo = c_vals ** (2.0 / (4.0 + q))
    c_hi = c_vals ** (4.0 / (4.0 + q))
    gamma = float(np.sum(mass * np.maximum(c_lo, c_hi) * p1 ** (q / (8.0 + 2.0 * q))))
    inner = (mass * c_lo) @ p2 ** (q / (16.0 + 4.0 * q))
    bracket_w = float(np.sqrt(np.sum(mass * inner**2)))
    bracket_k = float(
        np.sqrt((mass * c_hi) @ p2 ** (q / (8.0 + 2.0 * q)) @ mass)
    )
    return gamma, bracket_w, bracket_k


def estimate_main_terms(
    model: ScoreModel,
    intensity: IntensitySpec | None = None,
    mc: McSpec | None = None,
    cells_per_axis: int | None = None,
) -> MainTheoremTerms:
    """Monte Carlo estimates of the aggregate bound terms on a cell grid.

    Draws replicate configurations, evaluates the exact nonzero-difference
    indicator fields over the grid, and plugs the frequency estimates into
    the gamma integral and both bracketed pair integrals together with the
    per-point moment constants.  The replicate count is the sample budget
    divided by the number of grid cells (at least 16).
    """
    if model.s < 1.0:
        raise ValueError(f"the bound terms are estimated for s >= 1, got s={model.s}")
    mc = mc or McSpec()
    intensity = intensity or default_intensity(model)
    grid = _make_grid(model, intensity, cells_per_axis)
    points = grid.points
    mass = grid.mass
    n_cells = points.shape[0]
    q = model.p / 2.0
    c_vals = _c_values(model, points, q)

    n_rep = max(16, mc.n_samples // n_cells)
    n_blocks = min(10, n_rep)
    block_edges = np.linspace(0, n_rep, n_blocks + 1).astype(int)

    count1 = np.zeros(n_cells, dtype=np.int64)
    count2 = np.zeros((n_cells, n_cells), dtype=np.int64)
    block1 = np.zeros(n_cells, dtype=np.int64)
    block2 = np.zeros((n_cells, n_cells), dtype=np.int64)
    block_terms = []
    f_samples = np.empty(n_rep)
    block_id = 0
    for r in range(n_rep):
        config = sample_poisson(intensity, SeedSpec(mc.base_seed, r))
        f_samples[r] = statistic(model, config).value
        ind1, ind2 = grid.indicators(config)
        block1 += ind1
        block2 += ind2
        if r + 1 == block_edges[block_id + 1]:
            size = block_edges[block_id + 1] - block_edges[block_id]
            block_terms.append(
                _assemble(mass, c_vals, block1 / size, block2 / size, q)
            )
            count1 += block1
            count2 += block2
            block1[:] = 0
            block2[:] = 0
            block_id += 1
    p1 = count1 / n_rep
    p2 = count2 / n_rep
    gamma, bracket_w, bracket_k = _assemble(mass, c_vals, p1, p2, q)

    blocks = np.array(block_terms)
    if n_blocks > 1:
        se = blocks.std(axis=0, ddof=1) / math.sqrt(n_blocks)
    else:
        se = np.zeros(3)

    mean_f = float(f_samples.mean())
    var_f = float(f_samples.var(ddof=1))
    centered = f_samples - mean_f
    m4 = float(np.mean(centered**4))
    se_var = math.sqrt(
        max(m4 - var_f**2 * (n_rep - 3) / (n_rep - 1), 0.0) / n_rep
    )

    dw, dk = distance_bounds_from_terms(gamma, bracket_w, bracket_k, var_f)
    return MainTheoremTerms(
        c_x={tuple(pt): float(cv) for pt, cv in zip(points, c_vals)},
        gamma_F=gamma,
        bracket_W=bracket_w,
        bracket_K=bracket_k,
        q_exponent=q,
        var_F=var_f,
        mean_F=mean_f,
        n_replicates=n_rep,
        se_gamma_F=float(se[0]),
        se_bracket_W=float(se[1]),
        se_bracket_K=float(se[2]),
        se_var_F=se_var,
        dw_bound=dw,
        dk_bound=dk,
        vacuous=not (dk < 1.0),
    )
