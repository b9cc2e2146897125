"""Score functions, stabilization regions and interaction rates.

Three concrete models share one interface:

minimal          -- points in the unit cube score 1 when no other point lies
                    componentwise below them.
lattice_isolated -- integer sites score their weight when all four nearest
                    neighbours are unoccupied.
rgg_isolated     -- points in the plane (or R^d) score their weight when no
                    other point lies within a closed ball of radius rho.

Every score depends on the configuration only through a region around the
point (a box toward the origin, the four neighbours, a ball).  `region`
returns that region when the score survives and the empty region otherwise;
`rate` is the exponential decay budget attached to a pair of locations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .pointproc import IntensitySpec, PointConfiguration, _canonicalize

MODEL_TAGS = ("minimal", "lattice_isolated", "rgg_isolated")

# Four nearest lattice neighbours and their Minkowski sum with themselves.
NEIGHBOR_OFFSETS = ((0, 1), (0, -1), (1, 0), (-1, 0))
NEIGHBOR_OFFSETS_2 = tuple(
    sorted({(a[0] + b[0], a[1] + b[1]) for a in NEIGHBOR_OFFSETS for b in NEIGHBOR_OFFSETS})
)

# Verification hook: "strict" makes a point dominate only strictly smaller
# points, which silently breaks the coincident-duplicate bookkeeping.  Used
# by the CLI self-check to prove the property suite can catch regressions.
_DOMINANCE_MODE = "weak"


def set_dominance_mode(mode: str) -> None:
    global _DOMINANCE_MODE
    if mode not in ("weak", "strict"):
        raise ValueError(f"unknown dominance mode {mode!r}")
    _DOMINANCE_MODE = mode


def unit_ball_volume(d: int) -> float:
    """Volume of the Euclidean unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


# -- regions ---------------------------------------------------------------


@dataclass(frozen=True)
class RegionDescriptor:
    """Closed region with a vectorized membership test.

    kind: "empty", "whole_space", "box_to_origin" (the box [0, corner]),
    "ball" (closed ball of given radius), or "neighbor_set" (the four
    nearest lattice sites around the center; the center is excluded).
    """

    kind: str
    center: tuple | None = None
    radius: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("empty", "whole_space", "box_to_origin", "ball", "neighbor_set"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind in ("box_to_origin", "ball", "neighbor_set") and self.center is None:
            raise ValueError(f"{self.kind} region needs a center")
        if self.kind == "ball" and (self.radius is None or self.radius < 0):
            raise ValueError("ball region needs a radius >= 0")

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "empty":
            return np.zeros(pts.shape[0], dtype=bool)
        if self.kind == "whole_space":
            return np.ones(pts.shape[0], dtype=bool)
        center = np.asarray(self.center, dtype=float)
        if self.kind == "box_to_origin":
            return np.all((pts >= 0.0) & (pts <= center), axis=1)
        if self.kind == "ball":
            return np.sum((pts - center) ** 2, axis=1) <= self.radius**2
        offsets = np.asarray(NEIGHBOR_OFFSETS, dtype=float)
        sites = center + offsets
        return np.any(np.all(pts[:, None, :] == sites[None, :, :], axis=2), axis=1)


def region_is_subset(inner: RegionDescriptor, outer: RegionDescriptor) -> bool:
    """Exact containment for the region kinds produced by the models."""
    if inner.kind == "empty" or outer.kind == "whole_space":
        return True
    if outer.kind == "empty":
        return False
    if inner.kind == "whole_space":
        return False
    if inner.kind == "box_to_origin" and outer.kind == "box_to_origin":
        return bool(
            np.all(np.asarray(inner.center, dtype=float) <= np.asarray(outer.center, dtype=float))
        )
    if inner.kind == "ball" and outer.kind == "ball":
        gap = np.linalg.norm(np.asarray(inner.center) - np.asarray(outer.center))
        return bool(gap + inner.radius <= outer.radius)
    if inner.kind == "neighbor_set" and outer.kind == "neighbor_set":
        return inner.center == outer.center
    if inner.kind == "neighbor_set" and outer.kind == "ball":
        offsets = np.asarray(NEIGHBOR_OFFSETS, dtype=float)
        sites = np.asarray(inner.center, dtype=float) + offsets
        return bool(np.all(outer.contains(sites)))
    raise ValueError(f"unsupported subset query {inner.kind!r} vs {outer.kind!r}")


# -- model definition ------------------------------------------------------


def lattice_indicator_weight(n_window: int) -> Callable[[np.ndarray], np.ndarray]:
    """Weight 1 on the inclusive box [-n, n]^2, 0 elsewhere."""

    def weight(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all(np.abs(pts) <= n_window, axis=1).astype(float)

    return weight


def rgg_log_weight(s: float) -> Callable[[np.ndarray], np.ndarray]:
    """Weight log(s/|x|) inside the ball of radius s around the origin."""

    def weight(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        norms = np.linalg.norm(pts, axis=1)
        out = np.zeros(pts.shape[0])
        inside = (norms <= s) & (norms > 0)
        out[inside] = np.log(s / norms[inside])
        # a point exactly at the origin has infinite weight in the formula;
        # it occurs with probability zero and is clipped to keep sums finite
        out[norms == 0] = np.log(s) - np.log(np.finfo(float).tiny)
        return out

    return weight


def rgg_indicator_weight(s: float) -> Callable[[np.ndarray], np.ndarray]:
    """Weight 1 on the closed ball of radius s, 0 elsewhere."""

    def weight(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return (np.linalg.norm(pts, axis=1) <= s).astype(float)

    return weight


@dataclass(frozen=True)
class ScoreModel:
    """One of the three concrete score models plus its parameters.

    p is the moment-surplus parameter in (0, 1]; it fixes the two derived
    decay exponents zeta = p/(40+10p) and beta = p/(32+4p) used by every
    bound ingredient.  weight_fn maps an (n, d) array to n nonnegative
    weights; rho is the interaction radius of the rgg model.
    """

    model_tag: str
    s: float
    d: int
    p: float = 1.0
    weight_fn: Callable[[np.ndarray], np.ndarray] | None = None
    rho: float | None = None
    window_n: int | None = None  # lattice weight window half-width

    def __post_init__(self) -> None:
        if self.model_tag not in MODEL_TAGS:
            raise ValueError(f"unknown model_tag {self.model_tag!r}")
        if not np.isfinite(self.s) or self.s <= 0:
            raise ValueError(f"s must be finite and > 0, got {self.s}")
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if self.model_tag == "lattice_isolated" and self.d != 2:
            raise ValueError("the lattice model is two-dimensional")
        if self.model_tag == "rgg_isolated" and (self.rho is None or self.rho <= 0):
            raise ValueError("the rgg model needs an interaction radius rho > 0")

    @property
    def zeta(self) -> float:
        return self.p / (40.0 + 10.0 * self.p)

    @property
    def beta(self) -> float:
        return self.p / (32.0 + 4.0 * self.p)

    def weight(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.weight_fn is None:
            return np.ones(pts.shape[0])
        return np.asarray(self.weight_fn(pts), dtype=float)

    def ball_mass(self) -> float:
        """Expected number of points in one interaction ball (rgg only)."""
        if self.model_tag != "rgg_isolated":
            raise ValueError("ball_mass applies to the rgg model only")
        return unit_ball_volume(self.d) * self.s * self.rho**self.d


def minimal_model(s: float, d: int, p: float = 1.0) -> ScoreModel:
    return ScoreModel(model_tag="minimal", s=s, d=d, p=p)


def lattice_model(window_n: int, s: float = 1.0, p: float = 1.0, weight_fn=None) -> ScoreModel:
    if weight_fn is None:
        weight_fn = lattice_indicator_weight(window_n)
    return ScoreModel(
        model_tag="lattice_isolated", s=s, d=2, p=p, weight_fn=weight_fn, window_n=window_n
    )


def rgg_model(s: float, d: int, rho: float, p: float = 1.0, weight_fn=None) -> ScoreModel:
    if weight_fn is None:
        weight_fn = rgg_log_weight(s)
    return ScoreModel(model_tag="rgg_isolated", s=s, d=d, p=p, weight_fn=weight_fn, rho=rho)


def default_intensity(model: ScoreModel) -> IntensitySpec:
    """Sampling window that makes every weighted point's score exact.

    minimal: the unit cube is the whole space.  lattice: the weight window
    grown by two sites, so each weighted site has its full neighbourhood
    sampled.  rgg: the box circumscribing the weight support, padded by rho
    so isolation of in-window points is decided exactly.
    """
    if model.model_tag == "minimal":
        return IntensitySpec(space_tag="cube", s=model.s, d=model.d)
    if model.model_tag == "lattice_isolated":
        n = model.window_n if model.window_n is not None else 10
        half = n + 2
        return IntensitySpec(
            space_tag="lattice", s=model.s, d=2, window=((-half, half), (-half, half))
        )
    half = model.s
    return IntensitySpec(
        space_tag="euclidean",
        s=model.s,
        d=model.d,
        window=tuple((-half, half) for _ in range(model.d)),
        pad=model.rho,
    )


# -- per-point score and region --------------------------------------------


def _count_others_below(model: ScoreModel, x: np.ndarray, config: PointConfiguration) -> int:
    """Points of `config` dominated by x, not counting one copy of x itself."""
    if config.n_entries == 0:
        return 0
    if _DOMINANCE_MODE == "strict":
        below = np.all(config.coords < x, axis=1)
        return config.mass_in(below)
    below = np.all(config.coords <= x, axis=1)
    count = config.mass_in(below)
    if config.multiplicity_at(x) > 0:
        count -= 1
    return count


def _count_others_in_ball(x: np.ndarray, rho: float, config: PointConfiguration) -> int:
    if config.n_entries == 0:
        return 0
    inside = np.sum((config.coords - x) ** 2, axis=1) <= rho**2
    count = config.mass_in(inside)
    if config.multiplicity_at(x) > 0:
        count -= 1
    return count


def _neighbor_mass(x: np.ndarray, config: PointConfiguration) -> int:
    if config.n_entries == 0:
        return 0
    offsets = np.asarray(NEIGHBOR_OFFSETS, dtype=float)
    sites = x + offsets
    hit = np.any(np.all(config.coords[:, None, :] == sites[None, :, :], axis=2), axis=1)
    return config.mass_in(hit)


def score(model: ScoreModel, x, config: PointConfiguration) -> float:
    """Score of the configuration point x.

    One copy of x is read as x itself; further copies at the same location
    count as competitors.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.d:
        raise ValueError(f"x has {x.shape[0]} coordinates, expected {model.d}")
    if config.multiplicity_at(x) == 0:
        raise ValueError("x must be a point of the configuration")
    if model.model_tag == "minimal":
        return 1.0 if _count_others_below(model, x, config) == 0 else 0.0
    if model.model_tag == "lattice_isolated":
        if _neighbor_mass(x, config) > 0:
            return 0.0
        return float(model.weight(x)[0])
    if _count_others_in_ball(x, model.rho, config) > 0:
        return 0.0
    return float(model.weight(x)[0])


def region(model: ScoreModel, x, config: PointConfiguration) -> RegionDescriptor:
    """Stabilization region of x in `config`, empty when the score dies.

    Membership is decided by the region geometry itself (closed boxes and
    balls), not by the dominance predicate, so this stays the reference
    answer under the verification fault hook.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.d:
        raise ValueError(f"x has {x.shape[0]} coordinates, expected {model.d}")
    if config.multiplicity_at(x) == 0:
        raise ValueError("x must be a point of the configuration")
    if model.model_tag == "minimal":
        box = RegionDescriptor(kind="box_to_origin", center=tuple(x))
        others = config.mass_in(box.contains(config.coords)) if config.n_entries else 0
        if config.multiplicity_at(x) > 0:
            others -= 1
        return box if others == 0 else RegionDescriptor(kind="empty")
    if model.model_tag == "lattice_isolated":
        nbrs = RegionDescriptor(kind="neighbor_set", center=tuple(int(v) for v in x))
        occupied = config.mass_in(nbrs.contains(config.coords)) if config.n_entries else 0
        return nbrs if occupied == 0 else RegionDescriptor(kind="empty")
    ball = RegionDescriptor(kind="ball", center=tuple(x), radius=model.rho)
    others = config.mass_in(ball.contains(config.coords)) if config.n_entries else 0
    if config.multiplicity_at(x) > 0:
        others -= 1
    return ball if others == 0 else RegionDescriptor(kind="empty")


def rate(model: ScoreModel, x, y) -> float:
    """Exponential decay budget for y entering the region of x.

    minimal: s*|x| (the product of the coordinates of x) when y lies below
    x, infinity otherwise.  lattice: 4s on the four neighbours of x.
    rgg: (unit ball volume)*s*rho^d within distance rho.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] != model.d or y.shape[0] != model.d:
        raise ValueError("x and y must match the model dimension")
    if model.model_tag == "minimal":
        if np.all(y <= x):
            return model.s * float(np.prod(x))
        return math.inf
    if model.model_tag == "lattice_isolated":
        diff = y - x
        if any(diff[0] == off[0] and diff[1] == off[1] for off in NEIGHBOR_OFFSETS):
            return 4.0 * model.s
        return math.inf
    if np.sum((y - x) ** 2) <= model.rho**2:
        return model.ball_mass()
    return math.inf


# -- whole-configuration statistic ------------------------------------------


@dataclass(frozen=True)
class StatisticValue:
    value: float
    point_count: int
    scored_count: int


def _minimal_entry_mask(coords: np.ndarray, mults: np.ndarray) -> np.ndarray:
    """Boolean mask of entries that are minimal points of the multiset.

    Rows are assumed lexicographically sorted and unique (canonical form).
    An entry with multiplicity >= 2 is never minimal: its copies dominate
    each other.  Entries of any multiplicity still dominate others.
    """
    n, d = coords.shape
    if n == 0:
        return np.zeros(0, dtype=bool)
    strict = _DOMINANCE_MODE == "strict"
    if d == 2 and not strict:
        # sweep in lex order; a row is dominated iff some earlier row has
        # smaller-or-equal second coordinate (first coordinates are already
        # ordered, ties resolved by the second-coordinate sort)
        prev_min = np.minimum.accumulate(coords[:, 1])
        dominated = np.empty(n, dtype=bool)
        dominated[0] = False
        dominated[1:] = prev_min[:-1] <= coords[1:, 1]
        return ~dominated & (mults == 1)
    # general-d sweep holding the staircase of minima found so far
    minimal = np.zeros(n, dtype=bool)
    stair = np.empty((0, d))
    for i in range(n):
        row = coords[i]
        if stair.shape[0]:
            if strict:
                dominated = bool(np.any(np.all(stair < row, axis=1)))
            else:
                dominated = bool(np.any(np.all(stair <= row, axis=1)))
        else:
            dominated = False
        if not dominated:
            minimal[i] = True
            stair = np.concatenate([stair, row.reshape(1, -1)], axis=0)
    return minimal & (mults == 1)


def count_minimal_fast(points, d: int | None = None) -> int:
    """Number of minimal points of a finite multiset (duplicates allowed).

    d=2 runs a vectorized sort-and-sweep; higher dimensions sweep the sorted
    rows against the staircase of minima found so far, which plays the role
    of the lower-dimensional dominance structure.
    """
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return 0
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if d is not None and pts.shape[1] != d:
        raise ValueError(f"points have {pts.shape[1]} coordinates, expected {d}")
    coords, mults = _canonicalize(pts, np.ones(pts.shape[0], dtype=np.int64))
    return int(np.count_nonzero(_minimal_entry_mask(coords, mults)))


def _rgg_isolated_mask(model: ScoreModel, config: PointConfiguration) -> np.ndarray:
    """Entries with multiplicity one and no other entry within distance rho."""
    crowded = config.mults >= 2
    if config.n_entries > 1:
        tree = cKDTree(config.coords)
        pairs = tree.query_pairs(r=model.rho, output_type="ndarray")
        if pairs.size:
            crowded = crowded.copy()
            crowded[pairs[:, 0]] = True
            crowded[pairs[:, 1]] = True
    return ~crowded


def _lattice_isolated_mask(config: PointConfiguration) -> np.ndarray:
    """Entries whose four neighbour sites are all unoccupied."""
    occupied = {tuple(row) for row in config.coords}
    out = np.empty(config.n_entries, dtype=bool)
    for i, row in enumerate(config.coords):
        x0, x1 = row
        out[i] = not any(
            (x0 + dx, x1 + dy) in occupied for dx, dy in NEIGHBOR_OFFSETS
        )
    return out


def statistic(model: ScoreModel, config: PointConfiguration) -> StatisticValue:
    """Sum of scores over all points of the configuration (with multiplicity).

    The empty configuration scores zero.  Points with zero weight contribute
    nothing, so padded sampling windows can be scored whole.
    """
    if config.dimension != model.d:
        raise ValueError(
            f"configuration dimension {config.dimension} does not match model {model.d}"
        )
    total_points = config.total_mass()
    if config.n_entries == 0:
        return StatisticValue(value=0.0, point_count=0, scored_count=0)
    if model.model_tag == "minimal":
        mask = _minimal_entry_mask(config.coords, config.mults)
        count = int(np.count_nonzero(mask))
        return StatisticValue(value=float(count), point_count=total_points, scored_count=count)
    if model.model_tag == "lattice_isolated":
        mask = _lattice_isolated_mask(config)
        weights = model.weight(config.coords)
        value = float(np.sum(weights[mask] * config.mults[mask]))
        scored = int(np.sum(config.mults[mask & (weights > 0)]))
        return StatisticValue(value=value, point_count=total_points, scored_count=scored)
    mask = _rgg_isolated_mask(model, config)
    weights = model.weight(config.coords)
    value = float(np.sum(weights[mask]))  # isolated entries have multiplicity 1
    scored = int(np.count_nonzero(mask & (weights > 0)))
    return StatisticValue(value=value, point_count=total_points, scored_count=scored)


def moment_bound(model: ScoreModel, x, extra: PointConfiguration | None = None) -> float:
    """Uniform score-magnitude bound at x, valid with up to 7 extra points.

    For the three concrete models the bound does not depend on the extra
    points (scores are indicators times a deterministic weight); the
    argument is validated and kept for interface parity.
    """
    if extra is not None and extra.total_mass() > 7:
        raise ValueError("moment bound is certified for at most 7 extra points")
    x = np.asarray(x, dtype=float).reshape(-1)
    if model.model_tag == "minimal":
        return 1.0
    return float(model.weight(x)[0])
