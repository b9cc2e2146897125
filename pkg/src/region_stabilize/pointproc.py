"""Point configurations and Poisson sampling on the three carrier spaces.

A configuration is a finite counting measure: a list of (point, multiplicity)
entries with multiplicity >= 1.  Coincident points are always merged into a
single entry, so multiplicity is the one canonical way to represent repeats.
Configurations are immutable after construction; add/restrict return new
objects.

Sampling is deterministic given a (base_seed, replicate_index) pair.  Each
replicate gets its own counter-based stream, so results are independent of
thread count and evaluation order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
# Weyl increment used to space replicate keys: floor(2**64 / golden ratio).
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

SPACE_TAGS = ("cube", "lattice", "euclidean")


def _splitmix64_finalizer(z: int) -> int:
    """SplitMix64 output mix: bijective avalanche on 64-bit integers."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


@dataclass(frozen=True)
class SeedSpec:
    """Reproducibility contract: one stream per (base_seed, replicate_index)."""

    base_seed: int
    replicate_index: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.base_seed <= MASK64:
            raise ValueError(f"base_seed must fit in 64 bits, got {self.base_seed}")
        if self.replicate_index < 0:
            raise ValueError(f"replicate_index must be >= 0, got {self.replicate_index}")


def replicate_seed(spec: SeedSpec) -> int:
    """Derive the 64-bit stream key for one replicate.

    The key is the SplitMix64 finalizer applied to
    base_seed XOR (GOLDEN_GAMMA * (replicate_index + 1)) mod 2**64.
    This mapping is frozen: archived CSV outputs depend on it byte for byte.
    """
    mixed = spec.base_seed ^ ((GOLDEN_GAMMA * (spec.replicate_index + 1)) & MASK64)
    return _splitmix64_finalizer(mixed)


def generator_for(spec: SeedSpec) -> np.random.Generator:
    """Counter-based generator keyed by the derived replicate seed.

    Philox is keyed directly (no entropy, no wall clock), so streams are
    identical across platforms and across runs.  Poisson counts draw from
    this generator via inversion below mean 10 and transformed rejection
    above, both fixed algorithms.
    """
    return np.random.Generator(np.random.Philox(key=replicate_seed(spec)))


def _as_window(window, d: int) -> tuple[tuple[float, float], ...]:
    win = tuple((float(lo), float(hi)) for lo, hi in window)
    if len(win) != d:
        raise ValueError(f"window must have {d} axes, got {len(win)}")
    for lo, hi in win:
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
            raise ValueError(f"empty or non-finite window axis ({lo}, {hi})")
    return win


@dataclass(frozen=True)
class IntensitySpec:
    """Where and how densely to throw Poisson points.

    cube       -- unit cube [0,1]^d, intensity s * Lebesgue.
    lattice    -- integer sites in an inclusive box window, i.i.d. Poisson(s)
                  multiplicity per site.
    euclidean  -- homogeneous rate s on the window grown by `pad` on every
                  side; the pad keeps scores of window points exact under
                  finite-range interactions.
    """

    space_tag: str
    s: float
    d: int
    window: tuple[tuple[float, float], ...] | None = None
    pad: float = 0.0

    def __post_init__(self) -> None:
        if self.space_tag not in SPACE_TAGS:
            raise ValueError(f"unknown space_tag {self.space_tag!r}")
        if not np.isfinite(self.s) or self.s < 0:
            raise ValueError(f"intensity scale must be finite and >= 0, got {self.s}")
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.space_tag == "cube":
            if self.window is not None:
                raise ValueError("cube space has the implicit window [0,1]^d")
        else:
            if self.window is None:
                raise ValueError(f"{self.space_tag} space needs an explicit window")
            object.__setattr__(self, "window", _as_window(self.window, self.d))
        if self.pad < 0:
            raise ValueError(f"pad must be >= 0, got {self.pad}")
        if self.pad > 0 and self.space_tag != "euclidean":
            raise ValueError("pad applies to the euclidean space only")

    def sampling_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) arrays of the region actually sampled (pad included)."""
        if self.space_tag == "cube":
            return np.zeros(self.d), np.ones(self.d)
        lo = np.array([w[0] for w in self.window], dtype=float)
        hi = np.array([w[1] for w in self.window], dtype=float)
        if self.space_tag == "euclidean":
            lo -= self.pad
            hi += self.pad
        return lo, hi


def _canonicalize(coords: np.ndarray, mults: np.ndarray):
    """Sort rows lexicographically and merge coincident points."""
    if coords.shape[0] == 0:
        return coords.reshape(0, coords.shape[1]), mults.astype(np.int64)
    order = np.lexsort(coords.T[::-1])
    coords = coords[order]
    mults = mults[order]
    if coords.shape[0] > 1:
        dup = np.all(coords[1:] == coords[:-1], axis=1)
        if dup.any():
            # segment-sum multiplicities of equal rows
            starts = np.concatenate(([True], ~dup))
            seg = np.cumsum(starts) - 1
            merged = np.zeros(seg[-1] + 1, dtype=np.int64)
            np.add.at(merged, seg, mults)
            coords = coords[starts]
            mults = merged
    return coords, mults


@dataclass(frozen=True)
class PointConfiguration:
    """Finite counting measure: unique sorted rows plus multiplicities."""

    coords: np.ndarray = field(repr=False)
    mults: np.ndarray = field(repr=False)
    dimension: int
    space_tag: str

    @classmethod
    def from_points(cls, points, mults=None, *, dimension=None, space_tag="cube"):
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            if dimension is None:
                raise ValueError("empty configuration needs an explicit dimension")
            pts = pts.reshape(0, dimension)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.ndim != 2:
            raise ValueError("points must form an (n, d) array")
        d = pts.shape[1] if dimension is None else dimension
        if pts.shape[1] != d:
            raise ValueError(f"points have {pts.shape[1]} coordinates, expected {d}")
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        if mults is None:
            m = np.ones(pts.shape[0], dtype=np.int64)
        else:
            m = np.asarray(mults, dtype=np.int64)
            if m.shape != (pts.shape[0],):
                raise ValueError("multiplicities must align with points")
            if (m < 1).any():
                raise ValueError("multiplicities must be >= 1")
        if space_tag not in SPACE_TAGS:
            raise ValueError(f"unknown space_tag {space_tag!r}")
        pts, m = _canonicalize(pts, m)
        pts.setflags(write=False)
        m.setflags(write=False)
        return cls(coords=pts, mults=m, dimension=d, space_tag=space_tag)

    @classmethod
    def empty(cls, dimension: int, space_tag: str = "cube"):
        return cls.from_points([], dimension=dimension, space_tag=space_tag)

    # -- measure-style queries -------------------------------------------

    @property
    def n_entries(self) -> int:
        return self.coords.shape[0]

    def total_mass(self) -> int:
        return int(self.mults.sum())

    def multiplicity_at(self, point) -> int:
        point = np.asarray(point, dtype=float)
        if self.n_entries == 0:
            return 0
        hit = np.all(self.coords == point, axis=1)
        idx = np.nonzero(hit)[0]
        return int(self.mults[idx[0]]) if idx.size else 0

    def mass_in(self, mask: np.ndarray) -> int:
        """Total multiplicity of entries selected by a boolean row mask."""
        return int(self.mults[mask].sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointConfiguration):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.space_tag == other.space_tag
            and self.coords.shape == other.coords.shape
            and bool(np.all(self.coords == other.coords))
            and bool(np.all(self.mults == other.mults))
        )

    def __hash__(self):
        return hash((self.dimension, self.space_tag, self.coords.tobytes(), self.mults.tobytes()))


def add(config: PointConfiguration, point, multiplicity: int = 1) -> PointConfiguration:
    """New configuration with `multiplicity` extra copies of `point`."""
    if multiplicity < 1:
        raise ValueError(f"multiplicity must be >= 1, got {multiplicity}")
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.shape[0] != config.dimension:
        raise ValueError(
            f"point has {point.shape[0]} coordinates, expected {config.dimension}"
        )
    coords = np.concatenate([config.coords, point.reshape(1, -1)], axis=0)
    mults = np.concatenate([config.mults, [multiplicity]])
    return PointConfiguration.from_points(
        coords, mults, dimension=config.dimension, space_tag=config.space_tag
    )


def restrict(config: PointConfiguration, region) -> PointConfiguration:
    """Restriction of the measure to a region (entries kept whole)."""
    if config.n_entries == 0:
        return config
    mask = region.contains(config.coords)
    return PointConfiguration.from_points(
        config.coords[mask],
        config.mults[mask],
        dimension=config.dimension,
        space_tag=config.space_tag,
    )


def leq(left: PointConfiguration, right: PointConfiguration) -> bool:
    """Componentwise multiplicity order: left <= right as measures."""
    if left.dimension != right.dimension:
        raise ValueError("configurations live in different dimensions")
    if left.total_mass() > right.total_mass():
        return False
    lookup = {tuple(row): int(m) for row, m in zip(right.coords, right.mults)}
    for row, m in zip(left.coords, left.mults):
        if lookup.get(tuple(row), 0) < m:
            return False
    return True


# -- sampling -------------------------------------------------------------


def sample_poisson(intensity: IntensitySpec, seed: SeedSpec) -> PointConfiguration:
    """Draw one Poisson configuration for the given intensity.

    cube/euclidean: N ~ Poisson(s * volume) points placed uniformly in the
    (padded) window.  lattice: independent Poisson(s) multiplicity per site;
    sites with multiplicity zero are absent from the configuration.
    """
    rng = generator_for(seed)
    lo, hi = intensity.sampling_bounds()
    if intensity.space_tag in ("cube", "euclidean"):
        volume = float(np.prod(hi - lo))
        n = int(rng.poisson(intensity.s * volume))
        pts = lo + rng.random((n, intensity.d)) * (hi - lo)
        return PointConfiguration.from_points(
            pts, dimension=intensity.d, space_tag=intensity.space_tag
        )
    # lattice: enumerate sites in the inclusive integer box
    axes = [np.arange(np.ceil(lo_i), np.floor(hi_i) + 1) for lo_i, hi_i in zip(lo, hi)]
    counts_shape = tuple(len(a) for a in axes)
    counts = rng.poisson(intensity.s, size=counts_shape)
    occupied = np.nonzero(counts)
    if len(occupied[0]) == 0:
        return PointConfiguration.empty(intensity.d, space_tag="lattice")
    pts = np.stack([axes[i][occupied[i]] for i in range(intensity.d)], axis=1)
    return PointConfiguration.from_points(
        pts, counts[occupied], dimension=intensity.d, space_tag="lattice"
    )


# -- serialization --------------------------------------------------------


def config_to_csv(config: PointConfiguration) -> str:
    """Canonical CSV: header coord_1..coord_d,multiplicity; sorted rows."""
    buf = io.StringIO()
    header = ",".join(f"coord_{i + 1}" for i in range(config.dimension))
    buf.write(header + ",multiplicity\n")
    for row, m in zip(config.coords, config.mults):
        buf.write(",".join(repr(float(v)) for v in row) + f",{int(m)}\n")
    return buf.getvalue()


def config_from_csv(text: str, space_tag: str = "cube") -> PointConfiguration:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("missing header row")
    header = lines[0].split(",")
    if header[-1] != "multiplicity" or not all(
        h == f"coord_{i + 1}" for i, h in enumerate(header[:-1])
    ):
        raise ValueError(f"malformed header {lines[0]!r}")
    d = len(header) - 1
    pts, mults = [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != d + 1:
            raise ValueError(f"row has {len(cells)} cells, expected {d + 1}")
        pts.append([float(c) for c in cells[:-1]])
        mults.append(int(cells[-1]))
    return PointConfiguration.from_points(
        pts if pts else [], mults if mults else None, dimension=d, space_tag=space_tag
    )
