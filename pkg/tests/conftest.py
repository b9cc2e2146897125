from __future__ import annotations

import numpy as np
import pytest

from region_stabilize.empirics import run_ensemble
from region_stabilize.pointproc import (
    PointConfiguration,
    SeedSpec,
    add,
    restrict,
    sample_poisson,
)
from region_stabilize.scores import (
    default_intensity,
    lattice_model,
    minimal_model,
    region,
    rgg_model,
    score,
)


def within_se(value: float, target: float, se: float, k: float = 4.0) -> bool:
    """k-standard-error agreement with a tiny floor for exact oracles."""
    return abs(value - target) <= k * se + 1e-12


def brute_minimal_count(points) -> int:
    """Quadratic dominance scan: a point is minimal iff it dominates no other.

    Dominance is coordinatewise non-strict, so coincident duplicates
    dominate each other and drop out.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    count = 0
    for i in range(n):
        below = np.all(pts[i] >= pts, axis=1)
        below[i] = False
        if not below.any():
            count += 1
    return count


def three_models():
    """One small instance per model, sized so configs hold a few dozen points."""
    return {
        "minimal": minimal_model(s=30.0, d=2),
        "lattice": lattice_model(window_n=3, s=0.4),
        "rgg": rgg_model(s=3.0, d=2, rho=0.6),
    }


def sampled_config(model, index: int, base_seed: int = 90) -> PointConfiguration:
    return sample_poisson(default_intensity(model), SeedSpec(base_seed, index))


def random_location(model, rng: np.random.Generator):
    if model.model_tag == "minimal":
        return tuple(rng.uniform(0.0, 1.0, size=model.d))
    if model.model_tag == "lattice_isolated":
        half = (model.window_n or 3) + 2
        return tuple(float(v) for v in rng.integers(-half, half + 1, size=2))
    half = model.s
    return tuple(rng.uniform(-half, half, size=model.d))


def occupied_location(config: PointConfiguration, rng: np.random.Generator):
    k = int(rng.integers(config.n_entries))
    return tuple(float(v) for v in config.coords[k])


def thinned(config: PointConfiguration, keep_mask, keep_point=None) -> PointConfiguration:
    """Sub-configuration keeping masked entries (and one copy of keep_point)."""
    coords = config.coords[keep_mask]
    mults = config.mults[keep_mask]
    out = PointConfiguration.from_points(
        coords, mults, dimension=config.dimension, space_tag=config.space_tag
    )
    if keep_point is not None and out.multiplicity_at(keep_point) == 0:
        out = add(out, keep_point, 1)
    return out


# -- shared property loops (unit tests run them small, acceptance in full) ---


def check_restriction_invariance(model, n_cases: int, seed: int = 11) -> int:
    """score(x, M) must equal score over the restriction to region(x, M)."""
    rng = np.random.default_rng(seed)
    done = 0
    i = 0
    while done < n_cases:
        config = sampled_config(model, i)
        i += 1
        if config.n_entries == 0:
            continue
        x = occupied_location(config, rng)
        reg = region(model, x, config)
        if reg.kind == "empty":
            # score is already decided (zero); restriction adds nothing
            assert score(model, x, config) == 0.0
            done += 1
            continue
        cut = restrict(config, reg)
        if cut.multiplicity_at(x) == 0:
            cut = add(cut, x, 1)  # neighbor-set regions exclude the center
        assert score(model, x, config) == score(model, x, cut)
        done += 1
    return done


def check_region_monotone(model, n_cases: int, seed: int = 12) -> int:
    """Adding points can only shrink the region (drop to empty)."""
    from region_stabilize.scores import region_is_subset

    rng = np.random.default_rng(seed)
    done = 0
    i = 0
    while done < n_cases:
        big = sampled_config(model, i, base_seed=91)
        i += 1
        if big.n_entries == 0:
            continue
        x = occupied_location(big, rng)
        keep = rng.random(big.n_entries) < 0.5
        small = thinned(big, keep, keep_point=x)
        assert region_is_subset(region(model, x, big), region(model, x, small))
        done += 1
    return done


def check_score_sandwich(model, n_cases: int, seed: int = 13) -> int:
    """Equal scores at the ends of a nested pair pin every middle config."""
    rng = np.random.default_rng(seed)
    done = 0
    i = 0
    while done < n_cases:
        big = sampled_config(model, i, base_seed=92)
        i += 1
        if big.n_entries < 2:
            continue
        x = occupied_location(big, rng)
        keep = rng.random(big.n_entries) < 0.4
        small = thinned(big, keep, keep_point=x)
        if score(model, x, small) != score(model, x, big):
            continue
        mid_keep = keep | (rng.random(big.n_entries) < 0.5)
        mid = thinned(big, mid_keep, keep_point=x)
        assert score(model, x, mid) == score(model, x, big)
        done += 1
    return done


def check_first_difference_decomposition(
    model, n_cases: int, seed: int = 14, exact: bool = True
) -> int:
    """Two-evaluation difference equals newcomer score plus per-point changes.

    Existing entries keep their old multiplicity inside the sum; the added
    point contributes exactly one score term, which handles a probe landing
    on an occupied site.  Integer-valued scores compare exactly; float
    weights get a relative tolerance for summation-order rounding.
    """
    import math

    from region_stabilize.malliavin import diff1

    rng = np.random.default_rng(seed)
    done = 0
    i = 0
    while done < n_cases:
        config = sampled_config(model, i, base_seed=93)
        i += 1
        y = random_location(model, rng)
        grown = add(config, y, 1)
        per_point = sum(
            float(m) * (score(model, tuple(pt), grown) - score(model, tuple(pt), config))
            for pt, m in zip(config.coords, config.mults)
        )
        rhs = score(model, y, grown) + per_point
        lhs = diff1(model, config, y).value
        if exact:
            assert lhs == rhs
        else:
            assert math.isclose(lhs, rhs, rel_tol=1e-9, abs_tol=1e-9)
        done += 1
    return done


def check_difference_confinement(model, n_cases: int, seed: int = 15) -> int:
    """Differences vanish unless the probe points enter the region."""
    from region_stabilize.malliavin import verify_dnull

    rng = np.random.default_rng(seed)
    done = 0
    i = 0
    while done < n_cases:
        config = sampled_config(model, i, base_seed=94)
        i += 1
        x = random_location(model, rng)
        y = random_location(model, rng)
        y1 = random_location(model, rng)
        y2 = random_location(model, rng)
        assert verify_dnull(model, config, x, y, y1, y2)
        done += 1
    return done


MINIMAL_SWEEP_GRID = (1e2, 1e3, 1e4, 1e5)
SWEEP_REPS = 5000


@pytest.fixture(scope="session")
def minimal_sweep():
    """Shared minimal-model ensembles over the scale grid, 5000 replicates each."""
    out = {}
    for i, s in enumerate(MINIMAL_SWEEP_GRID):
        model = minimal_model(s=s, d=2)
        out[s] = run_ensemble(model, n_reps=SWEEP_REPS, base_seed=101 + i)
    return out
