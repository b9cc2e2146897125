"""Command-line front end: simulation, bound evaluation, verification.

Four commands share one flat configuration: `simulate` writes a replicate
CSV plus a summary document, `bound` evaluates the normalized distance
bounds at one scale, `sweep` repeats that over an s grid, and `verify`
runs the cross-module property suite with TAP output.  All randomness
flows from --seed; reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import bounds, empirics, malliavin, pointproc, scores

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_IO = 3


@dataclass
class RunConfig:
    """Every tunable of every command, with conservative defaults.

    Values come from three layers: dataclass defaults, then a key=value
    config file, then command-line flags.
    """

    command: str = ""
    model_tag: str = "minimal"
    s: float = 100.0
    d: int = 2
    p: float = 1.0
    n_reps: int = 100
    base_seed: int = 0
    nodes_per_axis: int = 64
    mc_samples: int = 200_000
    window_n: int = 10
    rho: float = 0.0  # 0 means: choose the radius with unit ball mass
    weight: str = "default"
    var_source: str = "auto"
    var_value: float = 0.0
    threads: int = 0  # 0 means: REGION_STABILIZE_THREADS or serial
    s_grid: str = ""
    filter: str = ""
    inject_fault: bool = False
    out: str = ""
    summary: str = ""


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def load_config_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment; keys match RunConfig."""
    known = {f.name: f.type for f in fields(RunConfig)}
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, value)
    return out


def _coerce(key: str, value: str):
    proto = getattr(RunConfig(), key)
    if isinstance(proto, bool):
        low = value.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ValueError(f"boolean key {key!r} got {value!r}")
    if isinstance(proto, int):
        return int(value)
    if isinstance(proto, float):
        return float(value)
    return value


_MODEL_CHOICES = ("minimal", "lattice", "rgg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="region-stabilize",
        description="simulate region-stabilizing score sums and evaluate "
        "their normal-approximation bounds",
    )
    parser.add_argument("--config", default=None, help="key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_model: bool = True):
        if with_model:
            p.add_argument("--model", dest="model_tag", choices=_MODEL_CHOICES, default=None)
            p.add_argument("--s", type=float, default=None, help="intensity scale")
            p.add_argument("--d", type=int, default=None, help="dimension")
            p.add_argument("--p", type=float, default=None, help="moment surplus in (0,1]")
            p.add_argument("--window-n", dest="window_n", type=int, default=None,
                           help="lattice weight window half-width")
            p.add_argument("--rho", type=float, default=None,
                           help="rgg interaction radius (default: unit ball mass)")
            p.add_argument("--weight", choices=("default", "indicator", "log"), default=None,
                           help="rgg weight profile")
        p.add_argument("--seed", dest="base_seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (default REGION_STABILIZE_THREADS)")

    p_sim = sub.add_parser("simulate", help="run replicates, write samples CSV + summary")
    common(p_sim)
    p_sim.add_argument("--reps", dest="n_reps", type=int, default=None)
    p_sim.add_argument("--out", default=None, help="samples CSV path")
    p_sim.add_argument("--summary", default=None, help="summary JSON path")

    p_bound = sub.add_parser("bound", help="evaluate the normalized distance bounds")
    common(p_bound)
    p_bound.add_argument("--nodes", dest="nodes_per_axis", type=int, default=None)
    p_bound.add_argument("--mc-samples", dest="mc_samples", type=int, default=None)
    p_bound.add_argument("--var-source", dest="var_source", default=None,
                         choices=("auto", "mecke", "exact", "simulate", "supplied"))
    p_bound.add_argument("--var-value", dest="var_value", type=float, default=None)
    p_bound.add_argument("--reps", dest="n_reps", type=int, default=None,
                         help="replicates when var-source=simulate")
    p_bound.add_argument("--out", default=None, help="report JSON path")

    p_sweep = sub.add_parser("sweep", help="bound reports over an s grid")
    common(p_sweep)
    p_sweep.add_argument("--s-grid", dest="s_grid", default=None,
                         help="comma-separated intensity scales")
    p_sweep.add_argument("--nodes", dest="nodes_per_axis", type=int, default=None)
    p_sweep.add_argument("--mc-samples", dest="mc_samples", type=int, default=None)
    p_sweep.add_argument("--var-source", dest="var_source", default=None,
                         choices=("auto", "mecke", "exact", "simulate", "supplied"))
    p_sweep.add_argument("--reps", dest="n_reps", type=int, default=None)
    p_sweep.add_argument("--out", default=None, help="sweep JSON path")

    p_verify = sub.add_parser("verify", help="run the cross-module property suite")
    common(p_verify, with_model=False)
    p_verify.add_argument("--filter", default=None, help="run checks whose name contains this")
    p_verify.add_argument("--inject-fault", dest="inject_fault",
                          action="store_const", const=True, default=None,
                          help=argparse.SUPPRESS)
    return parser


def resolve_config(argv) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = RunConfig()
    if ns.config:
        for key, value in load_config_file(ns.config).items():
            setattr(cfg, key, value)
    for key, value in vars(ns).items():
        if key == "config" or value is None:
            continue
        setattr(cfg, key, value)
    return cfg


def build_model(cfg: RunConfig) -> scores.ScoreModel:
    if cfg.model_tag == "minimal":
        return scores.minimal_model(s=cfg.s, d=cfg.d, p=cfg.p)
    if cfg.model_tag == "lattice":
        return scores.lattice_model(window_n=cfg.window_n, s=cfg.s, p=cfg.p)
    if cfg.model_tag == "rgg":
        rho = cfg.rho
        if rho <= 0:
            # unit expected ball occupancy keeps isolation non-trivial at any s
            rho = (1.0 / (scores.unit_ball_volume(cfg.d) * cfg.s)) ** (1.0 / cfg.d)
        weight_fn = None
        if cfg.weight == "indicator":
            weight_fn = scores.rgg_indicator_weight(cfg.s)
        elif cfg.weight == "log":
            weight_fn = scores.rgg_log_weight(cfg.s)
        return scores.rgg_model(s=cfg.s, d=cfg.d, rho=rho, p=cfg.p, weight_fn=weight_fn)
    raise ValueError(f"unknown model {cfg.model_tag!r}")


def _threads(cfg: RunConfig) -> int | None:
    return cfg.threads if cfg.threads > 0 else None


def _write_text(path: str, text: str) -> None:
    if not path:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def samples_csv(summary: empirics.EnsembleSummary) -> str:
    """Replicate table; floats via repr so reruns are byte-identical."""
    lines = ["replicate,seed,statistic,point_count"]
    for i in range(summary.n_reps):
        lines.append(
            f"{i},{int(summary.seeds[i])},{float(summary.samples[i])!r},{int(summary.point_counts[i])}"
        )
    return "\n".join(lines) + "\n"


def summary_json(summary: empirics.EnsembleSummary) -> str:
    doc = {
        "n_reps": summary.n_reps,
        "mean": summary.mean,
        "var": summary.var,
        "dK_emp": None if summary.degenerate else summary.dk_emp,
        "dW_emp": None if summary.degenerate else summary.dw_emp,
        "se_mean": summary.se_mean,
        "se_var": summary.se_var,
        "degenerate": summary.degenerate,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_simulate(cfg: RunConfig) -> int:
    model = build_model(cfg)
    summary = empirics.run_ensemble(
        model,
        intensity=scores.default_intensity(model),
        n_reps=cfg.n_reps,
        base_seed=cfg.base_seed,
        n_threads=_threads(cfg),
    )
    _write_text(cfg.out, samples_csv(summary))
    if cfg.summary:
        _write_text(cfg.summary, summary_json(summary))
    return EXIT_OK


def _variance_for(cfg: RunConfig, model: scores.ScoreModel) -> tuple[float, str]:
    source = cfg.var_source
    if source == "auto":
        if model.model_tag == "minimal" and model.d == 2:
            source = "mecke"
        elif model.model_tag == "lattice_isolated":
            source = "exact"
        else:
            source = "simulate"
    if source == "supplied":
        return cfg.var_value, "supplied"
    if source == "mecke":
        return empirics.variance_mecke_minimal(model.s, model.d), "mecke"
    if source == "exact":
        return bounds.variance_exact_lattice(model), "exact"
    if source == "simulate":
        summary = empirics.run_ensemble(
            model,
            n_reps=max(cfg.n_reps, 2),
            base_seed=cfg.base_seed,
            n_threads=_threads(cfg),
        )
        return summary.var, "simulate"
    raise ValueError(f"unknown var_source {source!r}")


def _one_report(cfg: RunConfig, s: float) -> dict:
    model_cfg = RunConfig(**{**vars(cfg), "s": s})
    model = build_model(model_cfg)
    if model.s < 1.0:
        raise ValueError(f"the distance bounds need s >= 1, got {model.s}")
    terms = bounds.outer_integrals(
        model,
        quad=bounds.QuadratureSpec(nodes_per_axis=cfg.nodes_per_axis),
        mc=bounds.McSpec(n_samples=cfg.mc_samples, base_seed=cfg.base_seed),
    )
    var, var_source = _variance_for(model_cfg, model)
    report = bounds.assemble_bound(model, terms, var, var_source=var_source)
    return report.to_json_dict()


def cmd_bound(cfg: RunConfig) -> int:
    doc = _one_report(cfg, cfg.s)
    _write_text(cfg.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    if not cfg.s_grid.strip():
        raise ValueError("sweep needs --s-grid")
    grid = sorted(float(tok) for tok in cfg.s_grid.split(",") if tok.strip())
    if len(grid) < 2:
        raise ValueError("sweep needs at least two scales")
    reports = [_one_report(cfg, s) for s in grid]
    doc = {"s_grid": grid, "reports": reports}
    _write_text(cfg.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    checks = [c for c in verification_checks() if cfg.filter in c[0]]
    if not checks:
        raise ValueError(f"no checks match filter {cfg.filter!r}")
    print(f"1..{len(checks)}")
    failures = 0
    if cfg.inject_fault:
        scores.set_dominance_mode("strict")
    try:
        for i, (name, fn) in enumerate(checks, 1):
            try:
                fn()
            except AssertionError as exc:
                failures += 1
                print(f"not ok {i} — {name}: {exc}")
            except Exception as exc:  # noqa: BLE001 — a crash is a failed check
                failures += 1
                print(f"not ok {i} — {name}: {type(exc).__name__}: {exc}")
            else:
                print(f"ok {i} — {name}")
    finally:
        if cfg.inject_fault:
            scores.set_dominance_mode("weak")
    return EXIT_OK if failures == 0 else EXIT_CHECK_FAILED


# -- the verification suite ---------------------------------------------------


def _check_sampling_determinism():
    spec = pointproc.IntensitySpec(space_tag="cube", s=50.0, d=2)
    a = pointproc.sample_poisson(spec, pointproc.SeedSpec(7, 3))
    b = pointproc.sample_poisson(spec, pointproc.SeedSpec(7, 3))
    c = pointproc.sample_poisson(spec, pointproc.SeedSpec(7, 4))
    assert np.array_equal(a.coords, b.coords) and np.array_equal(a.mults, b.mults), (
        "same seed produced different configurations"
    )
    assert a.coords.shape != c.coords.shape or not np.array_equal(a.coords, c.coords), (
        "distinct replicate indices produced identical draws"
    )


def _check_canonical_order():
    coords = np.array([[0.5, 0.5], [0.1, 0.9], [0.5, 0.5]])
    config = pointproc.PointConfiguration.from_points(coords, space_tag="cube")
    assert config.n_entries == 2, f"expected 2 entries, got {config.n_entries}"
    assert config.total_mass() == 3, "duplicate rows must merge into multiplicity"
    order = np.lexsort(config.coords.T[::-1])
    assert np.array_equal(order, np.arange(config.n_entries)), "entries not in lex order"


def _check_seed_finalizer():
    golden = 0x9E3779B97F4A7C15
    z = (11 ^ (golden * 4 % 2**64)) % 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 % 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB % 2**64
    z = z ^ (z >> 31)
    got = pointproc.replicate_seed(pointproc.SeedSpec(base_seed=11, replicate_index=3))
    assert got == z, f"replicate seed {got} != reference {z}"


def _check_duplicates_not_minimal():
    model = scores.minimal_model(s=10.0, d=2)
    config = pointproc.PointConfiguration.from_points(
        np.array([[0.4, 0.4], [0.4, 0.4]]), space_tag="cube"
    )
    val = scores.statistic(model, config)
    assert val.value == 0.0, f"coincident duplicates scored {val.value}, want 0"
    assert scores.score(model, (0.4, 0.4), config) == 0.0, (
        "a duplicated point claimed to be minimal"
    )


def _check_dominance_ties():
    model = scores.minimal_model(s=10.0, d=2)
    config = pointproc.PointConfiguration.from_points(
        np.array([[0.5, 0.2], [0.5, 0.7]]), space_tag="cube"
    )
    val = scores.statistic(model, config)
    assert val.value == 1.0, (
        f"tied first coordinates: expected one minimal point, got {val.value}"
    )
    fast = scores.count_minimal_fast(config.coords)
    assert fast == 1, f"count_minimal_fast got {fast} on a tied pair"


def _check_first_difference_confined():
    rng = np.random.default_rng(2024)
    for model in _small_models():
        intensity = scores.default_intensity(model)
        for rep in range(25):
            config = pointproc.sample_poisson(intensity, pointproc.SeedSpec(55, rep))
            lo, hi = intensity.sampling_bounds()
            x = lo + (hi - lo) * rng.random(model.d)
            y = lo + (hi - lo) * rng.random(model.d)
            if model.model_tag == "lattice_isolated":
                x, y = np.floor(x), np.floor(y)
            ok = malliavin.verify_dnull(model, config, x, y=y, y1=y, y2=x)
            assert ok, f"{model.model_tag}: difference leaked outside the region"


def _check_second_difference_symmetry():
    rng = np.random.default_rng(77)
    for model in _small_models():
        intensity = scores.default_intensity(model)
        config = pointproc.sample_poisson(intensity, pointproc.SeedSpec(56, 0))
        lo, hi = intensity.sampling_bounds()
        for _ in range(20):
            x1 = lo + (hi - lo) * rng.random(model.d)
            x2 = lo + (hi - lo) * rng.random(model.d)
            if model.model_tag == "lattice_isolated":
                x1, x2 = np.floor(x1), np.floor(x2)
            a = malliavin.diff2(model, config, x1, x2)
            b = malliavin.diff2(model, config, x2, x1)
            assert a.value == b.value, f"{model.model_tag}: diff2 asymmetric"


def _check_second_difference_identity():
    rng = np.random.default_rng(123)
    for model in _small_models():
        intensity = scores.default_intensity(model)
        config = pointproc.sample_poisson(intensity, pointproc.SeedSpec(57, 1))
        lo, hi = intensity.sampling_bounds()
        for _ in range(20):
            x1 = lo + (hi - lo) * rng.random(model.d)
            x2 = lo + (hi - lo) * rng.random(model.d)
            if model.model_tag == "lattice_isolated":
                x1, x2 = np.floor(x1), np.floor(x2)
            with_x2 = pointproc.add(config, x2)
            lhs = malliavin.diff2(model, config, x1, x2).value
            rhs = malliavin.diff1(model, with_x2, x1).value - malliavin.diff1(
                model, config, x1
            ).value
            assert lhs == rhs, f"{model.model_tag}: difference identity broken"


def _check_kernel_scale_identity():
    for alpha in (0.25, 1.0 / 36.0):
        for y in ((0.2, 0.7), (0.05, 0.05)):
            a = bounds.minimal_c_exact(y, alpha, 300.0, 2)
            b = bounds.minimal_c_exact(y, 1.0, alpha * 300.0, 2) / alpha
            assert math.isclose(a, b, rel_tol=1e-12), f"scale identity off at {y}"


def _check_kernel_monotone():
    vals = [
        bounds.minimal_c_exact((t, t), 1.0, 50.0, 2) for t in (0.0, 0.2, 0.5, 0.9)
    ]
    assert all(x > y for x, y in zip(vals, vals[1:])), "kernel not decreasing upward"


def _check_mean_closed_form():
    mean = bounds.mean_minimal(200.0, 2)
    mc_mean, mc_se = bounds.mc_mean_minimal(200.0, 2, bounds.McSpec(n_samples=40_000, base_seed=5))
    assert abs(mean - mc_mean) < 4 * mc_se, (
        f"quadrature mean {mean:.4f} vs MC {mc_mean:.4f} (se {mc_se:.4f})"
    )


def _check_ks_delta():
    got = empirics.ks_distance([0.0])
    assert got == 0.5, f"delta-at-zero Kolmogorov distance {got}, want 0.5"


def _check_w1_delta():
    got = empirics.wasserstein1([0.0])
    want = math.sqrt(2.0 / math.pi)
    assert math.isclose(got, want, rel_tol=1e-12), f"delta W1 {got}, want {want}"


def _check_scaling_exact():
    fit = empirics.scaling_fit([(s, 3.0 * math.log(s) ** 2) for s in (10, 100, 1000, 10000)])
    assert abs(fit.exponent - 2.0) < 1e-9, f"exponent {fit.exponent}, want 2"
    assert fit.r_squared > 1 - 1e-12, f"r^2 {fit.r_squared}"


def _check_lattice_mean():
    model = scores.lattice_model(window_n=5, s=1.0)
    summary = empirics.run_ensemble(model, n_reps=400, base_seed=21)
    want = bounds.lattice_mean_value(model)
    z = abs(summary.mean - want) / summary.se_mean
    assert z < 4, f"lattice mean z-score {z:.2f} (sim {summary.mean:.3f}, sum {want:.3f})"


def _check_rgg_range():
    model = scores.rgg_model(s=4.0, d=2, rho=0.5, weight_fn=scores.rgg_indicator_weight(4.0))
    far = pointproc.PointConfiguration.from_points(
        np.array([[0.0, 0.0], [1.1, 0.0]]), space_tag="euclidean"
    )
    near = pointproc.PointConfiguration.from_points(
        np.array([[0.0, 0.0], [0.3, 0.0]]), space_tag="euclidean"
    )
    assert scores.statistic(model, far).value == 2.0, "distant points must stay isolated"
    assert scores.statistic(model, near).value == 0.0, "close points must deisolate"


def _check_bound_assembly():
    model = scores.minimal_model(s=10.0, d=2)
    report = bounds.assemble_bound(model, (1.0, 1.0, 1.0), var=1.0)
    assert report.dW_norm == 2.0, f"unit-term dW {report.dW_norm}, want 2"
    assert report.dK_norm == 6.0, f"unit-term dK {report.dK_norm}, want 6"


def _small_models() -> list[scores.ScoreModel]:
    return [
        scores.minimal_model(s=30.0, d=2),
        scores.lattice_model(window_n=3, s=0.4),
        scores.rgg_model(s=3.0, d=2, rho=0.6),
    ]


def verification_checks() -> list[tuple[str, object]]:
    return [
        ("sampling determinism across equal seeds", _check_sampling_determinism),
        ("configurations are canonical (sorted, merged)", _check_canonical_order),
        ("replicate seed matches the finalizer reference", _check_seed_finalizer),
        ("coincident duplicates are never minimal", _check_duplicates_not_minimal),
        ("dominance sandwich on tied coordinates", _check_dominance_ties),
        ("first difference confined to the region", _check_first_difference_confined),
        ("second difference is symmetric", _check_second_difference_symmetry),
        ("second difference equals the add-one identity", _check_second_difference_identity),
        ("kernel scale identity", _check_kernel_scale_identity),
        ("kernel decreases away from the origin", _check_kernel_monotone),
        ("closed-form mean matches Monte Carlo", _check_mean_closed_form),
        ("Kolmogorov distance of a point mass is one half", _check_ks_delta),
        ("Wasserstein distance of a point mass is sqrt(2/pi)", _check_w1_delta),
        ("scaling fit recovers an exact power law", _check_scaling_exact),
        ("lattice ensemble mean matches the exact sum", _check_lattice_mean),
        ("interaction radius bounds the rgg dependence", _check_rgg_range),
        ("bound assembly reproduces the unit-term values", _check_bound_assembly),
    ]


_COMMANDS = {
    "simulate": cmd_simulate,
    "bound": cmd_bound,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        return _COMMANDS[cfg.command](cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
