"""Command-line driver for the transport pipeline.

Each subcommand reads a self-contained JSON config, writes its outputs into
the --out directory, and finishes with a manifest recording the config hash,
seed, and library versions.  Outputs carry no timestamps, so identical
configs and seeds reproduce them byte for byte.

Exit codes: 0 success, 2 config error, 3 hypothesis failure, 4 numerical
failure, 5 statistical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .equilibrium import check_hypotheses, solve_equilibrium
from .errors import (
    BetaTransportError,
    ConfigurationError,
    HypothesisFailureError,
    NumericalFailureError,
    StatisticalFailureError,
)
from .flow import apply_map, build_transport_map, map_from_dict, map_to_dict
from .master_operator import invert_xi
from .potentials import Potential, interpolate
from .samplers import SamplerConfig, sample_spectra
from .statistics import (
    compare_local_statistics,
    rescaled_statistics_experiment,
    universality_experiment,
)
from .transport_fields import (
    build_field_set,
    check_field_equations,
    field_equation_residuals,
    residual_slope,
)

_DEFAULTS = {
    "degree": 64,
    "n_time": 17,
    "n_y": 48,
    "n_grid": 512,
    "density_points": 512,
    "grid_points": 401,
    "pad": 0.5,
    "n_samples": 1000,
    "method": "auto",
    "include_correction": True,
    "gap_orders": [1, 2],
    "edge_orders": [1],
    "n_boot": 200,
    "quantile": 0.99,
    "hist_bins": 40,
    "times": [0.0, 0.5, 1.0],
    "min_order_preserved": 0.999,
}

_SAMPLER_KEYS = ("chains", "burn_sweeps", "thin", "target_acceptance",
                 "initial_step", "adapt_rate")


def _fmt(x) -> str:
    """Shortest decimal that round-trips a float, for stable CSV output."""
    return format(float(x), ".17g")


def _load_config(path: str) -> dict:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    cfg["_sha256"] = hashlib.sha256(raw).hexdigest()
    return cfg


def _get(cfg: dict, key: str, required: bool = False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigurationError(f"config is missing required key {key!r}")
    return _DEFAULTS.get(key)


def _beta(cfg: dict) -> float:
    beta = _get(cfg, "beta", required=True)
    if not isinstance(beta, (int, float)):
        raise ConfigurationError(f"beta must be a number, got {beta!r}")
    return float(beta)


def _potential(cfg: dict, key: str, required: bool = True) -> Potential | None:
    coeffs = _get(cfg, key, required=required)
    if coeffs is None:
        return None
    if not isinstance(coeffs, (list, tuple)) or not coeffs:
        raise ConfigurationError(f"{key} must be a non-empty coefficient list")
    return Potential(tuple(float(c) for c in coeffs), _beta(cfg))


def _resolve_seed(args, cfg: dict, required: bool) -> int | None:
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        if required:
            raise ConfigurationError(
                "a seed is required: pass --seed or set 'seed' in the config")
        return None
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")
    return seed


def _sampler_config(cfg: dict, threads: int) -> SamplerConfig:
    raw = cfg.get("sampler", {})
    if not isinstance(raw, dict):
        raise ConfigurationError("'sampler' must be a JSON object")
    unknown = set(raw) - set(_SAMPLER_KEYS) - {"threads"}
    if unknown:
        raise ConfigurationError(f"unknown sampler options: {sorted(unknown)}")
    kwargs = {k: raw[k] for k in _SAMPLER_KEYS if k in raw}
    kwargs["threads"] = threads if threads is not None else raw.get("threads", 1)
    return SamplerConfig(**kwargs)


def _spawn_seeds(seed: int, n: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0] % (2 ** 31)) for c in children]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


class _Run:
    """Output directory for one command, with a manifest written at the end."""

    def __init__(self, command: str, cfg: dict, out: str, seed: int | None):
        self.command = command
        self.cfg = cfg
        self.dir = Path(out)
        self.seed = seed
        self.files: list[str] = []
        self.dir.mkdir(parents=True, exist_ok=True)

    def write_json(self, name: str, obj) -> None:
        text = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
        (self.dir / name).write_text(text)
        self.files.append(name)

    def write_csv(self, name: str, header: str, rows, comments=()) -> None:
        lines = [f"# {c}" for c in comments]
        if header:
            lines.append(header)
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        (self.dir / name).write_text("\n".join(lines) + "\n")
        self.files.append(name)

    def finish(self) -> None:
        cfg = {k: v for k, v in self.cfg.items() if k != "_sha256"}
        manifest = {
            "command": self.command,
            "config": cfg,
            "config_sha256": self.cfg.get("_sha256"),
            "seed": self.seed,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "betatransport": __version__,
            },
            "outputs": sorted(self.files),
        }
        self.write_json("manifest.json", manifest)


def _load_or_build_map(run: _Run, cfg: dict, write_bundle: bool = True):
    """Transport map from a 'map' bundle path, or built from the potentials."""
    bundle = cfg.get("map")
    if bundle is not None:
        try:
            d = json.loads(Path(bundle).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read map bundle {bundle}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"map bundle {bundle} is not valid JSON: {exc}") from exc
        return map_from_dict(d)
    V = _potential(cfg, "v_coeffs")
    W = _potential(cfg, "w_coeffs")
    fields = build_field_set(V, W, n_time=int(_get(cfg, "n_time")),
                             degree=int(_get(cfg, "degree")),
                             n_y=int(_get(cfg, "n_y")))
    tmap = build_transport_map(fields, n_grid=int(_get(cfg, "n_grid")))
    if write_bundle:
        run.write_json("map.json", map_to_dict(tmap))
    return tmap


def _write_histograms(run: _Run, result, label_a: str, bins: int) -> None:
    for key, (a, b) in sorted(result.samples.items()):
        edges = np.histogram_bin_edges(np.concatenate([a, b]), bins=bins)
        centers = 0.5 * (edges[:-1] + edges[1:])
        for label, vals in ((label_a, a), ("direct", b)):
            counts, _ = np.histogram(vals, bins=edges)
            run.write_csv(f"hist_{key}_{label}.csv", "bin,count",
                          zip(centers, counts))


def _write_sample_matrix(run: _Run, name: str, rows: np.ndarray,
                         comments=()) -> None:
    run.write_csv(name, "", rows, comments=comments)


def cmd_equilibrium(run: _Run, cfg: dict, args) -> None:
    V = _potential(cfg, "v_coeffs")
    mu = solve_equilibrium(V, degree=int(_get(cfg, "degree")))
    run.write_json("measure.json", mu.to_dict())
    x = np.linspace(mu.a, mu.b, int(_get(cfg, "density_points")))
    run.write_csv("density.csv", "x,density", zip(x, mu.density(x)))
    report = check_hypotheses(mu, V)
    run.write_json("hypotheses.json", dataclasses.asdict(report))
    print(f"support [{_fmt(mu.a)}, {_fmt(mu.b)}]  "
          f"one_cut={report.one_cut}  "
          f"effective_potential_ok={report.effective_potential_ok}")
    if not (report.one_cut and report.effective_potential_ok):
        raise HypothesisFailureError(
            f"equilibrium hypotheses fail for V={list(V.coeffs)}: {report.details}")


def cmd_invert_xi(run: _Run, cfg: dict, args) -> None:
    V = _potential(cfg, "v_coeffs")
    g = _get(cfg, "g_coeffs", required=True)
    g = np.asarray([float(c) for c in g])
    mu = solve_equilibrium(V, degree=int(_get(cfg, "degree")))
    f, c_g = invert_xi(g, mu, V)
    pad = float(_get(cfg, "pad"))
    x = np.linspace(mu.a - pad, mu.b + pad, int(_get(cfg, "grid_points")))
    run.write_csv("f.csv", "x,f", zip(x, f.evaluate(x)))
    run.write_json("inversion.json", {
        "c_g": c_g,
        "g_coeffs": [float(c) for c in g],
        "support": [mu.a, mu.b],
        "beta": V.beta,
    })
    print(f"c_g={_fmt(c_g)}")


def cmd_build_map(run: _Run, cfg: dict, args) -> None:
    V = _potential(cfg, "v_coeffs")
    W = _potential(cfg, "w_coeffs")
    fields = build_field_set(V, W, n_time=int(_get(cfg, "n_time")),
                             degree=int(_get(cfg, "degree")),
                             n_y=int(_get(cfg, "n_y")))
    tmap = build_transport_map(fields, n_grid=int(_get(cfg, "n_grid")))
    run.write_json("map.json", map_to_dict(tmap))
    x = np.asarray(tmap.grid)
    run.write_csv("t0.csv", "x,t0,t0_deriv",
                  zip(x, tmap(x), tmap.derivative(x)))
    checks = []
    worst = 0.0
    for idx, t in enumerate(fields.times):
        res = check_field_equations(fields, idx)
        worst = max(worst, *res.values())
        checks.append({"t": float(t), **res})
    run.write_json("equations.json", {"slices": checks, "max_residual": worst})
    print(f"map tabulated on {len(x)} points, "
          f"worst field-equation residual {worst:.3e}")


def cmd_sample(run: _Run, cfg: dict, args) -> None:
    V = _potential(cfg, "v_coeffs")
    N = int(_get(cfg, "N", required=True))
    n_samples = int(_get(cfg, "n_samples"))
    sample = sample_spectra(V, N, n_samples, run.seed,
                            method=str(_get(cfg, "method")),
                            config=_sampler_config(cfg, args.threads))
    _write_sample_matrix(run, "samples.csv", sample.values)
    run.write_json("sampler.json", {
        "beta": V.beta,
        "v_coeffs": list(V.coeffs),
        "N": N,
        "n_samples": sample.n_samples,
        "method": sample.method,
        "seed": sample.seed,
        "diagnostics": sample.diagnostics,
    })
    print(f"{sample.n_samples} configurations of size {N} "
          f"via {sample.method}")


def cmd_transport(run: _Run, cfg: dict, args) -> None:
    tmap = _load_or_build_map(run, cfg, write_bundle=False)
    src_path = _get(cfg, "samples", required=True)
    try:
        rows = np.loadtxt(src_path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigurationError(f"cannot read samples {src_path}: {exc}") from exc
    seed = run.seed
    if seed is None:
        sidecar = Path(src_path).with_name("sampler.json")
        if sidecar.exists():
            seed = json.loads(sidecar.read_text()).get("seed")
            run.seed = seed
    if seed is None:
        raise ConfigurationError(
            "sample provenance unknown: pass --seed, set 'seed' in the "
            "config, or keep sampler.json next to the input CSV")
    mapped = apply_map(tmap, rows,
                       include_correction=bool(_get(cfg, "include_correction")))
    frac = float(np.mean(np.all(np.diff(mapped.values, axis=1) >= 0, axis=1)))
    _write_sample_matrix(run, "mapped.csv", mapped.values,
                         comments=(f"N={mapped.N}", f"seed={seed}",
                                   f"order_preserved={_fmt(frac)}"))
    print(f"mapped {rows.shape[0]} configurations, "
          f"order preserved in fraction {_fmt(frac)}")


def _stat_families(cfg: dict, args) -> tuple[tuple, tuple]:
    gap_orders = tuple(int(k) for k in _get(cfg, "gap_orders"))
    edge_orders = tuple(int(k) for k in _get(cfg, "edge_orders"))
    if args.bulk and not args.edge:
        edge_orders = ()
    elif args.edge and not args.bulk:
        gap_orders = ()
    return gap_orders, edge_orders


def cmd_compare(run: _Run, cfg: dict, args) -> None:
    V = _potential(cfg, "v_coeffs")
    W = _potential(cfg, "w_coeffs")
    N = int(_get(cfg, "N", required=True))
    n_samples = int(_get(cfg, "n_samples"))
    gap_orders, edge_orders = _stat_families(cfg, args)
    tmap = _load_or_build_map(run, cfg, write_bundle=False)
    common = dict(
        method=str(_get(cfg, "method")),
        sampler_config=_sampler_config(cfg, args.threads),
        gap_index=cfg.get("gap_index"),
        gap_orders=gap_orders, edge_orders=edge_orders,
        n_boot=int(_get(cfg, "n_boot")),
        quantile=float(_get(cfg, "quantile")),
        tmap=tmap, n_time=int(_get(cfg, "n_time")),
    )
    if args.transported:
        mode = "transported"
        result = universality_experiment(
            V, W, N, n_samples, run.seed,
            include_correction=bool(_get(cfg, "include_correction")), **common)
    else:
        mode = "rescaled"
        result = rescaled_statistics_experiment(V, W, N, n_samples, run.seed,
                                                **common)
    run.write_json("report.json", {"mode": mode, **result.to_dict()})
    _write_histograms(run, result, "mapped" if args.transported else "rescaled",
                      int(_get(cfg, "hist_bins")))
    for key, rep in sorted(result.reports.items()):
        print(f"{key}: ks={rep.ks:.4f} threshold={rep.threshold:.4f} "
              f"{'pass' if rep.passed else 'FAIL'}")
    if not result.all_passed:
        raise StatisticalFailureError(
            "local statistics differ beyond the calibrated threshold")


def cmd_residual_study(run: _Run, cfg: dict, args) -> None:
    V = _potential(cfg, "v_coeffs")
    W = _potential(cfg, "w_coeffs")
    n_list = sorted(int(n) for n in _get(cfg, "N_list", required=True))
    times = [float(t) for t in _get(cfg, "times")]
    n_samples = int(_get(cfg, "n_samples"))
    fields = build_field_set(V, W, n_time=int(_get(cfg, "n_time")),
                             degree=int(_get(cfg, "degree")),
                             n_y=int(_get(cfg, "n_y")))
    seeds = iter(_spawn_seeds(run.seed, len(times) * len(n_list)))
    sampler = _sampler_config(cfg, args.threads)
    rows = []
    slopes = {}
    for t in times:
        Vt = fields.potential_at(t)
        per_t = []
        for N in n_list:
            sample = sample_spectra(Vt, N, n_samples, next(seeds),
                                    method=str(_get(cfg, "method")),
                                    config=sampler)
            res = field_equation_residuals(fields, t, sample.values)
            centered = np.abs(res.raw - np.mean(res.raw))
            se = float(np.std(centered, ddof=1) / np.sqrt(len(centered)))
            rows.append((t, N, res.n_samples, res.centered_mean_abs, se))
            per_t.append(res)
            print(f"t={t:g} N={N}: mean |residual - mean| = "
                  f"{res.centered_mean_abs:.3e} (se {se:.1e})")
        # slopes are meaningless once the residual sits at rounding level
        # (W = 0, or a time slice where every fluctuation term vanishes)
        at_floor = any(r.centered_mean_abs < 1e-9 for r in per_t)
        slopes[format(t, "g")] = None if at_floor else residual_slope(per_t)
    run.write_csv("residuals.csv", "t,N,n_samples,mean_abs_centered,se", rows)
    finite = [s for s in slopes.values() if s is not None]
    run.write_json("slopes.json", {
        "slopes": slopes,
        "max_slope": max(finite) if finite else None,
    })


def cmd_pipeline(run: _Run, cfg: dict, args) -> None:
    V = _potential(cfg, "v_coeffs")
    W = _potential(cfg, "w_coeffs")
    N = int(_get(cfg, "N", required=True))
    n_samples = int(_get(cfg, "n_samples"))
    gap_orders, edge_orders = _stat_families(cfg, args)
    s_source, s_direct, s_boot = _spawn_seeds(run.seed, 3)
    sampler = _sampler_config(cfg, args.threads)
    method = str(_get(cfg, "method"))

    tmap = _load_or_build_map(run, cfg)
    source = sample_spectra(V, N, n_samples, s_source, method=method,
                            config=sampler)
    _write_sample_matrix(run, "source.csv", source.values)
    mapped = apply_map(tmap, source.values,
                       include_correction=bool(_get(cfg, "include_correction")))
    frac = float(np.mean(np.all(np.diff(mapped.values, axis=1) >= 0, axis=1)))
    _write_sample_matrix(run, "mapped.csv", mapped.values,
                         comments=(f"N={mapped.N}", f"seed={run.seed}",
                                   f"order_preserved={_fmt(frac)}"))
    direct = sample_spectra(interpolate(V, W, 1.0), N, n_samples, s_direct,
                            method=method, config=sampler)
    _write_sample_matrix(run, "direct.csv", direct.values)

    linv = tmap.rescaling.inverse()
    src_mu = tmap.fields.source_measure
    target_support = (float(linv(src_mu.a)), float(linv(src_mu.b)))
    result = compare_local_statistics(
        mapped.values, direct, target_support,
        gap_index=cfg.get("gap_index"),
        gap_orders=gap_orders, edge_orders=edge_orders,
        n_boot=int(_get(cfg, "n_boot")), seed=s_boot,
        quantile=float(_get(cfg, "quantile")))
    result.beta = V.beta
    run.write_json("report.json", {
        "mode": "transported",
        "order_preserved": frac,
        "sampling": {"source": {"method": source.method,
                                "diagnostics": source.diagnostics},
                     "direct": {"method": direct.method,
                                "diagnostics": direct.diagnostics}},
        **result.to_dict(),
    })
    _write_histograms(run, result, "mapped", int(_get(cfg, "hist_bins")))
    for key, rep in sorted(result.reports.items()):
        print(f"{key}: ks={rep.ks:.4f} threshold={rep.threshold:.4f} "
              f"{'pass' if rep.passed else 'FAIL'}")
    min_frac = float(_get(cfg, "min_order_preserved"))
    if frac < min_frac:
        raise StatisticalFailureError(
            f"order preserved in fraction {frac:.4f} < {min_frac}")
    if not result.all_passed:
        raise StatisticalFailureError(
            "local statistics differ beyond the calibrated threshold")


_COMMANDS = {
    "equilibrium": (cmd_equilibrium, False,
                    "solve the equilibrium measure and check hypotheses"),
    "invert-xi": (cmd_invert_xi, False,
                  "invert the master operator for a polynomial right side"),
    "build-map": (cmd_build_map, False,
                  "build the transport field set and tabulate the map"),
    "sample": (cmd_sample, True, "draw eigenvalue configurations"),
    "transport": (cmd_transport, False, "push a sample CSV through the map"),
    "compare": (cmd_compare, True,
                "compare local statistics of the two models"),
    "residual-study": (cmd_residual_study, True,
                       "measure the master-equation residual across N"),
    "pipeline": (cmd_pipeline, True,
                 "sample, transport, and compare in one run"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="betatransport",
        description="Approximate transport between one-cut beta-matrix models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, needs_seed, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help="path to a JSON experiment config")
        p.add_argument("--out", default=".",
                       help="output directory (default: current directory)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed overriding the config value")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for sampling chains")
        if name == "compare" or name == "pipeline":
            p.add_argument("--bulk", action="store_true",
                           help="compare bulk gap statistics only")
            p.add_argument("--edge", action="store_true",
                           help="compare edge statistics only")
        if name == "compare":
            p.add_argument("--transported", action="store_true",
                           help="map configurations instead of rescaling "
                                "statistics by the map derivative")
        p.set_defaults(func=func, needs_seed=needs_seed)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        seed = _resolve_seed(args, cfg, required=args.needs_seed)
        run = _Run(args.command, cfg, args.out, seed)
        try:
            args.func(run, cfg, args)
        finally:
            run.finish()
    except BetaTransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for klass, code in ((ConfigurationError, 2),
                            (HypothesisFailureError, 3),
                            (NumericalFailureError, 4),
                            (StatisticalFailureError, 5)):
            if isinstance(exc, klass):
                return code
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
