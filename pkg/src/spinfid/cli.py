"""Command-line experiment runner.

Subcommands:
  run       simulate a preset or config file, write couplings, series
            CSV, tail-fit JSON, a human-readable report and a manifest
  diagnose  print the characteristic time, effective neighbor count and
            the expected-accuracy verdicts for a configuration
  presets   list the preset registry

Exit codes: 0 success, 2 configuration error, 3 resource cap exceeded,
4 numerical failure (drift, NaN, or fit non-convergence).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (FitConvergenceError, default_fit_window, fit_long_time_tail,
                       to_physical_units)
from .classical import IntegrationParams, classical_correlation
from .errors import ConfigError, NoDynamicsError, NumericalError, ResourceLimitError
from .lattice import characteristic_time, effective_neighbors, save_couplings
from .presets import PRESETS, ExperimentConfig, config_hash, dump_config, get_preset, parse_config
from .quantum import DENSE_CAP, HilbertSpec, exact_correlation, quantum_correlation
from .series import save_csv


def _load_config(args) -> ExperimentConfig:
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both")
    if args.preset:
        cfg = get_preset(args.preset)
    elif args.config:
        cfg = parse_config(Path(args.config).read_text())
    else:
        raise ConfigError("one of --preset or --config is required")
    if getattr(args, "lattice", None):
        parts = [int(x) for x in args.lattice.replace("x", " ").split()]
        cfg.dimensions = tuple(parts * len(cfg.dimensions)) if len(parts) == 1 \
            else tuple(parts)
    for attr, key in (("seed", "seed"), ("realizations", "realizations"),
                      ("samples", "samples"), ("dt", "dt"), ("workers", "workers"),
                      ("method", "method")):
        val = getattr(args, attr, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "tmax", None) is not None:
        cfg.t_max = args.tmax
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    cfg.validate()
    return cfg


def _diagnostics(cfg: ExperimentConfig, table) -> dict:
    out = {"n_sites": table.spec.n_sites, "n_pairs": table.n_pairs}
    try:
        out["tau"] = characteristic_time(table)
        out["n_eff"] = effective_neighbors(table)
    except NoDynamicsError:
        out["tau"] = None
        out["n_eff"] = None
        return out
    neff = out["n_eff"]
    if cfg.two_s == 1:
        out["agreement_expected"] = neff >= 4.0
        out["long_time_reliable"] = neff >= 9.0
    else:
        out["agreement_expected"] = neff >= 2.0
    return out


def _verdict_lines(diag: dict, cfg: ExperimentConfig) -> list[str]:
    lines = [f"sites: {diag['n_sites']}  pairs: {diag['n_pairs']}"]
    if diag.get("tau") is None:
        lines.append("all couplings vanish: no dynamics")
        return lines
    lines.append(f"characteristic time tau = {diag['tau']:.4f} (coupling units)")
    lines.append(f"effective neighbors n_eff = {diag['n_eff']:.2f}")
    s_label = f"S={cfg.two_s}/2" if cfg.two_s % 2 else f"S={cfg.two_s//2}"
    if "agreement_expected" in diag:
        word = "expected" if diag["agreement_expected"] else "not expected"
        lines.append(f"quantitative agreement ({s_label}): {word}")
    if "long_time_reliable" in diag:
        word = "reliable" if diag["long_time_reliable"] else "unreliable"
        lines.append(f"long-time constants: {word}")
    return lines


def _resolve_method(cfg: ExperimentConfig, dim: int) -> str:
    if cfg.method != "auto":
        return cfg.method
    return "exact" if dim <= DENSE_CAP else "typicality"


def _run(cfg: ExperimentConfig) -> Path:
    table = cfg.build_table()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    diag = _diagnostics(cfg, table)

    if cfg.spin_kind == "classical":
        params = IntegrationParams(dt=cfg.dt, duration=cfg.duration,
                                   n_realizations=cfg.realizations, seed=cfg.seed,
                                   t_max=cfg.t_max, stage_tol=cfg.stage_tol,
                                   workers=cfg.workers)
        series = classical_correlation(table, params)
        method = "classical"
    else:
        spec = HilbertSpec(table.spec.n_sites, cfg.two_s)
        method = _resolve_method(cfg, spec.dim)
        t_max = cfg.t_max if cfg.t_max is not None else cfg.duration / 2.0
        if method == "exact":
            grid = np.arange(0.0, t_max + cfg.dt / 2.0, cfg.dt)
            series = exact_correlation(table, spec, grid)
        else:
            series = quantum_correlation(table, spec, t_max, cfg.dt,
                                         n_samples=cfg.samples, seed=cfg.seed)
    series.meta["preset"] = cfg.name
    series.meta["config_hash"] = config_hash(cfg)

    save_couplings(table, out_dir / "couplings.txt")
    save_csv(series, out_dir / "series.csv")

    report = [f"spinfid {__version__}  experiment {cfg.name}  method {method}"]
    report += _verdict_lines(diag, cfg)
    fit_payload = {}
    if cfg.fit:
        try:
            fit = fit_long_time_tail(series)
            fit_payload["coupling_units"] = asdict(fit)
            report.append(
                f"tail fit (coupling units): gamma={fit.gamma:.4f} omega={fit.omega:.4f} "
                f"phase={fit.phase:.3f} window=[{fit.t_lo:.2f}, {fit.t_hi:.2f}] "
                f"relative rms residual={fit.rms_residual:.3f}")
            if fit.rms_residual > 0.5:
                report.append("warning: residual is large; the damped-cosine form "
                              "does not describe this tail")
            if cfg.physical_units:
                phys = to_physical_units(fit, cfg.constants)
                fit_payload["physical_units"] = asdict(phys)
                report.append(f"tail fit (physical): gamma={phys.gamma:.1f} 1/ms  "
                              f"omega={phys.omega:.1f} rad/ms")
        except FitConvergenceError as exc:
            fit_payload["error"] = str(exc)
            report.append(f"tail fit failed: {exc}")
            raise
        finally:
            (out_dir / "fit.json").write_text(json.dumps(fit_payload, indent=2))
            (out_dir / "report.txt").write_text("\n".join(report) + "\n")
    else:
        (out_dir / "report.txt").write_text("\n".join(report) + "\n")

    manifest = {
        "version": __version__,
        "experiment": cfg.name,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "method": method,
        "config": dump_config(cfg),
        "outputs": ["couplings.txt", "series.csv", "report.txt"]
        + (["fit.json"] if cfg.fit else []),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out_dir


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinfid", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--preset", help="preset name (see 'spinfid presets')")
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--lattice", help="override extents, e.g. 7 or 7x7x7")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--tmax", type=float)

    run_p = sub.add_parser("run", help="simulate and write artifact files")
    add_common(run_p)
    run_p.add_argument("--realizations", type=int)
    run_p.add_argument("--samples", type=int)
    run_p.add_argument("--method", choices=["auto", "typicality", "exact"])
    run_p.add_argument("--workers", type=int)
    run_p.add_argument("--out-dir", dest="out_dir")

    diag_p = sub.add_parser("diagnose", help="print tau, n_eff and verdicts")
    add_common(diag_p)

    sub.add_parser("presets", help="list available presets")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            for name in sorted(PRESETS):
                cfg = PRESETS[name]
                print(f"{name:28s} {cfg.spin_kind:9s} dims={'x'.join(map(str, cfg.dimensions))}")
            return 0
        if args.command == "diagnose":
            cfg = _load_config(args)
            table = cfg.build_table()
            for line in _verdict_lines(_diagnostics(cfg, table), cfg):
                print(line)
            return 0
        if args.command == "run":
            cfg = _load_config(args)
            out_dir = _run(cfg)
            print(f"wrote {out_dir}/", file=sys.stderr)
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
