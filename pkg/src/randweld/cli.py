"""Command-line entry point: ``randweld <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .ba_extension import dilatation, extend
from .beltrami import conformal_factors, holder_estimate, roundtrip_error, solve_welding, welding_curve
from .chaos_measure import BetaGuardError, chaos_masses, homeomorphism_from_measure
from .config import load_config
from .formats import (
    curve_csv,
    dumps,
    grid_csv,
    knots_csv,
    save_dilatation,
    save_realization,
    write_grid,
    write_json,
)
from .pipeline import run_pipeline, sample_field
from .suites import SUITES, run_suite


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file; CLI flags override its values")
    p.add_argument("--beta", type=float)
    p.add_argument("--modes", type=int, help="Fourier cutoff N")
    p.add_argument("--level", type=int, help="dyadic level of the measure")
    p.add_argument("--grid", type=int, help="plane (or strip) grid size")
    p.add_argument("--ell", type=int, help="truncation index")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=str)
    p.add_argument("--tol", type=float)
    p.add_argument("--override-beta-guard", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randweld", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, hlp in [
        ("sample", "sample a field realization"),
        ("measure", "chaos masses and the circle map"),
        ("extend", "strip extension and its dilatation"),
        ("solve", "solve the Beltrami equation on the plane grid"),
        ("weld", "solve and export the welding curve"),
        ("pipeline", "end-to-end run over the grid ladder"),
    ]:
        _common(sub.add_parser(name, help=hlp))
    s = sub.add_parser("suite", help="run a statistical suite")
    s.add_argument("name", choices=sorted(SUITES))
    _common(s)
    return parser


def _overrides(args) -> dict:
    keys = ("beta", "modes", "level", "grid", "ell", "reps", "seed", "out", "tol", "override_beta_guard")
    return {k: getattr(args, k) for k in keys}


def _measure(cfg):
    r = sample_field(cfg)
    m = chaos_masses(r, cfg.beta, cfg.level, override_beta_guard=cfg.override_beta_guard)
    return r, m, homeomorphism_from_measure(m)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
    except (ValueError, BetaGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    tag = f"config_hash={cfg.hash()}"
    out = cfg.out_dir / f"{args.command}-{cfg.hash()}"
    meta = {"config": cfg.to_dict(), "config_hash": cfg.hash()}

    if args.command == "sample":
        r = sample_field(cfg)
        save_realization(r, out / "realization", extra={"config_hash": cfg.hash()})
        print(out / "realization.json")
    elif args.command == "measure":
        r, m, h = _measure(cfg)
        knots_csv(out / "masses.csv", np.arange(m.masses.size) / m.masses.size, m.masses, tag)
        knots_csv(out / "h.csv", h.knots, h.values, tag)
        write_json(out / "measure.json", {**meta, "total": m.total, "level": m.level, "cutoff": m.cutoff, **m.meta})
        print(out)
    elif args.command == "extend":
        _, _, h = _measure(cfg)
        mu = dilatation(extend(h, cfg.strip_grid, cfg.strip_grid))
        save_dilatation(mu, out / "mu_strip.rwg")
        grid_csv(out / "mu_strip.csv", mu.xs, mu.ys, mu.mu, tag)
        write_json(out / "extend.json", {**meta, "c0": h.c0, "K_max": float(mu.K.max())})
        print(out)
    elif args.command in ("solve", "weld"):
        _, _, h = _measure(cfg)
        f = solve_welding(h, cfg.grid, cfg.ell, cfg.tol, cfg.side, cfg.max_iter)
        info = {**meta, "grid": cfg.grid, "ell": cfg.ell, "residual": f.residual, "iterations": f.iterations, "mu_sup": f.mu_sup}
        if args.command == "solve":
            write_grid(out / "map.rwg", "plane", f.coords, f.coords, f.values, kind="map", extra={"config_hash": cfg.hash()})
        else:
            curve = welding_curve(f, cfg.n_boundary)
            alpha, err = holder_estimate(curve)
            info.update(
                {
                    "beta": cfg.beta,
                    "seed": cfg.seed,
                    "alpha": alpha,
                    "alpha_stderr": err,
                    "roundtrip_error": roundtrip_error(conformal_factors(f, h, cfg.n_boundary)),
                }
            )
            curve_csv(out / "curve.csv", curve.angles, curve.points, tag)
        write_json(out / f"{args.command}.json", info)
        print(out)
    elif args.command == "pipeline":
        rec = run_pipeline(cfg)
        print(dumps(rec.summary if rec.status == "ok" else {"failed_stage": rec.failed_stage, "error": rec.error}))
        return 0 if rec.status == "ok" else 1
    elif args.command == "suite":
        rec = run_suite(args.name, cfg)
        print(dumps({k: v for k, v in rec.summary.items() if k != "config"}))
        return 0 if rec.status == "ok" else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
