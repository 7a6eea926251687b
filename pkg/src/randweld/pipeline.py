"""End-to-end runs and run records.

A run writes ``record.json`` (deterministic: config, hash, summary, artifact
paths) and ``timings.json`` (wall-clock, excluded from the determinism
contract).  Every file written carries the config hash.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .ba_extension import DilatationField, dilatation, extend
from .beltrami import (
    conformal_factors,
    exterior_cr_residual,
    holder_estimate,
    roundtrip_error,
    solve_welding,
    welding_curve,
)
from .chaos_measure import chaos_masses, homeomorphism_from_measure
from .config import ExperimentConfig
from .field_sampler import sample_band_field, sample_fourier_field
from .formats import curve_csv, dumps, knots_csv, write_csv, write_json
from .lehto import annulus_distortion_check, lehto_integral


@dataclass
class RunRecord:
    kind: str
    config: dict
    config_hash: str
    summary: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    status: str = "ok"
    failed_stage: str | None = None
    error: str | None = None
    version: str = __version__

    @property
    def seed_provenance(self) -> dict:
        return {"root_seed": self.config.get("seed"), "generator": "Philox", "keys": "(seed, stage, replicate, ...)"}

    def deterministic(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "config_hash": self.config_hash,
            "summary": self.summary,
            "artifacts": self.artifacts,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "version": self.version,
            "seed_provenance": self.seed_provenance,
        }

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        write_json(out_dir / "timings.json", {"config_hash": self.config_hash, "timings": self.timings})
        return write_json(out_dir / "record.json", self.deterministic())


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def _stage(record: RunRecord, name: str):
    t = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        record.timings[name] = record.timings.get(name, 0.0) + time.perf_counter() - t


def sample_field(cfg: ExperimentConfig, replicate: int = 0):
    if cfg.backend == "fourier":
        return sample_fourier_field(cfg.modes, cfg.seed, replicate)
    return sample_band_field(cfg.band_levels, cfg.seed, replicate)


def welding_run(cfg: ExperimentConfig, seed: int, grids, with_distortion: bool = True) -> dict:
    """Sample, measure, solve on each grid of the ladder and verify; summary dict."""
    r = sample_fourier_field(cfg.modes, seed) if cfg.backend == "fourier" else sample_band_field(cfg.band_levels, seed)
    m = chaos_masses(r, cfg.beta, cfg.level, override_beta_guard=cfg.override_beta_guard)
    h = homeomorphism_from_measure(m)
    rows = []
    for n in grids:
        f = solve_welding(h, n, cfg.ell, cfg.tol, cfg.side, cfg.max_iter)
        cf = conformal_factors(f, h, n_boundary=cfg.n_boundary)
        curve = welding_curve(f, cfg.n_boundary)
        alpha, alpha_err = holder_estimate(curve)
        row = {
            "grid": n,
            "iterations": f.iterations,
            "residual": f.residual,
            "mu_sup": f.mu_sup,
            "roundtrip_error": roundtrip_error(cf),
            "alpha": alpha,
            "alpha_stderr": alpha_err,
            "exterior_cr_residual": exterior_cr_residual(f),
        }
        if with_distortion:
            mu = DilatationField("disk", f.coords, f.coords, f.mu, "truncated")
            L = lehto_integral(mu, 0j, 1.0, 2.0)
            chk = annulus_distortion_check(L, f)
            row["distortion"] = {
                "lehto": L.value,
                "ratio": chk.ratio,
                "bound": chk.bound,
                "passed": chk.passed,
            }
        rows.append(row)
    errs = [row["roundtrip_error"] for row in rows]
    return {
        "seed": seed,
        "ladder": rows,
        "strictly_decreasing": bool(all(b < a for a, b in zip(errs[:-1], errs[1:]))),
        "final_error": errs[-1],
        "_h": h,
        "_f": f,
        "_curve": curve,
    }


def run_pipeline(cfg: ExperimentConfig, write: bool = True, grids=None) -> RunRecord:
    """sample -> measure -> extend -> transfer/truncate/solve -> weld -> verify."""
    cfg.validate()
    rec = RunRecord("pipeline", cfg.to_dict(), cfg.hash())
    out = cfg.out_dir / f"pipeline-{rec.config_hash}"
    grids = list(grids or cfg.grid_ladder)
    try:
        with _stage(rec, "sample"):
            r = sample_field(cfg)
        with _stage(rec, "measure"):
            m = chaos_masses(r, cfg.beta, cfg.level, override_beta_guard=cfg.override_beta_guard)
            h = homeomorphism_from_measure(m)
        with _stage(rec, "extend"):
            F = extend(h, cfg.strip_grid, cfg.strip_grid)
            mu_strip = dilatation(F)
            rec.summary["strip"] = {"c0": h.c0, "K_max": float(np.max(mu_strip.K)), "K_mean": float(np.mean(mu_strip.K))}
        rows = []
        for n in grids:
            with _stage(rec, "solve"):
                f = solve_welding(h, n, cfg.ell, cfg.tol, cfg.side, cfg.max_iter)
            with _stage(rec, "weld"):
                cf = conformal_factors(f, h, n_boundary=cfg.n_boundary)
                curve = welding_curve(f, cfg.n_boundary)
            with _stage(rec, "verify"):
                alpha, alpha_err = holder_estimate(curve)
                rows.append(
                    {
                        "grid": n,
                        "iterations": f.iterations,
                        "residual": f.residual,
                        "mu_sup": f.mu_sup,
                        "roundtrip_error": roundtrip_error(cf),
                        "alpha": alpha,
                        "alpha_stderr": alpha_err,
                        "exterior_cr_residual": exterior_cr_residual(f),
                    }
                )
        errs = [row["roundtrip_error"] for row in rows]
        rec.summary["ladder"] = rows
        rec.summary["roundtrip_error"] = errs[-1]
        rec.summary["strictly_decreasing"] = bool(all(b < a for a, b in zip(errs[:-1], errs[1:])))
        rec.summary["alpha"] = rows[-1]["alpha"]
        rec.summary["residual"] = rows[-1]["residual"]
        rec.summary["curve_max_radius_deviation"] = float(np.max(np.abs(np.abs(curve.points) - 1.0)))
        if write:
            with _stage(rec, "write"):
                rec.artifacts["curve"] = str(
                    curve_csv(out / "curve.csv", curve.angles, curve.points, comment=f"config_hash={rec.config_hash}")
                )
                rec.artifacts["h"] = str(knots_csv(out / "h.csv", h.knots, h.values, comment=f"config_hash={rec.config_hash}"))
    except StageError as exc:
        rec.status = "failed"
        rec.failed_stage = exc.stage
        rec.error = f"{type(exc.cause).__name__}: {exc.cause}"
    if write:
        rec.artifacts["record"] = str(out / "record.json")
        rec.write(out)
    return rec


def emit_plots(record: RunRecord, out_dir=None) -> list[Path]:
    """Plot-ready CSV tables derived from a record's summary."""
    out_dir = Path(out_dir or Path(record.config.get("out", "runs")) / f"{record.kind}-{record.config_hash}")
    tag = f"config_hash={record.config_hash}"
    s = record.summary
    files = []
    if "ladder" in s:
        files.append(
            write_csv(
                out_dir / "roundtrip_ladder.csv",
                {"grid": [r["grid"] for r in s["ladder"]], "roundtrip_error": [r["roundtrip_error"] for r in s["ladder"]]},
                comment=tag,
            )
        )
    if "curve" in record.artifacts:
        files.append(Path(record.artifacts["curve"]))
    if "log_sizes" in s:
        x = np.asarray(s["log_sizes"])
        y = np.asarray(s["log_moments"])
        icpt = float(np.mean(y - s["estimate"] * x))
        theory_icpt = float(np.mean(y - s["theory"] * x))
        files.append(
            write_csv(
                out_dir / "moment_fit.csv",
                {"log_size": x, "log_moment": y, "fit": icpt + s["estimate"] * x, "theory": theory_icpt + s["theory"] * x},
                comment=tag,
            )
        )
    if "tail" in s:
        t = s["tail"]
        files.append(
            write_csv(
                out_dir / "tail_decay.csv",
                {k: [row[k] for row in t] for k in ("N", "p_hat", "wilson_lo", "wilson_hi")},
                comment=tag,
            )
        )
    return files


def record_json(record: RunRecord) -> str:
    return dumps(record.deterministic())
