"""Statistical suites dispatched by name; each writes a results JSON record."""

from __future__ import annotations

import time

import numpy as np

from .beltrami import holder_estimate, solve_welding, welding_curve
from .chaos_measure import (
    chaos_masses,
    homeomorphism_from_measure,
    martingale_check,
    moment_scaling_estimate,
    negative_moment_probe,
    scaling_ratio_probe,
)
from .config import ExperimentConfig
from .field_sampler import empirical_covariance, sample_fourier_field
from .formats import results_record, write_json
from .lehto import calibrate_delta, k_integrability_probe, tail_probability_mc
from .pipeline import RunRecord, emit_plots, welding_run


def _covariance(cfg: ExperimentConfig) -> dict:
    est = empirical_covariance(cfg.modes, cfg.lags, cfg.reps, cfg.seed)
    rows = []
    for d, e, se, t, lim in zip(est.lags, est.estimate, est.stderr, est.truncated, est.limit):
        rows.append(
            {
                "lag": d,
                "estimate": e,
                "stderr": se,
                "truncated": t,
                "limit": lim,
                "within_3se": bool(abs(e - t) <= 3 * se),
                "within_limit_tol": bool(abs(e - lim) <= 0.05) if d >= 0.05 else None,
            }
        )
    return {"estimate": est.estimate, "stderr": est.stderr, "rows": rows}


def _martingale(cfg: ExperimentConfig) -> dict:
    rows = []
    for beta in cfg.betas:
        r = martingale_check(beta, reps=cfg.reps, seed=cfg.seed, n_modes=cfg.modes)
        for (a, b), e, se, z in zip(r.intervals, r.estimate, r.stderr, r.z_scores()):
            rows.append({"beta": beta, "interval": [a, b], "estimate": e, "stderr": se, "z": z, "within_3se": bool(abs(z) <= 3)})
    return {"estimate": [r["estimate"] for r in rows], "stderr": [r["stderr"] for r in rows], "rows": rows}


def _moments(cfg: ExperimentConfig) -> dict:
    r = moment_scaling_estimate(cfg.beta, cfg.p, cfg.moment_levels, cfg.reps, cfg.seed)
    return {
        "estimate": r.slope,
        "stderr": r.stderr,
        "theory": r.theory,
        "flagged": r.flagged,
        "levels": r.levels,
        "log_sizes": r.log_sizes,
        "log_moments": r.log_moments,
    }


def _negative_moments(cfg: ExperimentConfig) -> dict:
    rows = []
    for q in cfg.q:
        means, se = negative_moment_probe(cfg.beta, q, cfg.cutoffs, cfg.reps, cfg.seed, return_stderr=True)
        ratios = means[1:] / means[:-1]
        rows.append(
            {
                "q": q,
                "cutoffs": cfg.cutoffs,
                "estimate": means,
                "stderr": se,
                "ratios": ratios,
                "stable": bool(np.all((ratios >= 0.8) & (ratios <= 1.25))),
            }
        )
    return {"estimate": [r["estimate"] for r in rows], "stderr": [r["stderr"] for r in rows], "rows": rows}


def _scaling(cfg: ExperimentConfig) -> dict:
    x, y, a, b, lam = cfg.scaling
    r = scaling_ratio_probe(cfg.beta, x, y, a, b, lam, cfg.reps, cfg.seed)
    return {
        "estimate": r.ks_statistic,
        "stderr": None,
        "p_value": r.p_value,
        "critical_1pct": r.critical_1pct,
        "same_law": bool(r.ks_statistic < r.critical_1pct),
        "median_small": float(np.median(r.small)),
        "median_large": float(np.median(r.large)),
    }


def _lehto_tail(cfg: ExperimentConfig) -> dict:
    delta = cfg.delta
    if delta is None:
        delta = calibrate_delta(cfg.beta, cfg.rho, cfg.n_max, cfg.target_probability, cfg.calibration_reps, cfg.seed)
    cells = [tail_probability_mc(cfg.beta, cfg.rho, N, delta, cfg.reps, cfg.seed, n_max=cfg.n_max).report() for N in range(1, cfg.n_max + 1)]
    p = [c["p_hat"] for c in cells]
    return {
        "estimate": p,
        "stderr": [float(np.sqrt(max(v * (1 - v), 0.0) / cfg.reps)) for v in p],
        "delta": delta,
        "tail": cells,
        "non_increasing": bool(all(b <= a for a, b in zip(p[:-1], p[1:]))),
        "separated_1_vs_last": bool(cells[-1]["wilson_hi"] < cells[0]["wilson_lo"]),
    }


def _integrability(cfg: ExperimentConfig) -> dict:
    rows = []
    for s in range(cfg.seed, cfg.seed + cfg.reps):
        m = chaos_masses(sample_fourier_field(cfg.modes, s), cfg.beta, cfg.level, override_beta_guard=cfg.override_beta_guard)
        r = k_integrability_probe(m)
        tail = r.increments[-3:]
        rows.append({"seed": s, "value": r.value, "increments": r.increments, "tail_decreasing": bool(np.all(np.diff(tail) < 0))})
    vals = np.array([r["value"] for r in rows])
    return {
        "estimate": float(vals.mean()),
        "stderr": float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else None,
        "rows": rows,
        "all_tail_decreasing": bool(all(r["tail_decreasing"] for r in rows)),
    }


def _welding(cfg: ExperimentConfig) -> dict:
    rows = []
    for s in range(cfg.seed, cfg.seed + cfg.reps):
        r = welding_run(cfg, s, cfg.grid_ladder)
        rows.append({k: v for k, v in r.items() if not k.startswith("_")})
    finals = np.array([r["final_error"] for r in rows])
    violations = sum(not row["distortion"]["passed"] for r in rows for row in r["ladder"])
    return {
        "estimate": float(finals.max()),
        "stderr": None,
        "rows": rows,
        "decreasing_count": int(sum(r["strictly_decreasing"] for r in rows)),
        "distortion_violations": int(violations),
    }


def _holder(cfg: ExperimentConfig) -> dict:
    rows = []
    for s in range(cfg.seed, cfg.seed + cfg.reps):
        m = chaos_masses(sample_fourier_field(cfg.modes, s), cfg.beta, cfg.level, override_beta_guard=cfg.override_beta_guard)
        f = solve_welding(homeomorphism_from_measure(m), cfg.grid, cfg.ell, cfg.tol, cfg.side, cfg.max_iter)
        a, e = holder_estimate(welding_curve(f, cfg.n_boundary))
        rows.append({"seed": s, "alpha": a, "fit_stderr": e})
    al = np.array([r["alpha"] for r in rows])
    return {"estimate": float(al.min()), "stderr": None, "mean": float(al.mean()), "rows": rows}


SUITES = {
    "covariance": _covariance,
    "martingale": _martingale,
    "moments": _moments,
    "negative_moments": _negative_moments,
    "scaling": _scaling,
    "lehto_tail": _lehto_tail,
    "integrability": _integrability,
    "welding": _welding,
    "holder": _holder,
}


def run_suite(name: str, cfg: ExperimentConfig, write: bool = True) -> RunRecord:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    cfg.validate()
    rec = RunRecord(f"suite-{name}", cfg.to_dict(), cfg.hash())
    t = time.perf_counter()
    try:
        body = SUITES[name](cfg)
    except Exception as exc:
        rec.status = "failed"
        rec.failed_stage = name
        rec.error = f"{type(exc).__name__}: {exc}"
        body = {"estimate": None, "stderr": None}
    rec.timings[name] = time.perf_counter() - t
    est, se = body.pop("estimate"), body.pop("stderr")
    rec.summary = results_record(est, se, cfg.reps, cfg.seed, rec.config, suite=name, **body)
    if write:
        out = cfg.out_dir / f"{rec.kind}-{rec.config_hash}"
        rec.artifacts["results"] = str(write_json(out / "results.json", rec.summary))
        rec.artifacts["plots"] = [str(p) for p in emit_plots(rec, out)]
        rec.write(out)
    return rec
