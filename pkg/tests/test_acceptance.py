"""Exit criteria at their stated sizes and tolerances.

Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line and then asserts.
Run only these with ``pytest -m acceptance -s``.
"""

import math

import numpy as np
import pytest

from randweld.ba_extension import DilatationField, plane_grid
from randweld.beltrami import hausdorff, holder_estimate, solve_beltrami, solve_welding, welding_curve
from randweld.chaos_measure import (
    CircleMap,
    chaos_masses,
    homeomorphism_from_measure,
    martingale_check,
    moment_scaling_estimate,
    negative_moment_probe,
    zeta,
)
from randweld.config import ExperimentConfig
from randweld.field_sampler import empirical_covariance, sample_fourier_field
from randweld.lehto import calibrate_delta, k_integrability_probe, lehto_integral, tail_probability_mc
from randweld.pipeline import welding_run

pytestmark = pytest.mark.acceptance

# Max node error for mu = 0.3 chi_D on 512^2 over side 4, fixed from a refinement
# study on coarser grids: 4.17e-3 (128), 2.24e-3 (256), i.e. a rate of ~0.9 per
# doubling, predicting 1.2e-3 at 512.  Tolerance = 2x the prediction.
ELLIPSE_NODE_TOL = 2.5e-3


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'} {detail}")


def test_01_covariance_law(capsys):
    lags = [0.05, 0.1, 0.25, 0.5]
    est = empirical_covariance(4096, lags, reps=2000, seed=0)
    within_se = np.abs(est.estimate - est.truncated) <= 3 * est.stderr
    within_lim = np.abs(est.estimate - est.limit) <= 0.05
    ok = bool(within_se.all() and within_lim.all())
    rows = ", ".join(f"d={d}: {e:.4f} (trunc {t:.4f}, lim {l:.4f}, se {s:.4f})" for d, e, t, l, s in zip(lags, est.estimate, est.truncated, est.limit, est.stderr))
    report(capsys, 1, ok, rows)
    assert ok


def test_02_martingale_normalization(capsys):
    worst = 0.0
    parts = []
    for beta in (0.3, 0.5, 1.0):
        r = martingale_check(beta, intervals=((0.0, 0.5), (0.0, 0.25)), reps=10_000, seed=0, n_modes=1024)
        z = np.abs(r.z_scores())
        worst = max(worst, float(z.max()))
        parts.append(f"beta={beta}: " + ", ".join(f"{e:.4f}+-{s:.4f}" for e, s in zip(r.estimate, r.stderr)))
    ok = worst <= 3
    report(capsys, 2, ok, f"max |z| = {worst:.2f}; " + "; ".join(parts))
    assert ok


def test_03_moment_scaling(capsys):
    r = moment_scaling_estimate(0.5, 1.5, levels=range(3, 9), reps=5000, seed=0)
    target = zeta(1.5, 0.5)
    ok = abs(r.slope - 1.40625) <= 0.1 and target == pytest.approx(1.40625)
    report(capsys, 3, ok, f"slope {r.slope:.4f} +- {r.stderr:.4f}, theory {target}")
    assert ok


def test_04_negative_moments(capsys):
    cutoffs = [256, 512, 1024, 2048]
    ok = True
    parts = []
    for q in (0.5, 1.0):
        means = negative_moment_probe(0.5, q, cutoffs, reps=4000, seed=0)
        ratios = means[1:] / means[:-1]
        ok &= bool(np.all((ratios >= 0.8) & (ratios <= 1.25)))
        parts.append(f"q={q}: ratios " + ", ".join(f"{x:.4f}" for x in ratios))
    report(capsys, 4, ok, "; ".join(parts))
    assert ok


def test_05_lehto_quadrature(capsys):
    L = lehto_integral(1.0, 0j, 1.0, math.e).value
    k = lambda x, y: 1 + 0.5 * np.cos(2 * x) ** 2 + 0.25 * y * y
    s = 1.7
    whole = lehto_integral(k, 0.1 + 0.2j, 1.0, math.e).value
    parts = lehto_integral(k, 0.1 + 0.2j, 1.0, s).value + lehto_integral(k, 0.1 + 0.2j, s, math.e).value
    e1, e2 = abs(L - 1 / (2 * math.pi)), abs(whole - parts)
    ok = e1 <= 1e-8 and e2 <= 1e-8
    report(capsys, 5, ok, f"|L - 1/2pi| = {e1:.2e}, additivity defect {e2:.2e}")
    assert ok


def test_06_solver_oracle(capsys):
    n = 512
    c = plane_grid(n, 4.0)
    X, Y = np.meshgrid(c, c)
    Z = X + 1j * Y
    f = solve_beltrami(DilatationField("disk", c, c, np.where(np.abs(Z) < 1, 0.3, 0.0).astype(complex)))
    exact = np.where(np.abs(Z) < 1, Z + 0.3 * np.conj(Z), Z + 0.3 / Z)
    node_err = float(np.max(np.abs(f.values - exact)))
    theta = 2 * np.pi * np.arange(2048) / 2048
    ell = np.exp(1j * theta) + 0.3 * np.exp(-1j * theta)
    hd = hausdorff(welding_curve(f, 2048).points, ell)
    ok = node_err <= ELLIPSE_NODE_TOL <= 5e-3 and hd <= 5e-3
    report(capsys, 6, ok, f"max node error {node_err:.2e} (tol {ELLIPSE_NODE_TOL}), Hausdorff {hd:.2e}, {f.iterations} iterations")
    assert ok


@pytest.fixture(scope="module")
def welding_ladders():
    cfg = ExperimentConfig(beta=0.3, modes=256, grid_ladder=[256, 512, 1024])
    return [welding_run(cfg, s, cfg.grid_ladder) for s in range(10)]


def test_07_roundtrip_welding(capsys, welding_ladders):
    dec = sum(r["strictly_decreasing"] for r in welding_ladders)
    worst = max(r["final_error"] for r in welding_ladders)
    ok = dec >= 9 and worst <= 0.05
    ladders = "; ".join(f"s{r['seed']}: " + "/".join(f"{row['roundtrip_error']:.1e}" for row in r["ladder"]) for r in welding_ladders)
    report(capsys, 7, ok, f"{dec}/10 strictly decreasing, max final error {worst:.2e} [{ladders}]")
    assert ok


def test_08_annulus_distortion(capsys, welding_ladders):
    rows = [row["distortion"] for r in welding_ladders for row in r["ladder"]]
    bad = sum(not d["passed"] for d in rows)
    margin = min(d["ratio"] / d["bound"] for d in rows)
    ok = bad == 0
    report(capsys, 8, ok, f"{bad} violations over {len(rows)} solved maps, min ratio/bound {margin:.2f}")
    assert ok


def test_09_tail_decay(capsys):
    beta, rho, reps = 0.5, 0.125, 2000
    delta = calibrate_delta(beta, rho, n_max=4, target=0.3, reps=400, seed=0)
    cells = [tail_probability_mc(beta, rho, N, delta, reps=reps, seed=0, n_max=4) for N in range(1, 5)]
    p = [c.p_hat for c in cells]
    ok = all(b <= a for a, b in zip(p[:-1], p[1:])) and cells[-1].wilson_hi < cells[0].wilson_lo
    detail = ", ".join(f"N={c.N}: {c.p_hat:.4f} [{c.wilson_lo:.4f}, {c.wilson_hi:.4f}]" for c in cells)
    report(capsys, 9, ok, f"delta={delta:.4e}; {detail}")
    assert ok


def test_10_holder_positivity(capsys):
    cfg = ExperimentConfig(beta=0.5, grid=256)
    alphas = []
    for s in range(100):
        m = chaos_masses(sample_fourier_field(cfg.modes, s), cfg.beta, cfg.level)
        f = solve_welding(homeomorphism_from_measure(m), cfg.grid, cfg.ell, cfg.tol, cfg.side)
        alphas.append(holder_estimate(welding_curve(f, cfg.n_boundary))[0])
    circle = holder_estimate(welding_curve(solve_welding(CircleMap.identity(1024), 256), 1024))[0]
    c = plane_grid(256)
    X, Y = np.meshgrid(c, c)
    mu = DilatationField("disk", c, c, np.where(np.abs(X + 1j * Y) < 1, 0.3, 0.0).astype(complex))
    ellipse = holder_estimate(welding_curve(solve_beltrami(mu), 1024))[0]
    ok = min(alphas) > 0.05 and abs(circle - 1) <= 0.02 and abs(ellipse - 1) <= 0.02
    report(capsys, 10, ok, f"min alpha {min(alphas):.3f}, mean {np.mean(alphas):.3f}; circle {circle:.4f}, ellipse {ellipse:.4f}")
    assert ok


def test_11_integrability_probe(capsys):
    good = 0
    for s in range(50):
        m = chaos_masses(sample_fourier_field(65536, s), 0.5, 16)
        inc = k_integrability_probe(m).increments[-3:]
        good += bool(np.all(np.diff(inc) < 0))
    ok = good == 50
    report(capsys, 11, ok, f"{good}/50 seeds with decreasing increments at the three finest levels")
    assert ok
