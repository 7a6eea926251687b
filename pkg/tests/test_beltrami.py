import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import ellipse_welding_knots
from randweld.ba_extension import DilatationField, plane_grid
from randweld.beltrami import (
    BeltramiConvergenceError,
    DegenerateMapError,
    SelfIntersectionError,
    WeldingCurve,
    beurling_transform,
    cauchy_transform,
    conformal_factors,
    contraction_bound,
    exterior_cr_residual,
    fd_beltrami_residual,
    hausdorff,
    holder_estimate,
    invert_psi,
    is_simple_closed,
    polar_cr_residual,
    rim_decay_fit,
    roundtrip_error,
    solve_beltrami,
    solve_welding,
    truncate_dilatation,
    truncation_ladder,
    welding_curve,
)
from randweld.chaos_measure import CircleMap, chaos_masses, homeomorphism_from_measure
from randweld.field_sampler import sample_fourier_field
from randweld.ba_extension import psi


def grid(n, side=4.0):
    c = plane_grid(n, side)
    X, Y = np.meshgrid(c, c)
    return c, X + 1j * Y


def ellipse_mu(n, k=0.3):
    c, Z = grid(n)
    return DilatationField("disk", c, c, np.where(np.abs(Z) < 1, k, 0.0).astype(complex))


def ellipse_points(theta, k=0.3):
    e = np.exp(1j * theta)
    return e + k / e


@pytest.mark.parametrize("n", [64, 128])
def test_beurling_of_bump(n):
    c, Z = grid(n, 8.0)
    h = c[1] - c[0]
    u = np.exp(-2 * np.abs(Z) ** 2)
    dbar, d = -2 * Z * u, -2 * np.conj(Z) * u
    assert np.max(np.abs(beurling_transform(dbar, h) - d)) < 1e-8


@given(st.integers(0, 1000))
def test_beurling_linear_and_contractive(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 32, 32)) + 1j * rng.normal(size=(2, 32, 32))
    s = complex(*rng.normal(size=2))
    lhs = beurling_transform(a + s * b)
    assert np.allclose(lhs, beurling_transform(a) + s * beurling_transform(b))
    assert np.linalg.norm(beurling_transform(a)) <= np.linalg.norm(a) * (1 + 1e-12)


def test_operator_shape_checks():
    with pytest.raises(ValueError):
        beurling_transform(np.zeros((48, 48)))
    with pytest.raises(ValueError):
        beurling_transform(np.zeros((32, 32)), pad=1)
    with pytest.raises(ValueError):
        cauchy_transform(np.zeros((32, 16)))
    with pytest.raises(ValueError):
        solve_beltrami(np.zeros((96, 96)))


def test_cauchy_transform_inverts_dbar():
    c, Z = grid(128, 8.0)
    h = c[1] - c[0]
    u = np.exp(-2 * np.abs(Z) ** 2)
    assert np.max(np.abs(cauchy_transform(-2 * Z * u, h) - u)) < 5e-3


def test_zero_dilatation_is_identity():
    f = solve_beltrami(np.zeros((64, 64)))
    assert f.iterations == 0 and np.allclose(f.values, f.z)
    curve = welding_curve(f, 512)
    assert np.allclose(np.abs(curve.points), 1.0)
    assert curve.closure_gap() == pytest.approx(abs(np.exp(2j * np.pi / 512) - 1))


@pytest.mark.parametrize("n", [128, 256])
def test_ellipse_oracle(n):
    f = solve_beltrami(ellipse_mu(n))
    inside = np.abs(f.z) < 0.9
    outside = (np.abs(f.z) > 1.1) & (np.abs(f.z) < 1.9)
    exact = np.where(np.abs(f.z) < 1, f.z + 0.3 * np.conj(f.z), f.z + 0.3 / np.where(f.z == 0, 1, f.z))
    err = np.abs(f.values - exact)
    assert err[inside | outside].max() < 8.0 / n
    theta = 2 * np.pi * np.arange(1024) / 1024
    assert hausdorff(welding_curve(f, 1024).points, ellipse_points(theta)) < 4.0 / n
    assert f.iterations <= np.ceil(contraction_bound(0.3, 1e-10)) + 2


def test_rim_decay_matches_ellipse():
    f = solve_beltrami(ellipse_mu(256))
    mean, c1, misfit = rim_decay_fit(f)
    assert abs(c1 - 0.3) < 0.01 and misfit < 0.05 and mean < 0.01


def test_random_smooth_dilatation():
    rng = np.random.default_rng(1)
    c, Z = grid(256)
    mu = np.zeros_like(Z)
    for _ in range(4):
        z0 = complex(*rng.uniform(-0.6, 0.6, 2))
        mu += np.exp(1j * rng.uniform(0, 6.3)) * np.exp(-10 * np.abs(Z - z0) ** 2)
    mu *= 0.6 / np.abs(mu).max() * (np.abs(Z) < 1)
    f = solve_beltrami(mu, tol=1e-10)
    assert f.residual < 10 * 1e-10
    assert fd_beltrami_residual(f, np.abs(Z) < 0.9) < 0.02
    assert exterior_cr_residual(f) < 0.01
    assert is_simple_closed(welding_curve(f, 1024).points)


def test_convergence_error_reports_state():
    with pytest.raises(BeltramiConvergenceError) as e:
        solve_beltrami(ellipse_mu(64, 0.9), max_iter=3)
    assert e.value.iterations == 3 and e.value.mu_sup == pytest.approx(0.9)


def test_sup_mu_at_least_one_rejected():
    with pytest.raises(ValueError):
        solve_beltrami(ellipse_mu(32, 1.0).mu)


def test_truncation():
    mu = ellipse_mu(32, 0.5)
    assert np.allclose(truncate_dilatation(mu, 1).mu, mu.mu / 2)
    K = [truncate_dilatation(mu, e).K.max() for e in (1, 2, 4, 8)]
    assert np.all(np.diff(K) > 0)
    clamp = truncate_dilatation(mu, 1, mode="clamp", k_max=0.2)
    assert np.abs(clamp.mu).max() == pytest.approx(0.2)
    with pytest.raises(ValueError):
        truncate_dilatation(mu, 0)


def test_truncation_ladder_shrinks():
    d = truncation_ladder(ellipse_mu(128, 0.6), [1, 2, 4, 8], n_points=512)
    assert np.all(np.diff(d) < 0)


def test_self_intersection_detection():
    t = 2 * np.pi * np.arange(256) / 256
    assert is_simple_closed(np.exp(1j * t))
    eight = np.sin(t) + 1j * np.sin(t) * np.cos(t)
    assert not is_simple_closed(eight)


def test_self_intersecting_map_raises():
    class Fake:
        def __call__(self, pts):
            th = np.angle(pts)
            return np.sin(th) + 1j * np.sin(th) * np.cos(th)

    with pytest.raises(SelfIntersectionError):
        welding_curve(Fake(), 512)


@pytest.mark.parametrize("k", [0.0, 0.3])
def test_holder_smooth_curves(k):
    theta = 2 * np.pi * np.arange(1024) / 1024
    alpha, _ = holder_estimate(WeldingCurve(theta, ellipse_points(theta, k)))
    assert alpha == pytest.approx(1.0, abs=0.02)
    with pytest.raises(ValueError):
        holder_estimate(WeldingCurve(theta[:256], ellipse_points(theta[:256], k)))


def test_degenerate_map_refused():
    h = CircleMap(np.array([0.0, 0.5, 0.5 + 1e-14, 1.0]))
    with pytest.raises(DegenerateMapError):
        solve_welding(h, 64)


def test_invert_psi_roundtrip():
    m = chaos_masses(sample_fourier_field(256, 0), 0.5, 8)
    h = homeomorphism_from_measure(m)
    rng = np.random.default_rng(0)
    z = np.sqrt(rng.uniform(0.01, 0.99, 200)) * np.exp(2j * np.pi * rng.uniform(size=200))
    assert np.max(np.abs(invert_psi(h, psi(h, z)) - z)) < 1e-9


def test_identity_welding_roundtrip():
    h = CircleMap.identity(1024)
    f = solve_welding(h, 128)
    cf = conformal_factors(f, h, 1024)
    assert roundtrip_error(cf) < 1e-8
    assert polar_cr_residual(cf) < 1e-3


def test_seeded_ellipse_welding():
    h = CircleMap(ellipse_welding_knots(1.3, 0.7, 1024))
    errs = []
    for n in (128, 256):
        f = solve_welding(h, n, ell=10**6)
        errs.append(roundtrip_error(conformal_factors(f, h, 1024)))
    theta = 2 * np.pi * np.arange(1024) / 1024
    assert errs[1] < errs[0] < 1e-3
    assert hausdorff(welding_curve(f, 1024).points, ellipse_points(theta)) < 2e-3
