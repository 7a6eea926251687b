import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from randweld.field_sampler import (
    FieldRealization,
    QuadratureError,
    band_covariance,
    band_covariance_numeric,
    band_edges,
    band_values_batch,
    covariance_oracle_trace,
    default_band_grid,
    empirical_covariance,
    evaluate_field,
    fourier_coefficients,
    fourier_values_uniform,
    harmonic_number,
    sample_band_field,
    sample_fourier_field,
    v_covariance,
)
from randweld.rng import stream

# overlap integrals of the cone and its shift, evaluated with mpmath at 30 digits
BAND_ORACLE = {
    (0.125, 1 / 16, 0.5): 0.636294361119890618834464242916,
    (0.05, 1 / 16, 0.25): 0.786294361119890618834464242916,
    (0.05, 1 / 64, 0.125): 0.316290731874155065183527211768,
}


def test_zero_modes_is_zero_field():
    r = sample_fourier_field(0, seed=3)
    assert np.all(evaluate_field(r, np.linspace(0, 1, 17, endpoint=False)) == 0)


def test_single_mode_value():
    r = FieldRealization("fourier", np.array([[1.0, 0.0]]), seed=0, n_modes=1)
    assert evaluate_field(r, [0.0])[0] == pytest.approx(1.0)


@given(st.floats(0, 1, exclude_max=True))
def test_periodicity(t):
    r = sample_fourier_field(16, seed=1)
    a, b = evaluate_field(r, [t]), evaluate_field(r, [t + 1.0])
    assert a[0] == pytest.approx(b[0], abs=1e-10)


def test_same_seed_same_coefficients():
    assert np.array_equal(fourier_coefficients(64, 5, 2), fourier_coefficients(64, 5, 2))
    assert not np.array_equal(fourier_coefficients(64, 5, 2), fourier_coefficients(64, 5, 3))


def test_smaller_cutoff_is_prefix():
    big = fourier_coefficients(256, 11)
    assert np.array_equal(fourier_coefficients(32, 11), big[:32])


def test_streams_independent_of_order():
    a = stream(1, "x", 3).standard_normal(4)
    stream(1, "y").standard_normal(100)
    assert np.array_equal(a, stream(1, "x", 3).standard_normal(4))


def test_variance_is_harmonic_number():
    assert sample_fourier_field(4, 0).variance_at_point == pytest.approx(25 / 12, abs=1e-15)
    assert harmonic_number(4) == pytest.approx(25 / 12)


def test_mc_variance_and_half_lag_covariance():
    # X at t and t+1/2 with N=4: Var = 25/12, Cov = -7/12
    reps = 20000
    co = np.stack([fourier_coefficients(4, 2024, r) for r in range(reps)])
    vals = fourier_values_uniform(co, 8, offset=0.0)
    var = vals.var(axis=0, ddof=1)
    se_var = math.sqrt(2 / reps) * 25 / 12
    assert np.all(np.abs(var - 25 / 12) < 3 * se_var)  # lag-free variance
    prod = vals[:, 0] * vals[:, 4]
    assert abs(prod.mean() + 7 / 12) < 3 * prod.std(ddof=1) / math.sqrt(reps)


def test_covariance_oracle_closed_forms():
    assert covariance_oracle_trace(0.5) == pytest.approx(math.log(0.5))
    assert covariance_oracle_trace(1 / 6) == pytest.approx(0.0, abs=1e-14)
    assert covariance_oracle_trace(0.5, 4) == pytest.approx(-7 / 12)
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            covariance_oracle_trace(bad)


def test_empirical_covariance_within_3se():
    e = empirical_covariance(256, [0.1, 0.25], reps=2000, seed=4, method="pointwise")
    assert np.all(np.abs(e.estimate - e.truncated) < 3 * e.stderr)
    e = empirical_covariance(256, [0.1, 0.25], reps=2000, seed=4)
    assert np.all(np.abs(e.estimate - e.truncated) < 3 * e.stderr)


def test_band_levels_zero_is_zero_field():
    r = sample_band_field(0, seed=1, n_grid=64)
    assert np.all(r.grid_values() == 0)


def test_band_numeric_matches_mpmath_oracle():
    for (d, lo, hi), val in BAND_ORACLE.items():
        assert band_covariance_numeric(d, (lo, hi)) == pytest.approx(val, abs=1e-10)
        assert float(band_covariance(d, lo, hi)) == pytest.approx(val, abs=1e-12)


def test_band_numeric_edge_cases():
    assert band_covariance_numeric(0.5, (1 / 16, 0.5)) == pytest.approx(0.0, abs=1e-12)
    assert band_covariance_numeric(0.0, (1 / 8, 0.5)) == pytest.approx(math.log(4), abs=1e-10)


@given(st.floats(0.0, 0.45), st.floats(0.01, 0.1), st.floats(0.11, 0.2), st.floats(0.21, 0.5))
def test_band_additivity(d, a, b, c):
    lhs = band_covariance_numeric(d, (a, b)) + band_covariance_numeric(d, (b, c))
    assert lhs == pytest.approx(band_covariance_numeric(d, (a, c)), abs=1e-9)


def test_deep_cutoff_covariance():
    assert v_covariance(0.125) == pytest.approx(math.log(4) - 0.75)
    total = sum(float(band_covariance(0.125, lo, hi)) for lo, hi in band_edges(20))
    assert total == pytest.approx(math.log(4) - 0.75, abs=1e-6)


def test_band_quadrature_failure_is_reported():
    with pytest.raises((QuadratureError, ValueError)):
        band_covariance_numeric(0.1, (0.2, 0.1))


def test_band_sum_is_additive_over_bands():
    # empirical cross-covariance of disjoint bands is ~0; the sum's covariance is the band sum
    levels, reps = 4, 4000
    n = default_band_grid(levels)
    lag = n // 8
    full = band_values_batch(levels, n, 9, range(reps))
    emp = np.mean(full[:, 0] * full[:, lag])
    se = np.std(full[:, 0] * full[:, lag], ddof=1) / math.sqrt(reps)
    pred = sum(float(band_covariance(lag / n, lo, hi)) for lo, hi in band_edges(levels))
    assert abs(emp - pred) < 3 * se


def test_disjoint_bands_uncorrelated():
    reps = 3000
    prods = np.array([sample_band_field(3, 17, r).band_values[[0, 2], 0].prod() for r in range(reps)])
    assert abs(prods.mean()) < 3 * prods.std(ddof=1) / math.sqrt(reps)
