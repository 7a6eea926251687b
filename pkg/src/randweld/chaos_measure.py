"""Cutoff chaos measures on the circle and the induced random homeomorphism.

Given a sampled field ``X_eps`` with pointwise variance ``s2`` the measure has
density ``exp(beta X_eps(t) - beta^2 s2 / 2)`` with respect to ``dt`` on
``[0, 1)``, so ``E tau_eps(I) = |I|`` for every interval.  Masses of dyadic
intervals are computed by a composite midpoint rule; ``h(x) = tau([0, x]) /
tau([0, 1))`` is the associated circle homeomorphism.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .field_sampler import (
    FieldRealization,
    band_edges,
    band_covariance,
    band_values_batch,
    default_band_grid,
    fourier_coefficients,
    fourier_values_uniform,
    harmonic_number,
)
from .rng import stream

BETA_CRITICAL = math.sqrt(2.0)
_EXP_LIMIT = 700.0


class BetaGuardError(ValueError):
    """Raised for ``beta^2 >= 2`` unless the guard is explicitly overridden."""


def check_beta(beta: float, override: bool = False) -> None:
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if beta * beta >= 2.0 and not override:
        raise BetaGuardError(f"beta={beta} is outside the subcritical range beta^2 < 2")


def dyadic(level: int, index: int) -> tuple[int, int]:
    """Dyadic interval ``[index 2^-level, (index+1) 2^-level]`` as a ``(level, index)`` pair."""
    return (int(level), int(index))


@dataclass(frozen=True, eq=False)
class ChaosMeasure:
    beta: float
    cutoff: float
    level: int
    masses: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.masses.shape != (2**self.level,):
            raise ValueError("masses must have 2**level entries")
        if not np.all(self.masses > 0):
            raise ValueError("chaos masses must be strictly positive")

    @property
    def total(self) -> float:
        return float(np.sum(self.masses))

    def coarsen(self, level: int) -> np.ndarray:
        """Masses of the ``2**level`` dyadic intervals at a coarser level."""
        if not 0 <= level <= self.level:
            raise ValueError(f"level {level} not representable at resolution {self.level}")
        return self.masses.reshape(2**level, -1).sum(axis=1)

    def mass(self, interval: tuple[int, int]) -> float:
        """Mass of a dyadic interval; indices outside ``[0, 2^j)`` wrap periodically."""
        j, k = interval
        if j > self.level:
            raise ValueError(f"interval level {j} exceeds measure level {self.level}")
        step = 2 ** (self.level - j)
        k = k % 2**j
        return float(np.sum(self.masses[k * step : (k + 1) * step]))


@dataclass(frozen=True, eq=False)
class CircleMap:
    """Monotone 1-periodic-plus-identity map ``h`` on knots ``x_i = i/n``, linear in between."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v[0] != 0.0 or v[-1] != 1.0:
            raise ValueError("circle map must satisfy h(0) = 0 and h(1) = 1")
        if not np.all(np.diff(v) > 0):
            raise AssertionError("circle map knots are not strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def identity(cls, n: int = 1) -> "CircleMap":
        return cls(np.arange(n + 1) / n)

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def knots(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) * self.n

    @property
    def integral(self) -> float:
        """``int_0^1 h``."""
        return float(np.sum(self.values[:-1] + self.values[1:]) / (2 * self.n))

    @property
    def c0(self) -> float:
        return self.integral - 0.5

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        k = np.floor(x)
        u = (x - k) * self.n
        i = np.minimum(np.floor(u).astype(np.int64), self.n - 1)
        return k, i, u - i

    def __call__(self, x):
        k, i, w = self._split(x)
        v = self.values
        return k + v[i] + w * (v[i + 1] - v[i])

    def slope_at(self, x):
        """Right derivative of ``h``."""
        _, i, _ = self._split(x)
        return self.slopes[i]

    def antiderivative(self, x):
        """``H(x) = int_0^x h`` for any real ``x``, exact for the piecewise-linear ``h``."""
        k, i, w = self._split(x)
        v = self.values
        cell = (v[:-1] + v[1:]) / (2 * self.n)
        cum = np.concatenate([[0.0], np.cumsum(cell)])
        r = (i + w) / self.n
        h0r = cum[i] + (w / self.n) * (v[i] + 0.5 * w * (v[i + 1] - v[i]))
        return k * self.integral + 0.5 * k * (k - 1) + h0r + k * r

    def inverse(self, y):
        """``h^{-1}`` by monotone lookup (exact for the piecewise-linear map)."""
        y = np.asarray(y, dtype=float)
        k = np.floor(y)
        r = y - k
        x0 = np.interp(r, self.values, self.knots)
        return k + x0


# ---------------------------------------------------------------------------
# measure construction


def quadrature_points(level: int, n_modes: int = 0, nodes_per_interval: int | None = None) -> int:
    """Midpoint-rule size: at least 8 nodes per finest interval and 16 per Fourier wavelength."""
    if nodes_per_interval is None:
        q = max(8, 16 * n_modes // 2**level if n_modes else 8)
        q = 2 ** math.ceil(math.log2(q))
    else:
        q = int(nodes_per_interval)
    return 2**level * q


def densities(values: np.ndarray, beta: float, variance: float) -> np.ndarray:
    """``exp(beta X - beta^2 var / 2)`` with an overflow guard."""
    expo = beta * values - 0.5 * beta * beta * variance
    peak = np.max(np.abs(expo)) if expo.size else 0.0
    if peak > _EXP_LIMIT:
        idx = np.unravel_index(np.argmax(np.abs(expo)), expo.shape)
        t = (idx[-1] + 0.5) / expo.shape[-1]
        raise OverflowError(f"chaos exponent {expo[idx]:.1f} out of range at t={t:.6g}")
    return np.exp(expo)


def masses_from_values(values: np.ndarray, beta: float, variance: float, level: int) -> np.ndarray:
    """Dyadic masses from field values on a uniform midpoint grid; works on batches ``(..., M)``."""
    m = values.shape[-1]
    if m % 2**level:
        raise ValueError("quadrature grid must be a multiple of 2**level")
    dens = densities(values, beta, variance)
    return dens.reshape(values.shape[:-1] + (2**level, m // 2**level)).sum(axis=-1) / m


def chaos_masses(
    r: FieldRealization,
    beta: float,
    level: int,
    nodes_per_interval: int | None = None,
    override_beta_guard: bool = False,
) -> ChaosMeasure:
    check_beta(beta, override_beta_guard)
    if level < 1:
        raise ValueError("level must be >= 1")
    if r.backend == "fourier":
        m = quadrature_points(level, r.n_modes, nodes_per_interval)
        vals = fourier_values_uniform(r.coefficients, m, offset=0.5)
    elif r.backend == "band":
        if r.n_grid % 2**level:
            raise ValueError(f"band grid {r.n_grid} cannot resolve level {level}")
        vals = r.grid_values()
    else:
        raise ValueError(f"unknown backend {r.backend!r}")
    masses = masses_from_values(vals, beta, r.variance_at_point, level)
    return ChaosMeasure(
        beta=float(beta),
        cutoff=r.cutoff,
        level=int(level),
        masses=masses,
        meta={
            "backend": r.backend,
            "seed": r.seed,
            "replicate": r.replicate,
            "quadrature_points": int(vals.shape[-1]),
            "normalization": "density exp(beta X - beta^2 Var X / 2); no extra scalar prefactors",
        },
    )


def homeomorphism_from_measure(m: ChaosMeasure, grid_size: int | None = None) -> CircleMap:
    n = grid_size or 2**m.level
    if n & (n - 1) or n > 2**m.level:
        raise ValueError("grid_size must be a power of two not exceeding 2**level")
    coarse = m.coarsen(int(math.log2(n)))
    cum = np.concatenate([[0.0], np.cumsum(coarse)])
    vals = cum / cum[-1]
    vals[-1] = 1.0
    return CircleMap(vals)


def delta_ratio(m: ChaosMeasure, j1: tuple[int, int], j2: tuple[int, int]) -> float:
    a, b = m.mass(j1), m.mass(j2)
    return a / b + b / a


def holder_exponent_probe(m: ChaosMeasure, a: float) -> float:
    """Empirical constant ``max_I tau(I) / |I|^a`` over dyadic intervals at the measure's level."""
    if not 0.0 < a <= 1.0:
        raise ValueError("a must lie in (0, 1]")
    return float(np.max(m.masses) / (2.0 ** (-m.level)) ** a)


def quasisymmetry_probe(h: CircleMap, t_grid) -> float:
    """Discrete version of ``sup |phi(s+t) - phi(s)| / |phi(s-t) - phi(s)|`` over knots ``s``.

    Both signs of every ``t`` are used, so the result is always ``>= 1``.
    """
    s = h.knots[:-1]
    hs = h(s)
    best = 1.0
    for t in np.atleast_1d(t_grid):
        if abs(round(t * h.n) - t * h.n) > 1e-9:
            raise ValueError(f"t={t} is not on the knot grid")
        fwd = np.abs(np.sin(np.pi * (h(s + t) - hs)))
        bwd = np.abs(np.sin(np.pi * (hs - h(s - t))))
        ratio = fwd / bwd
        best = max(best, float(np.max(ratio)), float(np.max(1.0 / ratio)))
    return best


# ---------------------------------------------------------------------------
# Monte Carlo estimators


@dataclass
class MomentScalingResult:
    slope: float
    stderr: float
    levels: list
    log_sizes: np.ndarray
    log_moments: np.ndarray
    theory: float
    flagged: bool
    reps: int
    seed: int

    def report(self) -> dict:
        return {
            "estimate": self.slope,
            "stderr": self.stderr,
            "reps": self.reps,
            "seed": self.seed,
            "theory": self.theory,
            "flagged": self.flagged,
        }


def zeta(p: float, beta: float) -> float:
    """Multifractal exponent ``p - beta^2 (p^2 - p) / 2``."""
    return p - beta * beta * (p * p - p) / 2.0


def _fourier_mass_batches(beta, n_modes, level, seed, reps, batch):
    m = quadrature_points(level, n_modes)
    var = harmonic_number(n_modes)
    for start in range(0, reps, batch):
        idx = range(start, min(reps, start + batch))
        coeffs = np.stack([fourier_coefficients(n_modes, seed, r) for r in idx])
        vals = fourier_values_uniform(coeffs, m, offset=0.5)
        yield masses_from_values(vals, beta, var, level)


def moment_scaling_estimate(
    beta: float,
    p: float,
    levels=range(3, 9),
    reps: int = 1000,
    seed: int = 0,
    n_modes: int | None = None,
    n_boot: int = 200,
    batch: int = 64,
) -> MomentScalingResult:
    """Regression slope of ``log E tau(I)^p`` against ``log |I|`` over dyadic levels.

    Moments at each level average over all ``2^n`` intervals (stationarity)
    and all replicates; the standard error comes from a bootstrap over
    replicates.
    """
    check_beta(beta)
    levels = sorted(levels)
    flagged = False
    if beta > 0 and p >= 2.0 / beta**2:
        warnings.warn(f"p={p} is outside the moment window p < 2/beta^2; estimates may diverge", RuntimeWarning)
        flagged = True
    finest = levels[-1]
    n_modes = n_modes or 16 * 2**finest
    per_rep = np.empty((reps, len(levels)))
    row = 0
    for masses in _fourier_mass_batches(beta, n_modes, finest, seed, reps, batch):
        for j, lev in enumerate(levels):
            coarse = masses.reshape(masses.shape[0], 2**lev, -1).sum(axis=-1)
            per_rep[row : row + masses.shape[0], j] = np.mean(coarse**p, axis=1)
        row += masses.shape[0]
    x = -np.array(levels) * math.log(2.0)

    def fit(rows):
        y = np.log(rows.mean(axis=0))
        return np.polyfit(x, y, 1)[0], y

    slope, y = fit(per_rep)
    g = stream(seed, "bootstrap", "moments")
    boots = [fit(per_rep[g.integers(0, reps, reps)])[0] for _ in range(n_boot)]
    return MomentScalingResult(
        slope=float(slope),
        stderr=float(np.std(boots, ddof=1)),
        levels=levels,
        log_sizes=x,
        log_moments=y,
        theory=zeta(p, beta),
        flagged=flagged,
        reps=reps,
        seed=seed,
    )


def negative_moment_probe(
    beta: float,
    q: float,
    cutoffs,
    reps: int = 1000,
    seed: int = 0,
    return_stderr: bool = False,
    batch: int = 64,
):
    """Empirical ``E tau_N([0, 1/2])^{-q}`` for each Fourier cutoff ``N``.

    All cutoffs share the same coefficient streams, so successive estimates
    are comparisons on common noise.
    """
    check_beta(beta)
    if q <= 0:
        raise ValueError("q must be positive")
    cutoffs = list(cutoffs)
    top = max(cutoffs)
    samples = np.empty((len(cutoffs), reps))
    for start in range(0, reps, batch):
        idx = range(start, min(reps, start + batch))
        full = np.stack([fourier_coefficients(top, seed, r) for r in idx])
        for j, n in enumerate(cutoffs):
            m = quadrature_points(1, n)
            vals = fourier_values_uniform(full[:, :n], m, offset=0.5)
            masses = masses_from_values(vals, beta, harmonic_number(n), 1)
            samples[j, start : start + len(idx)] = masses[:, 0] ** (-q)
    means = samples.mean(axis=1)
    if return_stderr:
        return means, samples.std(axis=1, ddof=1) / math.sqrt(reps)
    return means


@dataclass
class ScalingRatioResult:
    small: np.ndarray
    large: np.ndarray
    ks_statistic: float
    p_value: float
    critical_1pct: float


def band_interval_masses(values: np.ndarray, beta: float, variance: float, intervals) -> np.ndarray:
    """Masses of arbitrary grid-aligned intervals from band-field values ``(R, M)``."""
    m = values.shape[-1]
    dens = densities(values, beta, variance)
    cum = np.concatenate([np.zeros(values.shape[:-1] + (1,)), np.cumsum(dens, axis=-1)], axis=-1) / m
    out = []
    for a, b in intervals:
        ia, ib = a * m, b * m
        if abs(ia - round(ia)) > 1e-9 or abs(ib - round(ib)) > 1e-9:
            raise ValueError(f"interval [{a}, {b}] is not aligned with the band grid")
        out.append(cum[..., int(round(ib))] - cum[..., int(round(ia))])
    return np.stack(out, axis=-1)


def scaling_ratio_probe(
    beta: float,
    x: float,
    y: float,
    a: float,
    b: float,
    lam: float,
    reps: int = 1000,
    seed: int = 0,
    levels: int = 10,
    batch: int = 64,
) -> ScalingRatioResult:
    """Samples of ``tau([lam x, lam y]) / tau([lam a, lam b])`` and ``tau([x, y]) / tau([a, b])``.

    Uses the band backend (non-periodic regime), with independent replicate
    streams for the two samples, and reports a two-sample KS statistic.
    """
    check_beta(beta)
    if not 0 < lam <= 1:
        raise ValueError("lam must lie in (0, 1]")
    for v in (x, y, a, b):
        if not 0.0 <= v <= 0.5:
            raise ValueError("intervals must lie inside [0, 1/2]")
    n_grid = default_band_grid(levels)
    var = sum(band_covariance(0.0, lo, hi) for lo, hi in band_edges(levels))

    def ratios(tag, ivs):
        out = np.empty(reps)
        for start in range(0, reps, batch):
            idx = range(start, min(reps, start + batch))
            vals = band_values_batch(levels, n_grid, seed, [_tagged(tag, r) for r in idx])
            ms = band_interval_masses(vals, beta, var, ivs)
            out[start : start + len(idx)] = ms[:, 0] / ms[:, 1]
        return out

    small = ratios(1, [(lam * x, lam * y), (lam * a, lam * b)])
    large = ratios(2, [(x, y), (a, b)])
    res = stats.ks_2samp(small, large)
    crit = 1.628 * math.sqrt(2.0 / reps)
    return ScalingRatioResult(small, large, float(res.statistic), float(res.pvalue), crit)


def _tagged(tag: int, r: int) -> int:
    # disjoint replicate index ranges for the two samples
    return tag * 10**9 + r


@dataclass
class MartingaleResult:
    beta: float
    intervals: list
    estimate: np.ndarray
    stderr: np.ndarray
    reps: int
    seed: int

    def z_scores(self) -> np.ndarray:
        lengths = np.array([b - a for a, b in self.intervals])
        return (self.estimate - lengths) / self.stderr


def martingale_check(
    beta: float,
    intervals=((0.0, 0.5), (0.0, 0.25)),
    reps: int = 10_000,
    seed: int = 0,
    n_modes: int = 1024,
    batch: int = 256,
) -> MartingaleResult:
    """Sample means and standard errors of ``tau(I)`` for dyadic-aligned intervals."""
    check_beta(beta)
    level = 1
    for a, b in intervals:
        while abs(a * 2**level - round(a * 2**level)) > 1e-12 or abs(b * 2**level - round(b * 2**level)) > 1e-12:
            level += 1
    vals = np.empty((reps, len(intervals)))
    row = 0
    for masses in _fourier_mass_batches(beta, n_modes, level, seed, reps, batch):
        cum = np.concatenate([np.zeros((masses.shape[0], 1)), np.cumsum(masses, axis=1)], axis=1)
        for j, (a, b) in enumerate(intervals):
            vals[row : row + masses.shape[0], j] = cum[:, round(b * 2**level)] - cum[:, round(a * 2**level)]
        row += masses.shape[0]
    return MartingaleResult(
        float(beta), [tuple(i) for i in intervals], vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(reps), reps, seed
    )
