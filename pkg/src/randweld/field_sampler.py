"""Samplers for the log-correlated field on the circle.

Two backends are provided.

``fourier``
    Truncated series ``X_N(t) = sum_{n<=N} n^{-1/2} (A_n cos 2 pi n t + B_n sin 2 pi n t)``
    with i.i.d. standard normal ``A_n, B_n``.  The covariance is
    ``sum_{n<=N} cos(2 pi n d) / n`` which converges to ``-log(2 sin pi d)``.

``band``
    Scale-decomposed white-noise field over the cone
    ``V = {|x| < 1/4, 2|x| < y < 1/2}`` with hyperbolic area ``dx dy / y^2``.
    The cone is cut into horizontal bands ``(top r^{k+1}, top r^k)``; each band
    contributes an independent stationary Gaussian process with the exact
    overlap covariance, sampled on a periodic grid by circulant embedding.

A Fourier cutoff of ``N`` modes plays the role of a regularisation at scale
``1/N``; a band field with ``L`` levels is regularised at ``top * r^L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate

from .rng import stream

FORMAT_VERSION = 1


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


@dataclass(frozen=True, eq=False)
class FieldRealization:
    """One sampled field.

    For the Fourier backend ``coefficients`` has shape ``(n_modes, 2)`` holding
    ``(A_n, B_n)``.  For the band backend it has shape ``(levels, n_grid)`` and
    holds the white-noise draws fed to each band's circulant factor.
    """

    backend: str
    coefficients: np.ndarray
    seed: int
    replicate: int = 0
    n_modes: int = 0
    levels: int = 0
    n_grid: int = 0
    scale_ratio: float = 0.5
    top: float = 0.5
    meta: dict = field(default_factory=dict)

    @property
    def cutoff(self) -> float:
        """Regularisation scale: ``1/N`` (Fourier) or the lowest band edge."""
        if self.backend == "fourier":
            return 1.0 / self.n_modes if self.n_modes else 1.0
        return self.top * self.scale_ratio**self.levels

    @property
    def variance_at_point(self) -> float:
        if self.backend == "fourier":
            return harmonic_number(self.n_modes)
        return sum(band_covariance(0.0, lo, hi) for lo, hi in band_edges(self.levels, self.scale_ratio, self.top))

    @cached_property
    def band_values(self) -> np.ndarray:
        """Per-band field values on the nodes ``(j + 1/2) / n_grid``; shape ``(levels, n_grid)``."""
        if self.backend != "band":
            raise ValueError("band_values is only defined for the band backend")
        if self.levels == 0:
            return np.zeros((0, self.n_grid))
        roots = _band_circulant_roots(self.levels, self.n_grid, self.scale_ratio, self.top)
        return np.fft.ifft(roots * np.fft.fft(self.coefficients, axis=-1), axis=-1).real

    def grid_values(self) -> np.ndarray:
        """Field on the backend's natural midpoint grid (band backend only)."""
        if self.levels == 0:
            return np.zeros(self.n_grid)
        return self.band_values.sum(axis=0)


def harmonic_number(n: int) -> float:
    return float(np.sum(1.0 / np.arange(1, n + 1))) if n > 0 else 0.0


# ---------------------------------------------------------------------------
# Fourier backend


def fourier_coefficients(n_modes: int, seed: int, replicate: int = 0) -> np.ndarray:
    """``(n_modes, 2)`` array of ``(A_n, B_n)``.

    Draws are interleaved ``A_1, B_1, A_2, B_2, ...`` from one stream so a
    realization with fewer modes is an exact prefix of one with more modes
    (common noise across cutoffs).
    """
    if n_modes < 0:
        raise ValueError("n_modes must be >= 0")
    g = stream(seed, "fourier", replicate)
    return g.standard_normal(2 * n_modes).reshape(n_modes, 2)


def sample_fourier_field(n_modes: int, seed: int, replicate: int = 0) -> FieldRealization:
    return FieldRealization(
        backend="fourier",
        coefficients=fourier_coefficients(n_modes, seed, replicate),
        seed=int(seed),
        replicate=int(replicate),
        n_modes=int(n_modes),
        meta={"cutoff_convention": "epsilon ~ 1/N"},
    )


def _complex_amplitudes(coeffs: np.ndarray) -> np.ndarray:
    n = np.arange(1, coeffs.shape[-2] + 1)
    return (coeffs[..., 0] - 1j * coeffs[..., 1]) / np.sqrt(n)


def fourier_values_uniform(coeffs: np.ndarray, n_points: int, offset: float = 0.5) -> np.ndarray:
    """Evaluate on ``t_j = (j + offset) / n_points`` for one or a batch of coefficient arrays.

    ``coeffs`` has shape ``(..., N, 2)``; the result has shape ``(..., n_points)``.
    Uses an inverse real FFT when ``n_points > 2N``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    n_modes = coeffs.shape[-2]
    lead = coeffs.shape[:-2]
    if n_modes == 0:
        return np.zeros(lead + (n_points,))
    c = _complex_amplitudes(coeffs)
    n = np.arange(1, n_modes + 1)
    if n_points > 2 * n_modes:
        spec = np.zeros(lead + (n_points // 2 + 1,), dtype=complex)
        spec[..., 1 : n_modes + 1] = c * np.exp(2j * np.pi * n * offset / n_points) * (n_points / 2.0)
        return np.fft.irfft(spec, n=n_points, axis=-1)
    t = (np.arange(n_points) + offset) / n_points
    return _direct_sum(c, t)


def _direct_sum(c: np.ndarray, t: np.ndarray, chunk: int = 4096) -> np.ndarray:
    n = np.arange(1, c.shape[-1] + 1)
    out = np.empty(c.shape[:-1] + t.shape)
    for s in range(0, t.size, chunk):
        tt = t[s : s + chunk]
        phase = np.exp(2j * np.pi * np.outer(n, tt))
        out[..., s : s + chunk] = (c @ phase).real
    return out


def evaluate_field(r: FieldRealization, grid) -> np.ndarray:
    """Pointwise values of the realization; 1-periodic in ``t``."""
    t = np.asarray(grid, dtype=float)
    shape = t.shape
    t = t.ravel()
    if r.backend == "fourier":
        if r.n_modes == 0:
            return np.zeros(shape)
        return _direct_sum(_complex_amplitudes(r.coefficients), t).reshape(shape)
    if r.backend == "band":
        if r.levels == 0:
            return np.zeros(shape)
        vals = r.grid_values()
        # nodes sit at (j + 1/2)/n; periodic linear interpolation
        u = np.mod(t * r.n_grid - 0.5, r.n_grid)
        j = np.floor(u).astype(int)
        w = u - j
        return ((1 - w) * vals[j % r.n_grid] + w * vals[(j + 1) % r.n_grid]).reshape(shape)
    raise ValueError(f"unknown backend {r.backend!r}")


def covariance_oracle_trace(d: float, n_modes: int | None = None) -> float:
    """Covariance of the circle field at lag ``d``.

    With ``n_modes=None`` returns the untruncated kernel ``log(1/(2 sin(pi d)))``,
    which diverges at ``d in {0, 1}``.  Otherwise returns the partial sum
    ``sum_{n<=N} cos(2 pi n d)/n`` (finite for every ``d``).
    """
    if n_modes is None:
        if not 0.0 < d < 1.0:
            raise ValueError(f"lag must lie in (0, 1), got {d}")
        return math.log(1.0 / (2.0 * math.sin(math.pi * d)))
    n = np.arange(1, n_modes + 1)
    return float(np.sum(np.cos(2 * np.pi * n * d) / n))


# ---------------------------------------------------------------------------
# Band backend


def band_edges(levels: int, scale_ratio: float = 0.5, top: float = 0.5) -> list[tuple[float, float]]:
    """Scale intervals ``(top r^{k+1}, top r^k)`` for ``k = 0..levels-1``."""
    if not 0.0 < scale_ratio < 1.0:
        raise ValueError("scale_ratio must lie in (0, 1)")
    return [(top * scale_ratio ** (k + 1), top * scale_ratio**k) for k in range(levels)]


def _periodic_lag(d):
    d = np.mod(np.abs(d), 1.0)
    return np.minimum(d, 1.0 - d)


def band_covariance(d, y_lo: float, y_hi: float):
    """Closed-form hyperbolic area of ``V ∩ (V + d)`` inside ``y_lo < y < y_hi``.

    At height ``y`` the two slices overlap on a segment of length ``max(y - d, 0)``
    so the area is ``int_{max(y_lo, d)}^{y_hi} (y - d) / y^2 dy``.  Lags are
    taken modulo 1 (bands below height 1/2 never wrap twice).
    """
    if not 0.0 < y_lo < y_hi:
        raise ValueError("band must satisfy 0 < y_lo < y_hi")
    dd = _periodic_lag(np.asarray(d, dtype=float))
    a = np.maximum(y_lo, dd)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.log(y_hi / a) + dd * (1.0 / y_hi - 1.0 / a)
    val = np.where(dd >= y_hi, 0.0, val)
    return float(val) if np.ndim(val) == 0 else val


def v_covariance(d: float) -> float:
    """Untruncated cone-field covariance ``log(1/(2d)) + 2d - 1`` for ``0 < d <= 1/2``."""
    if not 0.0 < d <= 0.5:
        raise ValueError("lag must lie in (0, 1/2]")
    return math.log(1.0 / (2.0 * d)) + 2.0 * d - 1.0


def band_covariance_numeric(d: float, band: tuple[float, float], tol: float = 1e-10) -> float:
    """Oracle: adaptive 2-D quadrature of ``dx dy / y^2`` over ``V ∩ (V + d)`` in the band.

    The cone and its translate are represented by exact membership limits at
    each height, independent of :func:`band_covariance`.
    """
    y_lo, y_hi = band
    if not 0.0 < y_lo < y_hi:
        raise ValueError("band must satisfy 0 < y_lo < y_hi")

    def x_lo(y):
        return max(-y / 2.0, -0.25, d - y / 2.0, d - 0.25)

    def x_hi(y):
        return max(x_lo(y), min(y / 2.0, 0.25, d + y / 2.0, d + 0.25))

    def in_cone(x, y, shift):
        u = x - shift
        return abs(u) < 0.25 and 2.0 * abs(u) < y < 0.5

    def integrand(x, y):
        # membership tests guard against limit round-off
        if in_cone(x, y, 0.0) and in_cone(x, y, d):
            return 1.0 / (y * y)
        return 0.0

    if d >= y_hi:
        return 0.0
    # the overlap starts at y = d; splitting there keeps the integrand smooth per piece
    pieces = [(y_lo, y_hi)] if d <= y_lo else [(d, y_hi)]
    total = 0.0
    for a, b in pieces:
        val, err = integrate.dblquad(integrand, a, b, x_lo, x_hi, epsabs=tol, epsrel=tol)
        if not np.isfinite(val) or err > max(100 * tol, 1e-8 * abs(val)):
            raise QuadratureError(f"band quadrature did not converge: value={val}, error={err}")
        total += val
    return total


@lru_cache(maxsize=64)
def _band_circulant_roots(levels: int, n_grid: int, scale_ratio: float, top: float) -> np.ndarray:
    lags = np.arange(n_grid) / n_grid
    roots = np.empty((levels, n_grid))
    for k, (lo, hi) in enumerate(band_edges(levels, scale_ratio, top)):
        eig = np.fft.fft(band_covariance(lags, lo, hi)).real
        if eig.min() < -1e-8 * eig.max():
            raise ArithmeticError(f"band {k} circulant has a negative eigenvalue {eig.min():.3e}")
        roots[k] = np.sqrt(np.clip(eig, 0.0, None))
    roots.setflags(write=False)
    return roots


def default_band_grid(levels: int, scale_ratio: float = 0.5, top: float = 0.5) -> int:
    """Power-of-two grid with at least 8 nodes per finest band height."""
    finest = top * scale_ratio**levels if levels else top
    return int(2 ** math.ceil(math.log2(8.0 / finest)))


def band_noise(levels: int, n_grid: int, seed: int, replicate: int = 0) -> np.ndarray:
    """White-noise draws for each band, one independent stream per band."""
    out = np.empty((levels, n_grid))
    for k in range(levels):
        out[k] = stream(seed, "band", replicate, k).standard_normal(n_grid)
    return out


def sample_band_field(
    levels: int,
    seed: int,
    replicate: int = 0,
    n_grid: int | None = None,
    scale_ratio: float = 0.5,
    top: float = 0.5,
) -> FieldRealization:
    if levels < 0:
        raise ValueError("levels must be >= 0")
    if top > 0.5:
        raise ValueError("band backend is only valid below height 1/2")
    n = n_grid or default_band_grid(levels, scale_ratio, top)
    return FieldRealization(
        backend="band",
        coefficients=band_noise(levels, n, seed, replicate),
        seed=int(seed),
        replicate=int(replicate),
        levels=int(levels),
        n_grid=int(n),
        scale_ratio=float(scale_ratio),
        top=float(top),
    )


def band_values_batch(
    levels: int, n_grid: int, seed: int, replicates, scale_ratio: float = 0.5, top: float = 0.5
) -> np.ndarray:
    """Summed band field for several replicates, shape ``(len(replicates), n_grid)``."""
    reps = list(replicates)
    if levels == 0:
        return np.zeros((len(reps), n_grid))
    roots = _band_circulant_roots(levels, n_grid, scale_ratio, top)
    noise = np.stack([band_noise(levels, n_grid, seed, r) for r in reps])
    spec = (roots[None] * np.fft.fft(noise, axis=-1)).sum(axis=1)
    return np.fft.ifft(spec, axis=-1).real


@dataclass(frozen=True)
class CovarianceEstimate:
    lags: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    truncated: np.ndarray
    limit: np.ndarray
    n_modes: int
    reps: int
    seed: int


def empirical_covariance(
    n_modes: int, lags, reps: int, seed: int = 0, method: str = "spatial", batch: int = 256
) -> CovarianceEstimate:
    """Monte Carlo ``Cov(X(0), X(d))`` for the Fourier backend with 1-sigma standard errors.

    ``method='pointwise'`` averages ``X(0) X(d)`` over replicates.
    ``method='spatial'`` first averages ``X(t) X(t+d)`` over the base point
    ``t`` (exact for any grid finer than ``2N`` points), which by stationarity
    has the same mean and is ``sum_n (A_n^2 + B_n^2) cos(2 pi n d) / (2n)``.
    """
    if method not in ("spatial", "pointwise"):
        raise ValueError("method must be 'spatial' or 'pointwise'")
    lags = np.asarray(lags, float)
    n = np.arange(1, n_modes + 1)
    w = n ** -0.5
    c = np.cos(2 * np.pi * np.outer(lags, n))
    s = np.sin(2 * np.pi * np.outer(lags, n))
    prods = np.empty((reps, lags.size))
    for start in range(0, reps, batch):
        idx = range(start, min(reps, start + batch))
        co = np.stack([fourier_coefficients(n_modes, seed, r) for r in idx])
        if method == "spatial":
            energy = (co**2).sum(axis=-1) / (2 * n)
            prods[start : start + len(idx)] = energy @ c.T
        else:
            x0 = co[:, :, 0] @ w
            xd = co[:, :, 0] @ (c * w).T + co[:, :, 1] @ (s * w).T
            prods[start : start + len(idx)] = x0[:, None] * xd
    est = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(reps)
    trunc = np.array([covariance_oracle_trace(d, n_modes) for d in lags])
    lim = np.array([covariance_oracle_trace(d) if 0 < d < 1 else np.inf for d in lags])
    return CovarianceEstimate(lags, est, se, trunc, lim, n_modes, reps, seed)
