"""Lehto integrals, ring profiles and Monte Carlo tail statistics.

The Lehto integral of a distortion ``K`` on the annulus ``A(z, r, R)`` is

    L = int_r^R  d rho / ( rho * int_0^{2 pi} K(z + rho e^{i theta}) d theta )

and equals ``log(R/r) / (2 pi)`` for ``K = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import ConvexHull
from scipy.stats import binomtest

from .ba_extension import DilatationField, ResolutionError, WhitneyK, k_tau_level, finest_whitney_level
from .chaos_measure import ChaosMeasure, chaos_masses, check_beta
from .field_sampler import sample_fourier_field

GL_ORDER = 8
# arc of a circle inside a Whitney cell is at most its perimeter, <= 4|I|
RING_CONSTANT = 1.0 / 8.0
DISTORTION_EXPONENT = 2 * math.pi**2


class DomainError(ValueError):
    pass


class DegenerateImageError(ValueError):
    pass


@dataclass(frozen=True)
class LehtoEstimate:
    center: complex
    r_inner: float
    r_outer: float
    value: float
    quadrature_error: float
    n_radial: int
    n_angular: int

    def report(self) -> dict:
        return {
            "center": [self.center.real, self.center.imag],
            "r_inner": self.r_inner,
            "r_outer": self.r_outer,
            "value": self.value,
            "quadrature_error": self.quadrature_error,
            "n_radial": self.n_radial,
            "n_angular": self.n_angular,
        }


# ---------------------------------------------------------------------------
# K lookups


def _grid_lookup(K: DilatationField):
    kk = K.K
    xs, ys = K.xs, K.ys
    dx, dy = K.dx, K.dy
    periodic = K.chart == "strip"

    def lookup(x, y):
        if periodic:
            i = np.floor(np.mod(x - xs[0] + dx / 2, 1.0) / dx).astype(np.int64) % xs.size
        else:
            i = np.clip(np.floor((x - xs[0]) / dx + 0.5).astype(np.int64), 0, xs.size - 1)
        j = np.clip(np.floor((y - ys[0]) / dy + 0.5).astype(np.int64), 0, ys.size - 1)
        return kk[j, i]

    return lookup


def _check_domain(K, z: complex, R: float) -> None:
    if not isinstance(K, DilatationField):
        return
    x0, x1 = K.xs[0] - K.dx / 2, K.xs[-1] + K.dx / 2
    y0, y1 = K.ys[0] - K.dy / 2, K.ys[-1] + K.dy / 2
    if K.chart == "strip":
        # periodic in x; y must stay inside the sampled band
        checks = [("bottom", z.imag - R < 0.0), ("top", z.imag + R > y1 + 1e-12)]
    else:
        checks = [
            ("left", z.real - R < x0 - 1e-12),
            ("right", z.real + R > x1 + 1e-12),
            ("bottom", z.imag - R < y0 - 1e-12),
            ("top", z.imag + R > y1 + 1e-12),
        ]
    for side, bad in checks:
        if bad:
            raise DomainError(f"annulus of radius {R} around {z} exits the {K.chart} grid on the {side} side")


def as_k_function(K):
    if isinstance(K, DilatationField):
        return _grid_lookup(K)
    if isinstance(K, ChaosMeasure):
        return WhitneyK(K)
    if callable(K):
        return K
    k0 = float(K)
    return lambda x, y: np.full(np.broadcast(x, y).shape, k0)


# ---------------------------------------------------------------------------
# quadrature


def _gl_nodes(a: float, b: float, n: int):
    """Composite Gauss-Legendre nodes on ``[a, b]`` with ``n`` total nodes (panels of GL_ORDER)."""
    panels = max(1, n // GL_ORDER)
    x, w = np.polynomial.legendre.leggauss(GL_ORDER)
    edges = np.linspace(a, b, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _lehto_once(kf, z: complex, r: float, R: float, n_radial: int, n_angular: int, chunk: int = 64) -> float:
    t, wt = _gl_nodes(math.log(r), math.log(R), n_radial)
    rho = np.exp(t)
    theta = 2 * np.pi * (np.arange(n_angular) + 0.5) / n_angular
    ring = np.empty(rho.size)
    e = np.exp(1j * theta)
    for s in range(0, rho.size, chunk):
        pts = z + rho[s : s + chunk, None] * e[None, :]
        ring[s : s + chunk] = np.asarray(kf(pts.real, pts.imag)).mean(axis=1) * 2 * np.pi
    if np.any(ring <= 0):
        raise ValueError("distortion must be positive")
    # d rho / rho = dt
    return float(np.sum(wt / ring))


def lehto_integral(K, z: complex = 0j, r: float = 1.0, R: float = math.e, n_radial: int = 64, n_angular: int = 256) -> LehtoEstimate:
    """Nested quadrature of the Lehto integral with a refinement-doubling error estimate.

    ``K`` may be a callable ``K(x, y)``, a constant, a DilatationField (nearest
    cell lookup, periodic in ``x`` on the strip chart) or a ChaosMeasure
    (piecewise-constant Whitney majorant).
    """
    if not (0 < r < R):
        raise ValueError(f"need 0 < r < R, got r={r}, R={R}")
    z = complex(z)
    _check_domain(K, z, R)
    kf = as_k_function(K)
    coarse = _lehto_once(kf, z, r, R, n_radial, n_angular)
    fine = _lehto_once(kf, z, r, R, 2 * n_radial, 2 * n_angular)
    return LehtoEstimate(z, float(r), float(R), fine, abs(fine - coarse), 2 * n_radial, 2 * n_angular)


def lehto_segments(K, z: complex, radii, n_radial: int = 64, n_angular: int = 256) -> np.ndarray:
    """Lehto integrals over consecutive radii ``radii[k] < radii[k+1]`` (finest quadrature only)."""
    radii = np.asarray(radii, float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must increase")
    _check_domain(K, complex(z), radii[-1])
    kf = as_k_function(K)
    return np.array([_lehto_once(kf, complex(z), a, b, n_radial, n_angular) for a, b in zip(radii[:-1], radii[1:])])


# ---------------------------------------------------------------------------
# ring profile


@dataclass(frozen=True)
class RingProfile:
    """``K(r)`` as a step function on ``breaks`` (values on each open piece) and ``M_n``."""

    n: int
    rho: float
    breaks: np.ndarray
    values: np.ndarray
    M: float

    def __call__(self, r):
        r = np.asarray(r, float)
        k = np.clip(np.searchsorted(self.breaks, r, side="right") - 1, 0, self.values.size - 1)
        return self.values[k]


def _rho_power(rho: float) -> int:
    p = -math.log2(rho)
    if abs(p - round(p)) > 1e-12 or round(p) < 2:
        raise ValueError("rho must be 2^-p with integer p >= 2")
    return int(round(p))


def _cells_near_origin(m: ChaosMeasure, r_max: float):
    """Whitney cells within distance ``r_max`` of the origin: (dmin, dmax, |I| K_tau(I))."""
    finest = finest_whitney_level(m)
    dmin, dmax, w = [], [], []
    for n in range(finest + 1):
        size = 2.0**-n
        top = 2.0 if n == 0 else size
        bottom = 0.0 if n == finest else (0.5 if n == 0 else size / 2)
        if bottom > r_max:
            continue
        span = int(math.ceil(r_max / size)) + 1
        ks = np.arange(-span, span)
        ks = ks[(ks >= -(2 ** (n - 1))) & (ks < 2 ** (n - 1))] if n > 0 else np.array([0])
        a = ks * size
        b = a + size
        if n == 0:
            a, b = np.array([-1.0]), np.array([1.0])  # periodic copy covers both sides of 0
        gap = np.maximum(0.0, np.maximum(a, -b))
        far = np.maximum(np.abs(a), np.abs(b))
        lo = np.hypot(gap, bottom)
        hi = np.hypot(far, top)
        keep = lo <= r_max
        vals = k_tau_level(m, n)[np.mod(ks[keep], 2**n)] * size
        dmin.append(lo[keep])
        dmax.append(hi[keep])
        w.append(vals)
    return np.concatenate(dmin), np.concatenate(dmax), np.concatenate(w)


def ring_profile(m: ChaosMeasure, n: int, rho: float) -> RingProfile:
    """``K(r) = sum |I| K_tau(I)`` over Whitney cells meeting the half circle ``S_r``, ``r`` in
    ``(rho^n, 2 rho^n)``, and ``M_n = int dr / K(r)`` integrated exactly over the step pieces."""
    p = _rho_power(rho)
    if n < 1:
        raise ValueError("n must be >= 1")
    need = n * p + 5
    if m.level < need:
        raise ResolutionError(f"ring {n} at rho=2^-{p} needs measure level {need}, have {m.level}")
    lo_r, hi_r = rho**n, 2 * rho**n
    dmin, dmax, w = _cells_near_origin(m, hi_r)
    cuts = np.concatenate([dmin, dmax])
    cuts = np.unique(np.concatenate([[lo_r, hi_r], cuts[(cuts > lo_r) & (cuts < hi_r)]]))
    mids = (cuts[:-1] + cuts[1:]) / 2
    meet = (dmin[None, :] <= mids[:, None]) & (dmax[None, :] >= mids[:, None])
    vals = meet.astype(float) @ w
    if np.any(vals <= 0):
        raise ResolutionError("circle misses every Whitney cell; measure too coarse")
    M = float(np.sum(np.diff(cuts) / vals))
    return RingProfile(n, float(rho), cuts, vals, M)


# ---------------------------------------------------------------------------
# annulus distortion


@dataclass(frozen=True)
class DistortionCheck:
    d_outer: float
    d_inner: float
    ratio: float
    bound: float
    passed: bool


def _diameter(pts: np.ndarray) -> float:
    xy = np.column_stack([pts.real, pts.imag])
    try:
        xy = xy[ConvexHull(xy).vertices]
    except Exception:
        pass
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def annulus_distortion_check(L: LehtoEstimate, f, n_samples: int = 2048, exponent: float = DISTORTION_EXPONENT) -> DistortionCheck:
    """Test ``D_O / D_I >= exp(exponent * L) / 16`` for the image of ``A(z, r, R)`` under ``f``.

    ``f`` maps complex arrays to complex arrays (a solved PlaneMapGrid works).
    """
    th = 2 * np.pi * np.arange(n_samples) / n_samples
    e = np.exp(1j * th)
    outer = np.asarray(f(L.center + L.r_outer * e))
    inner = np.asarray(f(L.center + L.r_inner * e))
    d_o, d_i = _diameter(outer), _diameter(inner)
    if d_i <= 0 or not np.isfinite(d_i):
        raise DegenerateImageError(f"inner image diameter is {d_i}")
    ratio = d_o / d_i
    bound = math.exp(exponent * L.value) / 16.0
    return DistortionCheck(d_o, d_i, ratio, bound, bool(ratio >= bound))


# ---------------------------------------------------------------------------
# integrability


@dataclass(frozen=True)
class IntegrabilityResult:
    value: float
    partial_sums: np.ndarray
    increments: np.ndarray

    def __float__(self) -> float:
        return self.value


def k_integrability_probe(m: ChaosMeasure) -> IntegrabilityResult:
    """``sum_I |C_I| K_tau(I)`` over Whitney cells of ``[0,1] x (0,2]`` down to the finest level."""
    finest = finest_whitney_level(m)
    inc = []
    for n in range(finest + 1):
        area = 1.5 if n == 0 else 0.5 * 4.0**-n
        inc.append(area * float(np.sum(k_tau_level(m, n))))
    inc = np.array(inc)
    ps = np.cumsum(inc)
    return IntegrabilityResult(float(ps[-1]), ps, inc)


# ---------------------------------------------------------------------------
# tail Monte Carlo


@dataclass(frozen=True)
class TailEstimate:
    N: int
    delta: float
    hits: int
    reps: int
    p_hat: float
    wilson_lo: float
    wilson_hi: float
    seed: int
    upper_bound_only: bool = False

    def report(self) -> dict:
        return {
            "N": self.N,
            "delta": self.delta,
            "hits": self.hits,
            "reps": self.reps,
            "p_hat": self.p_hat,
            "wilson_lo": self.wilson_lo,
            "wilson_hi": self.wilson_hi,
            "seed": self.seed,
            "upper_bound_only": self.upper_bound_only,
        }


def wilson_interval(hits: int, reps: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(hits), int(reps)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def lehto_tail_sample(m: ChaosMeasure, rho: float, n_max: int, n_radial: int = 32, n_angular: int = 512) -> np.ndarray:
    """``L_{K_tau}(0, rho^N, 2 rho)`` for ``N = 1..n_max`` from one measure (additive over rings)."""
    radii = [rho**k for k in range(n_max, 0, -1)] + [2 * rho]
    seg = lehto_segments(m, 0j, radii, n_radial, n_angular)[::-1]  # seg[0] = L(rho, 2 rho)
    return np.cumsum(seg)


@lru_cache(maxsize=8)
def lehto_tail_samples(beta: float, rho: float, n_max: int, reps: int, seed: int, n_modes: int | None = None, stream: str = "lehto") -> np.ndarray:
    """Array ``(reps, n_max)`` of Lehto integrals on the Whitney majorant of independent samples."""
    check_beta(beta)
    p = _rho_power(rho)
    level = n_max * p + 5
    n_modes = n_modes or 2 ** (n_max * p)
    out = np.empty((reps, n_max))
    for i in range(reps):
        r = sample_fourier_field(n_modes, seed, _stream_rep(stream, i))
        m = chaos_masses(r, beta, level)
        out[i] = lehto_tail_sample(m, rho, n_max)
    out.setflags(write=False)
    return out


def _stream_rep(name: str, i: int) -> int:
    # separate replicate namespaces for calibration and measurement runs
    return {"lehto": 0, "calibration": 1}.get(name, 2) * 10**9 + i


def calibrate_delta(beta: float, rho: float, n_max: int = 4, target: float = 0.3, reps: int = 400, seed: int = 0, n_modes: int | None = None) -> float:
    """``delta`` at the ``target`` quantile of ``L(rho, 2 rho)`` from a pilot run.

    The pilot uses the measurement configuration with its own replicate streams.
    """
    L = lehto_tail_samples(float(beta), float(rho), int(n_max), int(reps), int(seed), n_modes, "calibration")
    return float(np.quantile(L[:, 0], target))


def tail_probability_mc(beta: float, rho: float, N: int, delta: float, reps: int, seed: int, n_max: int | None = None, n_modes: int | None = None) -> TailEstimate:
    """Empirical ``P(L_{K_tau}(0, rho^N, 2 rho) < N delta)`` with a Wilson interval.

    Samples are drawn once per ``(beta, rho, n_max, reps, seed)`` and shared
    across ``N``; zero hits are flagged as an upper confidence bound.
    """
    if not 1 <= N <= 5:
        raise ValueError("N must lie in 1..5")
    if rho < 1 / 16:
        raise ValueError("rho must be >= 1/16")
    n_max = n_max or N
    if N > n_max:
        raise ValueError("N exceeds n_max")
    L = lehto_tail_samples(float(beta), float(rho), int(n_max), int(reps), int(seed), n_modes)
    hits = int(np.sum(L[:, N - 1] < N * delta))
    lo, hi = wilson_interval(hits, reps)
    return TailEstimate(N, float(delta), hits, int(reps), hits / reps, lo, hi, int(seed), upper_bound_only=hits == 0)
