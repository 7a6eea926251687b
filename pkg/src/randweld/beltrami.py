"""Spectral solver for the Beltrami equation and the welding built from it.

The normalized solution ``f = z + C omega`` of ``d_zbar f = mu d_z f`` with
``mu`` supported in the unit disk is found from the fixed point

    omega = mu (1 + S omega)

where ``S`` is the Beurling transform (Fourier multiplier ``conj(xi)/xi``) and
``C`` the Cauchy transform ``(1/pi) int omega(zeta) / (z - zeta) dA``.  Both are
applied with FFTs on a zero-padded square grid; ``C`` is evaluated as an
aperiodic discrete convolution so the ``1/z`` decay at infinity is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import directed_hausdorff

from .ba_extension import DilatationField, disk_transfer, strip_coordinates, extension_values, extension_derivatives
from .chaos_measure import CircleMap


class BeltramiConvergenceError(RuntimeError):
    def __init__(self, message: str, mu_sup: float, iterations: int):
        super().__init__(message)
        self.mu_sup = mu_sup
        self.iterations = iterations


class SelfIntersectionError(RuntimeError):
    """Sampled welding curve is not simple (under-resolved solve)."""


class InversionError(RuntimeError):
    """Numerical inversion of the disk extension failed."""


class DegenerateMapError(ValueError):
    """Circle map with a near-flat stretch; its extension would have |mu| -> 1 nodes."""


class LookupError_(RuntimeError):
    """Curve-parameter lookup produced a non-monotone boundary correspondence."""


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


# ---------------------------------------------------------------------------
# singular integral operators


def _frequencies(n: int, h: float):
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    kx, ky = np.meshgrid(k, k)
    return kx + 1j * ky


def beurling_transform(g: np.ndarray, h: float = 1.0, pad: int = 2) -> np.ndarray:
    """Apply ``S`` with symbol ``conj(xi)/xi`` (zero at ``xi = 0``) on a zero-padded grid."""
    n = g.shape[0]
    if g.shape != (n, n) or not _is_pow2(n):
        raise ValueError("beurling_transform needs a square power-of-two grid")
    if pad < 2:
        raise ValueError("zero-padding factor must be at least 2")
    big = pad * n
    buf = np.zeros((big, big), dtype=complex)
    buf[:n, :n] = g
    xi = _frequencies(big, h)
    sym = np.zeros_like(xi)
    nz = xi != 0
    sym[nz] = np.conj(xi[nz]) / xi[nz]
    return np.fft.ifft2(sym * np.fft.fft2(buf))[:n, :n]


_KERNEL_CACHE: dict = {}


def _cauchy_kernel_hat(n: int, h: float):
    key = (n, h)
    if key not in _KERNEL_CACHE:
        off = np.concatenate([np.arange(n), np.arange(-n, 0)]) * h
        ox, oy = np.meshgrid(off, off)
        w = ox + 1j * oy
        ker = np.zeros_like(w)
        nz = w != 0
        # midpoint rule; the self cell integrates to zero by symmetry
        ker[nz] = h * h / (np.pi * w[nz])
        _KERNEL_CACHE.clear()
        _KERNEL_CACHE[key] = np.fft.fft2(ker)
    return _KERNEL_CACHE[key]


def cauchy_transform(g: np.ndarray, h: float = 1.0) -> np.ndarray:
    """``(1/pi) sum_j g_j h^2 / (z - zeta_j)`` at every node, via a 2x padded FFT convolution."""
    n = g.shape[0]
    if g.shape != (n, n) or not _is_pow2(n):
        raise ValueError("cauchy_transform needs a square power-of-two grid")
    buf = np.zeros((2 * n, 2 * n), dtype=complex)
    buf[:n, :n] = g
    return np.fft.ifft2(_cauchy_kernel_hat(n, h) * np.fft.fft2(buf))[:n, :n]


# ---------------------------------------------------------------------------
# solver


@dataclass(eq=False)
class PlaneMapGrid:
    """Solved map on the cell-centred grid of ``[-side/2, side/2]^2``; ``values[j, i]`` at ``(c[i], c[j])``."""

    coords: np.ndarray
    values: np.ndarray
    omega: np.ndarray
    mu: np.ndarray
    residual: float
    iterations: int
    mu_sup: float
    normalization: str = "f(z) = z + o(1)"
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.coords.size

    @property
    def h(self) -> float:
        return float(self.coords[1] - self.coords[0])

    @property
    def side(self) -> float:
        return self.n * self.h

    @property
    def z(self) -> np.ndarray:
        X, Y = np.meshgrid(self.coords, self.coords)
        return X + 1j * Y

    def __call__(self, pts) -> np.ndarray:
        """Cubic-spline interpolation of ``f(z) - z`` plus ``z``.

        Points beyond the outermost nodes use the discrete Cauchy sum directly,
        which is exact for the solved density since ``f`` is holomorphic there.
        """
        pts = np.asarray(pts, dtype=complex)
        g = self.values - self.z
        ci = (pts.real - self.coords[0]) / self.h
        cj = (pts.imag - self.coords[0]) / self.h
        outside = (ci < 0) | (ci > self.n - 1) | (cj < 0) | (cj > self.n - 1)
        out = np.empty(pts.shape, dtype=complex)
        inside = ~outside
        if inside.any():
            coords = np.vstack([cj[inside], ci[inside]])
            re = ndimage.map_coordinates(g.real, coords, order=3, mode="nearest")
            im = ndimage.map_coordinates(g.imag, coords, order=3, mode="nearest")
            out[inside] = pts[inside] + re + 1j * im
        if outside.any():
            out[outside] = pts[outside] + self._cauchy_direct(pts[outside])
        return out

    def _cauchy_direct(self, w: np.ndarray, budget: int = 2**22) -> np.ndarray:
        sel = self.omega != 0
        zeta = self.z[sel]
        wts = self.omega[sel] * self.h**2 / np.pi
        res = np.empty(w.shape, dtype=complex)
        chunk = max(1, budget // max(zeta.size, 1))
        for s in range(0, w.size, chunk):
            res[s : s + chunk] = (wts[None, :] / (w[s : s + chunk, None] - zeta[None, :])).sum(axis=1)
        return res


def truncate_dilatation(mu: DilatationField, ell: int, mode: str = "scale", k_max: float | None = None) -> DilatationField:
    """``mu_ell = ell/(ell+1) mu``; ``mode='clamp'`` caps ``|mu|`` at ``k_max`` instead (diagnostics)."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if mode == "scale":
        new = mu.mu * (ell / (ell + 1.0))
    elif mode == "clamp":
        k = k_max if k_max is not None else ell / (ell + 1.0)
        a = np.abs(mu.mu)
        new = np.where(a > k, mu.mu * (k / np.maximum(a, 1e-300)), mu.mu)
    else:
        raise ValueError(f"unknown truncation mode {mode!r}")
    return DilatationField(mu.chart, mu.xs, mu.ys, new, mu.provenance)


def _l2(a: np.ndarray, h: float) -> float:
    return float(np.sqrt(np.sum(np.abs(a) ** 2)) * h)


def solve_beltrami(
    mu: DilatationField | np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 5000,
    side: float = 4.0,
    pad: int = 2,
) -> PlaneMapGrid:
    """Neumann iteration ``omega <- mu (1 + S omega)`` followed by ``f = z + C omega``.

    ``mu`` must satisfy ``sup |mu| < 1`` and vanish outside the unit disk
    (the disk cut-off is applied here in any case).
    """
    if isinstance(mu, DilatationField):
        coords = mu.xs
        m = mu.mu.copy()
        h = float(coords[1] - coords[0])
    else:
        m = np.asarray(mu, dtype=complex).copy()
        h = side / m.shape[0]
        coords = (np.arange(m.shape[0]) + 0.5) * h - side / 2
    n = m.shape[0]
    if not _is_pow2(n):
        raise ValueError("plane grid size must be a power of two")
    X, Y = np.meshgrid(coords, coords)
    Z = X + 1j * Y
    m[np.abs(Z) > 1.0 + h] = 0.0
    sup = float(np.max(np.abs(m))) if m.size else 0.0
    if sup >= 1.0:
        raise ValueError(f"sup |mu| = {sup} is not < 1; truncate first")

    omega = m.copy()
    it = 0
    if sup > 0:
        while True:
            it += 1
            nxt = m * (1.0 + beurling_transform(omega, h, pad))
            step = _l2(nxt - omega, h)
            omega = nxt
            if step < tol:
                break
            if it >= max_iter:
                raise BeltramiConvergenceError(
                    f"no convergence after {it} iterations (sup|mu|={sup:.4f}, last step {step:.3e})", sup, it
                )
    dz = 1.0 + beurling_transform(omega, h, pad)
    resid = _l2(omega - m * dz, h) / _l2(dz, h)
    f = Z + cauchy_transform(omega, h)
    return PlaneMapGrid(coords=coords, values=f, omega=omega, mu=m, residual=resid, iterations=it, mu_sup=sup)


def check_homeomorphism(h: CircleMap, min_mass: float = 1e-12) -> None:
    inc = np.diff(h.values)
    k = int(np.argmin(inc))
    if inc[k] < min_mass:
        raise DegenerateMapError(
            f"knot interval {k} of {h.n} carries mass {inc[k]:.3e} < {min_mass:g}; "
            "use a coarser knot grid or a smaller beta"
        )


def solve_welding(h: CircleMap, n: int, ell: int = 1000, tol: float = 1e-10, side: float = 4.0, max_iter: int = 5000) -> PlaneMapGrid:
    """Refuse degenerate maps, transfer the extension to the disk, truncate and solve."""
    check_homeomorphism(h)
    mu = truncate_dilatation(disk_transfer(h, n, side), ell)
    f = solve_beltrami(mu, tol=tol, max_iter=max_iter)
    f.meta.update({"ell": ell, "grid": n, "side": side, "tol": tol})
    return f


def fd_beltrami_residual(f: PlaneMapGrid, mask: np.ndarray | None = None) -> float:
    """Relative ``||d_zbar f - mu d_z f|| / ||d_z f||`` with central differences of the grid values."""
    fy, fx = np.gradient(f.values, f.h)
    dz = 0.5 * (fx - 1j * fy)
    dzb = 0.5 * (fx + 1j * fy)
    r = dzb - f.mu * dz
    if mask is None:
        mask = np.ones(r.shape, bool)
    return float(np.sqrt(np.sum(np.abs(r[mask]) ** 2) / np.sum(np.abs(dz[mask]) ** 2)))


def contraction_bound(mu_sup: float, tol: float) -> float:
    """Iteration count predicted by ``sup|mu|^k < tol``."""
    if mu_sup <= 0:
        return 0.0
    return math.log(tol) / math.log(mu_sup)


def rim_decay_fit(f: PlaneMapGrid) -> tuple[float, complex, float]:
    """Fit ``f(z) - z ~ c0 + c1 / z`` on the outer rim; returns (|mean|, c1, relative misfit)."""
    n = f.n
    rim = np.zeros((n, n), bool)
    rim[[0, -1], :] = True
    rim[:, [0, -1]] = True
    z = f.z[rim]
    g = f.values[rim] - z
    A = np.stack([np.ones_like(z), 1.0 / z], axis=1)
    coef, *_ = np.linalg.lstsq(A, g, rcond=None)
    misfit = np.linalg.norm(A @ coef - g) / max(np.linalg.norm(g), 1e-300)
    return float(abs(np.mean(g))), complex(coef[1]), float(misfit)


# ---------------------------------------------------------------------------
# welding curve


@dataclass(eq=False)
class WeldingCurve:
    angles: np.ndarray
    points: np.ndarray
    closed: bool = True

    def closure_gap(self) -> float:
        """Distance between the last sample and the wrap-around point ``gamma(2 pi)``."""
        step = self.points[0] - self.points[-1]
        return float(abs(step))


def _segments_intersect(p, q):
    """Pairwise proper intersections between segment sets ``p`` (a, b) and ``q`` (c, d)."""
    a, b = p
    c, d = q

    def orient(u, v, w):
        return np.sign(((v - u).conj() * (w - u)).imag)

    o1 = orient(a[:, None], b[:, None], c[None, :])
    o2 = orient(a[:, None], b[:, None], d[None, :])
    o3 = orient(c[None, :], d[None, :], a[:, None])
    o4 = orient(c[None, :], d[None, :], b[:, None])
    return (o1 * o2 < 0) & (o3 * o4 < 0)


def is_simple_closed(points: np.ndarray, chunk: int = 512) -> bool:
    """Segment sweep over all non-adjacent pairs of the closed polyline."""
    a = points
    b = np.roll(points, -1)
    n = a.size
    idx = np.arange(n)
    for s in range(0, n, chunk):
        sl = slice(s, min(n, s + chunk))
        hit = _segments_intersect((a[sl], b[sl]), (a, b))
        i = idx[sl][:, None]
        gap = np.abs(i - idx[None, :])
        adjacent = (gap <= 1) | (gap == n - 1)
        if np.any(hit & ~adjacent):
            return False
    return True


def welding_curve(f: PlaneMapGrid, n_points: int = 1024, check_simple: bool = True) -> WeldingCurve:
    theta = 2 * np.pi * np.arange(n_points) / n_points
    pts = f(np.exp(1j * theta))
    if check_simple and not is_simple_closed(pts):
        raise SelfIntersectionError("welding curve self-intersects; refine the plane grid")
    return WeldingCurve(angles=theta, points=pts)


def _densify(p: np.ndarray, k: int) -> np.ndarray:
    t = np.arange(k) / k
    q = np.roll(p, -1)
    return (p[:, None] + t[None, :] * (q - p)[:, None]).ravel()


def hausdorff(a: np.ndarray, b: np.ndarray, densify: int = 8) -> float:
    """Hausdorff distance between two closed polylines, each densified ``densify``-fold."""
    if densify > 1:
        a, b = _densify(a, densify), _densify(b, densify)
    A = np.column_stack([a.real, a.imag])
    B = np.column_stack([b.real, b.imag])
    return max(directed_hausdorff(A, B)[0], directed_hausdorff(B, A)[0])


def holder_estimate(curve: WeldingCurve, max_fraction: int = 16) -> tuple[float, float]:
    """Slope of ``log max_theta |gamma(theta + d) - gamma(theta)|`` versus ``log d`` over dyadic ``d``.

    Returns ``(alpha, fit_stderr)``.
    """
    n = curve.points.size
    if n < 512:
        raise ValueError("Hölder estimate needs at least 512 samples")
    steps = []
    k = 1
    while k <= n // max_fraction:
        steps.append(k)
        k *= 2
    d = np.array(steps) * 2 * np.pi / n
    osc = np.array([np.max(np.abs(np.roll(curve.points, -k) - curve.points)) for k in steps])
    x, y = np.log(d), np.log(osc)
    (slope, icpt), cov = np.polyfit(x, y, 1, cov=True)
    return float(slope), float(np.sqrt(cov[0, 0]))


# ---------------------------------------------------------------------------
# conformal factors and welding round trip


def invert_psi(h: CircleMap, u: np.ndarray, tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
    """Solve ``Psi(z) = u`` for ``|u| <= 1``.

    On ``|u| = 1`` this is the monotone inverse of ``h``.  Inside, the strip
    equation ``F(w) = s + it`` is solved by damped Newton steps from the
    starting point ``(h^{-1}(s), t)``, keeping ``0 < Im w < 1``.
    """
    u = np.asarray(u, dtype=complex)
    r = np.abs(u)
    if np.any(r > 1.0 + 1e-15):
        raise ValueError("invert_psi is defined on the closed unit disk")
    out = u.copy()
    s, t = strip_coordinates(np.where(r == 0, 1.0, u))
    edge = r >= 1.0
    out[edge] = np.exp(2j * np.pi * h.inverse(s[edge]))
    layer = (~edge) & (t >= 1.0) & (t < 2.0)
    if layer.any():
        x = s[layer] - (2.0 - t[layer]) * h.c0
        out[layer] = np.exp(2j * np.pi * (x + 1j * t[layer]))
    ba = (~edge) & (t < 1.0)
    if ba.any():
        target = s[ba] + 1j * t[ba]
        x = h.inverse(s[ba])
        y = t[ba].copy()
        ok = np.zeros(x.shape, bool)
        for _ in range(max_iter):
            Fw = extension_values(h, x, y)
            res = Fw - target
            res = res - np.round(res.real)  # real part is defined modulo 1
            ok = np.abs(res) < tol
            if ok.all():
                break
            fz, fzb = extension_derivatives(h, x, y)
            fx, fy = fz + fzb, 1j * (fz - fzb)
            det = fx.real * fy.imag - fx.imag * fy.real
            dx = (fy.imag * res.real - fy.real * res.imag) / det
            dy = (-fx.imag * res.real + fx.real * res.imag) / det
            lam = np.ones_like(dx)
            # keep iterates inside 0 < y < 1
            while True:
                yn = y - lam * dy
                bad = (yn <= 0) | (yn >= 1)
                if not bad.any():
                    break
                lam = np.where(bad, lam / 2, lam)
            x, y = x - lam * dx, y - lam * dy
        if not ok.all():
            k = np.flatnonzero(~ok)[0]
            raise InversionError(f"psi inversion failed at u={u[ba][k]:.6g} (residual {abs(res[k]):.2e})")
        out[ba] = np.exp(2j * np.pi * (x + 1j * y))
    return out


@dataclass(eq=False)
class ConformalFactors:
    """Boundary traces and interior samples of ``f_plus`` and ``f_minus``.

    ``plus_polar`` holds ``f_plus(r e^{i theta})`` on the radial-angular grid
    ``(radii, angles)``; ``minus_trace`` and ``plus_trace`` are the boundary
    values on the uniform parameter grid ``k / n``.
    """

    f: PlaneMapGrid
    h: CircleMap
    radii: np.ndarray
    angles: np.ndarray
    plus_polar: np.ndarray
    minus_trace: np.ndarray
    plus_trace: np.ndarray

    def f_minus(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z) < 1.0 - 1e-12):
            raise ValueError("f_minus is defined for |z| >= 1")
        return self.f(z)

    def f_plus(self, u):
        return self.f(invert_psi(self.h, u))


def conformal_factors(f: PlaneMapGrid, h: CircleMap, n_boundary: int = 1024, radii=None, n_angles: int = 256) -> ConformalFactors:
    if radii is None:
        radii = np.linspace(0.3, 0.95, 14)
    radii = np.asarray(radii, float)
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    R, T = np.meshgrid(radii, angles, indexing="ij")
    u = R * np.exp(1j * T)
    plus_polar = f(invert_psi(h, u.ravel())).reshape(u.shape)
    s = np.arange(n_boundary) / n_boundary
    minus_trace = f(np.exp(2j * np.pi * s))
    plus_trace = f(np.exp(2j * np.pi * h.inverse(s)))
    return ConformalFactors(f, h, radii, angles, plus_polar, minus_trace, plus_trace)


def polar_cr_residual(cf: ConformalFactors) -> float:
    """Relative Cauchy-Riemann residual of ``f_plus`` on the interior polar grid.

    In polar form holomorphy reads ``r d_r g = -i d_theta g``.
    """
    g = cf.plus_polar
    dr = np.gradient(g, cf.radii, axis=0)
    dth = (np.roll(g, -1, axis=1) - np.roll(g, 1, axis=1)) / (2 * (cf.angles[1] - cf.angles[0]))
    r = cf.radii[:, None]
    res = r * dr + 1j * dth
    inner = slice(1, -1)
    return float(np.linalg.norm(res[inner]) / np.linalg.norm(dth[inner]))


def exterior_cr_residual(f: PlaneMapGrid, r_min: float = 1.1) -> float:
    """Relative FD residual ``|d_zbar f| / |d_z f|`` where ``|z| >= r_min`` (``f_minus`` region)."""
    fy, fx = np.gradient(f.values, f.h)
    dz = 0.5 * (fx - 1j * fy)
    dzb = 0.5 * (fx + 1j * fy)
    edge = 2
    mask = np.abs(f.z) >= r_min
    mask[:edge, :] = mask[-edge:, :] = False
    mask[:, :edge] = mask[:, -edge:] = False
    return float(np.sqrt(np.sum(np.abs(dzb[mask]) ** 2) / np.sum(np.abs(dz[mask]) ** 2)))


def analytic_projection(trace: np.ndarray, side: str) -> np.ndarray:
    """Project boundary samples onto the holomorphic class of the disk (``'plus'``: modes ``>= 0``)
    or of its exterior with ``z + O(1)`` growth (``'minus'``: modes ``<= 1``)."""
    n = trace.size
    c = np.fft.fft(trace)
    k = np.fft.fftfreq(n, d=1.0 / n)
    if side == "plus":
        c[k < 0] = 0.0
    elif side == "minus":
        c[k > 1] = 0.0
    else:
        raise ValueError("side must be 'plus' or 'minus'")
    return np.fft.ifft(c)


def _project_onto_polyline(points: np.ndarray, poly: np.ndarray, params: np.ndarray, chunk: int = 256):
    """Closest-point parameter of each point on a closed polyline with vertex parameters ``params``."""
    a = poly
    b = np.roll(poly, -1)
    seg = b - a
    len2 = np.maximum(np.abs(seg) ** 2, 1e-300)
    p0 = params
    p1 = np.roll(params, -1)
    p1 = np.where(p1 < p0, p1 + 1.0, p1)
    out = np.empty(points.size)
    for s in range(0, points.size, chunk):
        pts = points[s : s + chunk, None]
        t = np.clip(((pts - a[None]) * seg.conj()[None]).real / len2[None], 0.0, 1.0)
        d = np.abs(a[None] + t * seg[None] - pts)
        j = np.argmin(d, axis=1)
        tj = t[np.arange(j.size), j]
        out[s : s + chunk] = (p0[j] + tj * (p1[j] - p0[j])) % 1.0
    return out


def roundtrip_error(cf: ConformalFactors, phi: CircleMap | None = None, project: bool = True) -> float:
    """``sup_x |f_plus^{-1}(f_minus(e^{2 pi i x})) - e^{2 pi i phi(x)}|`` on the boundary grid.

    ``f_plus^{-1}`` is realised by closest-point lookup on the polyline of
    ``f_plus`` boundary values.  With ``project=True`` each trace is first
    projected onto its holomorphic class, so any non-analytic content left by
    the solve shows up as round-trip error.
    """
    phi = phi or cf.h
    n = cf.minus_trace.size
    s = np.arange(n) / n
    minus = analytic_projection(cf.minus_trace, "minus") if project else cf.minus_trace
    plus = analytic_projection(cf.plus_trace, "plus") if project else cf.plus_trace
    found = _project_onto_polyline(minus, plus, s)
    # cyclic monotonicity of the recovered correspondence
    steps = np.mod(np.diff(np.concatenate([found, found[:1]])), 1.0)
    if np.sum(steps) > 1.5:
        raise LookupError_("boundary correspondence from curve lookup is not monotone")
    target = phi(s)
    return float(np.max(np.abs(np.exp(2j * np.pi * found) - np.exp(2j * np.pi * target))))


def truncation_ladder(mu: DilatationField, ells, n_points: int = 1024, tol: float = 1e-10) -> list[float]:
    """Hausdorff distances between welding curves for successive ``ell`` values."""
    curves = [welding_curve(solve_beltrami(truncate_dilatation(mu, e), tol=tol), n_points).points for e in ells]
    return [hausdorff(a, b) for a, b in zip(curves[:-1], curves[1:])]
