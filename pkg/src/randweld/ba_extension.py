"""Modified Beurling-Ahlfors extension of a circle homeomorphism.

For a lift ``h`` with ``h(x + 1) = h(x) + 1`` the extension to the strip is

* ``0 < y < 1``: ``F = 1/2 int_0^1 (h(x+ty) + h(x-ty)) dt + i int_0^1 (h(x+ty) - h(x-ty)) dt``
* ``1 <= y <= 2``: ``F(z) = z + (2 - y) c0`` with ``c0 = int_0^1 h - 1/2``
* ``y >= 2``: ``F(z) = z``.

Writing ``H`` for an antiderivative of the piecewise-linear ``h`` makes both
integrals closed form.  With ``a = h(x+y) - h(x)``, ``b = h(x) - h(x-y)`` and
the mean excesses ``A = mean_{[x,x+y]} h - h(x)``, ``B = h(x) - mean_{[x-y,x]} h``::

    Re F = h(x) + (A - B)/2            Im F = A + B
    d_x Re F = (a + b) / 2y            d_x Im F = (a - b) / y
    d_y Re F = ((a-A) - (b-B)) / 2y    d_y Im F = ((a-A) + (b-B)) / y

The disk map is ``Psi(z) = exp(2 pi i F(log z / 2 pi i))`` whose dilatation is
``-(z / conj z) mu_F(w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chaos_measure import ChaosMeasure, CircleMap, homeomorphism_from_measure

PAIR_LEVEL_OFFSET = 5
IDENTITY_RADIUS = math.exp(-4 * math.pi)


class NonHomeomorphicError(ArithmeticError):
    """A node with ``|mu| >= 1`` was produced."""


class ResolutionError(ValueError):
    """The measure is too coarse for the requested dyadic quantity."""


@dataclass(frozen=True, eq=False)
class ExtensionField:
    h: CircleMap
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # shape (ny, nx)

    @property
    def c0(self) -> float:
        return self.h.c0

    def at(self, x, y):
        return extension_values(self.h, x, y)


@dataclass(frozen=True, eq=False)
class DilatationField:
    """Complex dilatation on a rectangular grid; ``mu[j, i]`` lives at ``(xs[i], ys[j])``."""

    chart: str
    xs: np.ndarray
    ys: np.ndarray
    mu: np.ndarray
    provenance: str = "analytic"

    @property
    def K(self) -> np.ndarray:
        a = np.abs(self.mu)
        return (1.0 + a) / (1.0 - a)

    @property
    def dx(self) -> float:
        return float(self.xs[1] - self.xs[0]) if self.xs.size > 1 else 0.0

    @property
    def dy(self) -> float:
        return float(self.ys[1] - self.ys[0]) if self.ys.size > 1 else 0.0


def _region_masks(y):
    return y < 1.0, (y >= 1.0) & (y < 2.0), y >= 2.0


def _ba_parts(h: CircleMap, x, y):
    hx = h(x)
    hp = h(x + y)
    hm = h(x - y)
    Hx = h.antiderivative(x)
    a = hp - hx
    b = hx - hm
    A = (h.antiderivative(x + y) - Hx) / y - hx
    B = hx - (Hx - h.antiderivative(x - y)) / y
    return hx, a, b, A, B


def extension_values(h: CircleMap, x, y) -> np.ndarray:
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    if np.any(y <= 0):
        raise ValueError("extension is defined for y > 0")
    out = np.empty(x.shape, dtype=complex)
    ba, mid, top = _region_masks(y)
    if ba.any():
        hx, a, b, A, B = _ba_parts(h, x[ba], y[ba])
        out[ba] = hx + 0.5 * (A - B) + 1j * (A + B)
    z = x + 1j * y
    out[mid] = z[mid] + (2.0 - y[mid]) * h.c0
    out[top] = z[top]
    return out


def extension_derivatives(h: CircleMap, x, y):
    """Closed-form ``(F_z, F_zbar)`` at points of the strip."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    if np.any(y <= 0):
        raise ValueError("extension is defined for y > 0")
    fx = np.ones(x.shape, dtype=complex)
    fy = np.full(x.shape, 1j, dtype=complex)
    ba, mid, _ = _region_masks(y)
    if ba.any():
        yy = y[ba]
        _, a, b, A, B = _ba_parts(h, x[ba], yy)
        at, bt = a - A, b - B
        fx[ba] = (a + b) / (2 * yy) + 1j * (a - b) / yy
        fy[ba] = (at - bt) / (2 * yy) + 1j * (at + bt) / yy
    fy[mid] = 1j - h.c0
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def mu_strip(h: CircleMap, x, y) -> np.ndarray:
    fz, fzb = extension_derivatives(h, x, y)
    return fzb / fz


def extend(h: CircleMap, nx: int = 256, ny: int = 256) -> ExtensionField:
    """Evaluate ``F`` on ``x_i = i/nx`` and ``y_j = 2(j+1)/ny``.

    With power-of-two ``ny`` the heights ``2^-k`` (Whitney cell edges) are nodes.
    """
    xs = np.arange(nx) / nx
    ys = 2.0 * (np.arange(ny) + 1) / ny
    X, Y = np.meshgrid(xs, ys)
    return ExtensionField(h=h, xs=xs, ys=ys, values=extension_values(h, X, Y))


def _checked(mu, xs, ys, chart, provenance):
    bad = np.abs(mu) >= 1.0
    if bad.any():
        j, i = np.argwhere(bad)[0]
        raise NonHomeomorphicError(f"|mu| >= 1 at x={xs[i]:.6g}, y={ys[j]:.6g} ({chart} chart)")
    return DilatationField(chart=chart, xs=xs, ys=ys, mu=mu, provenance=provenance)


def dilatation(F: ExtensionField) -> DilatationField:
    X, Y = np.meshgrid(F.xs, F.ys)
    return _checked(mu_strip(F.h, X, Y), F.xs, F.ys, "strip", "analytic")


def dilatation_fd(F: ExtensionField) -> DilatationField:
    """Second-order central differences of the sampled ``F`` (periodic in ``x``)."""
    vals = F.values
    dx = F.xs[1] - F.xs[0]
    dy = F.ys[1] - F.ys[0]
    right = np.roll(vals, -1, axis=1)
    right[:, -1] += 1.0
    left = np.roll(vals, 1, axis=1)
    left[:, 0] -= 1.0
    fx = (right - left) / (2 * dx)
    fy = np.gradient(vals, dy, axis=0, edge_order=2)
    fz = 0.5 * (fx - 1j * fy)
    fzb = 0.5 * (fx + 1j * fy)
    return _checked(fzb / fz, F.xs, F.ys, "strip", "finite_difference")


# ---------------------------------------------------------------------------
# disk chart


def strip_coordinates(z):
    """``w = log z / (2 pi i)`` with the principal branch, ``Re w`` reduced to ``[0, 1)``."""
    z = np.asarray(z, dtype=complex)
    x = np.mod(np.angle(z) / (2 * np.pi), 1.0)
    y = -np.log(np.abs(z)) / (2 * np.pi)
    return x, y


def psi(h: CircleMap, z) -> np.ndarray:
    """Disk extension ``Psi(z) = exp(2 pi i F(w))``; identity for ``|z| <= exp(-4 pi)``."""
    z = np.asarray(z, dtype=complex)
    out = z.copy()
    r = np.abs(z)
    if np.any(r > 1.0 + 1e-12):
        raise ValueError("psi is defined on the closed unit disk")
    edge = np.abs(r - 1.0) <= 1e-12
    inner = (r > IDENTITY_RADIUS) & ~edge & (r < 1.0)
    x, y = strip_coordinates(z[inner])
    out[inner] = np.exp(2j * np.pi * extension_values(h, x, y))
    if edge.any():
        x, _ = strip_coordinates(z[edge])
        out[edge] = np.exp(2j * np.pi * h(x))
    return out


def mu_disk(h: CircleMap, z) -> np.ndarray:
    """Dilatation of ``Psi`` at points of the plane, zero outside the annulus ``e^{-4pi} < |z| < 1``."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape, dtype=complex)
    r = np.abs(z)
    inner = (r > IDENTITY_RADIUS) & (r < 1.0)
    zi = z[inner]
    x, y = strip_coordinates(zi)
    out[inner] = -(zi / np.conj(zi)) * mu_strip(h, x, y)
    return out


def plane_grid(n: int, side: float = 4.0) -> np.ndarray:
    """Cell-centred nodes of the square ``[-side/2, side/2]^2``; 1-D coordinate array."""
    return (np.arange(n) + 0.5) * (side / n) - side / 2


def disk_transfer(h: CircleMap | ExtensionField, n: int, side: float = 4.0, supersample: int = 4) -> DilatationField:
    """``mu_Psi * chi_D`` on an ``n x n`` plane grid (``h`` may also be an ExtensionField).

    Cells cut by the unit circle get the average of ``supersample^2`` sub-cell
    values so the jump at ``|z| = 1`` is represented by its area fraction.
    """
    if isinstance(h, ExtensionField):
        h = h.h
    c = plane_grid(n, side)
    X, Y = np.meshgrid(c, c)
    Z = X + 1j * Y
    mu = mu_disk(h, Z)
    hstep = side / n
    cut = np.abs(np.abs(Z) - 1.0) < hstep
    if supersample > 1 and cut.any():
        off = ((np.arange(supersample) + 0.5) / supersample - 0.5) * hstep
        ox, oy = np.meshgrid(off, off)
        sub = Z[cut][:, None] + (ox + 1j * oy).ravel()[None, :]
        mu[cut] = mu_disk(h, sub).mean(axis=1)
    return _checked(mu, c, c, "disk", "analytic")


# ---------------------------------------------------------------------------
# dyadic majorant


def k_tau_level(m: ChaosMeasure, n: int) -> np.ndarray:
    """``K_tau(I)`` for every ``I`` in ``D_n`` (length ``2^n`` array).

    Sum of ``delta_tau`` over unordered pairs of distinct level-``n+5``
    intervals inside ``j(I)`` (``I`` and its two neighbours, periodic).  For
    96 children with masses ``a_i`` this equals ``(sum a)(sum 1/a) - 96``.
    """
    c = n + PAIR_LEVEL_OFFSET
    if c > m.level:
        raise ResolutionError(f"K_tau at level {n} needs measure level {c}, have {m.level}")
    kids = m.coarsen(c).reshape(2**n, -1)
    s = kids.sum(axis=1)
    r = (1.0 / kids).sum(axis=1)
    if n == 0:
        s3, r3 = 3 * s, 3 * r
    else:
        s3 = np.roll(s, 1) + s + np.roll(s, -1)
        r3 = np.roll(r, 1) + r + np.roll(r, -1)
    count = 3 * 2**PAIR_LEVEL_OFFSET
    return s3 * r3 - count


def k_tau_bound(m: ChaosMeasure, interval: tuple[int, int]) -> float:
    n, k = interval
    return float(k_tau_level(m, n)[k % 2**n])


def finest_whitney_level(m: ChaosMeasure) -> int:
    return m.level - PAIR_LEVEL_OFFSET


class WhitneyK:
    """Piecewise-constant ``K_tau(z) = K_tau(I)`` for ``z`` in the Whitney cell ``C_I``.

    Cells are ``I x [2^-n-1, 2^-n]`` for ``n >= 1`` and ``[0,1] x [1/2, 2]`` for
    ``n = 0``; ``K = 1`` above height 2.  The pavement is truncated at the finest
    level the measure supports: the last row of cells is extended down to the
    real axis.  With ``reflect=True`` the lower half plane mirrors the upper.
    """

    def __init__(self, m: ChaosMeasure, reflect: bool = True):
        self.measure = m
        self.reflect = reflect
        self.finest = finest_whitney_level(m)
        if self.finest < 0:
            raise ResolutionError("measure level must be at least 5")
        self.tables = [k_tau_level(m, n) for n in range(self.finest + 1)]

    def level_of(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            n = np.floor(-np.log2(y)).astype(np.int64)
        # y exactly 2^-n belongs to the upper cell (n - 1) only when n >= 1
        return np.clip(n, 0, self.finest)

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.reflect:
            y = np.abs(y)
        elif np.any(y < 0):
            raise ValueError("Whitney K queried below the real axis without reflection")
        out = np.ones(x.shape)
        inside = y < 2.0
        n = self.level_of(np.where(inside, np.maximum(y, 1e-300), 1.0))
        xm = np.mod(x, 1.0)
        for lev in np.unique(n[inside]):
            sel = inside & (n == lev)
            idx = np.minimum((xm[sel] * 2**lev).astype(np.int64), 2**lev - 1)
            out[sel] = self.tables[lev][idx]
        return out


def whitney_sup_ratio(m: ChaosMeasure, h: CircleMap | None = None, levels=None, nodes: int = 9) -> float:
    """``max_I sup_{C_I} K(z, F) / K_tau(I)`` with the sup taken over a ``nodes x nodes``
    lattice of each Whitney cell (edges included)."""
    h = h or homeomorphism_from_measure(m)
    finest = finest_whitney_level(m)
    levels = range(1, finest + 1) if levels is None else levels
    t = np.linspace(0.0, 1.0, nodes)
    best = 0.0
    for n in levels:
        size = 2.0**-n
        ks = np.arange(2**n)
        x = (ks[:, None] + t[None, :]) * size
        y = size * (0.5 + 0.5 * t)
        X = np.repeat(x[:, None, :], nodes, axis=1)
        Y = np.broadcast_to(y[None, :, None], X.shape)
        a = np.abs(mu_strip(h, X, Y))
        K = ((1 + a) / (1 - a)).reshape(2**n, -1).max(axis=1)
        best = max(best, float(np.max(K / k_tau_level(m, n))))
    return best
