"""Independent reference values computed with mpmath."""

from functools import lru_cache

import mpmath as mp
import numpy as np

mp.mp.dps = 30


@lru_cache(maxsize=4)
def ellipse_parameter(a: float, b: float) -> float:
    """Parameter ``m`` of the interior Riemann map of the ellipse with semi-axes ``a > b``.

    The nome condition is ``K'(m) / K(m) = 4 rho / pi`` with ``cosh rho = a / c``.
    """
    c = mp.sqrt(mp.mpf(a) ** 2 - mp.mpf(b) ** 2)
    rho = mp.acosh(mp.mpf(a) / c)
    f = lambda m: mp.ellipk(1 - m) / mp.ellipk(m) - 4 * rho / mp.pi
    return float(mp.findroot(f, (mp.mpf("0.01"), mp.mpf("0.9999")), solver="anderson"))


def ellipse_interior_inverse(a: float, b: float, w):
    """``g^{-1}(w) = sqrt(k) sn(2K/pi asin(w/c), m)`` mapping the ellipse interior onto the disk."""
    m = mp.mpf(ellipse_parameter(a, b))
    c = mp.sqrt(mp.mpf(a) ** 2 - mp.mpf(b) ** 2)
    K = mp.ellipk(m)
    k4 = m ** mp.mpf("0.25")
    out = []
    for v in np.atleast_1d(w):
        u = 2 * K / mp.pi * mp.asin(mp.mpc(v.real, v.imag) / c)
        out.append(complex(k4 * mp.ellipfun("sn", u, m=m)))
    return np.array(out)


def ellipse_interior_map(a: float, b: float, z):
    """``g(z) = c sin(pi/(2K) F(asin(z/sqrt(k)), m))``."""
    m = mp.mpf(ellipse_parameter(a, b))
    c = mp.sqrt(mp.mpf(a) ** 2 - mp.mpf(b) ** 2)
    K = mp.ellipk(m)
    k4 = m ** mp.mpf("0.25")
    return np.array([complex(c * mp.sin(mp.pi / (2 * K) * mp.ellipf(mp.asin(mp.mpc(v.real, v.imag) / k4), m))) for v in np.atleast_1d(z)])


@lru_cache(maxsize=4)
def ellipse_welding_knots(a: float, b: float, n: int) -> np.ndarray:
    """Knot values of the welding ``h`` of the ellipse ``x^2/a^2 + y^2/b^2 = 1`` (``a + b = 2``),
    exterior map ``z + ((a-b)/2)/z``, interior map fixing 0 with positive derivative."""
    k = (a - b) / 2
    x = np.arange(n + 1) / n
    e = np.exp(2j * np.pi * x)
    u = ellipse_interior_inverse(a, b, e + k / e)
    v = np.unwrap(np.angle(u)) / (2 * np.pi)
    v = v - v[0]
    v[-1] = 1.0
    return v
