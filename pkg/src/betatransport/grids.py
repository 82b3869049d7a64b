"""Chebyshev grids, transforms, and square-root-weight quadrature.

Everything on a support [a, b] is pulled back to u in [-1, 1] by the affine
map x = m + r u with m = (a+b)/2, r = (b-a)/2.  The weight
sqrt((x-a)(b-x)) dx becomes r^2 sqrt(1-u^2) du, i.e. the Chebyshev-U weight,
so Gauss nodes are the roots of U_n and principal-value integrals against the
weight reduce to the closed-form identities

    PV int_{-1}^{1} U_k(v) sqrt(1-v^2) / (u - v) dv = pi T_{k+1}(u),
    int_{-1}^{1} U_k(v) sqrt(1-v^2) / (z - v) dv = pi rho(z)^{k+1},

where rho(z) = z - sqrt(z^2-1) is the inverse Joukowski map with |rho| < 1
off [-1, 1].
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from scipy.fft import dct, dst


def u_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Roots of U_n as (u, theta), u = cos(theta) ascending."""
    j = np.arange(n, 0, -1)
    theta = j * np.pi / (n + 1)
    return np.cos(theta), theta


def u_quad_weights(n: int) -> np.ndarray:
    """Gauss weights for int f(u) sqrt(1-u^2) du at the U_n roots."""
    _, theta = u_nodes(n)
    return np.pi / (n + 1) * np.sin(theta) ** 2


def u_coeffs_from_values(values: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Chebyshev-U coefficients of the interpolant through the U-node values.

    Writing f(cos t) sin t = sum_k c_k sin((k+1) t) turns the fit into a
    DST-I, which is its own inverse up to 2/(n+1).
    """
    n = len(values)
    g = (values * np.sin(theta))[::-1]  # reorder to ascending theta
    return dst(g, type=1) / (n + 1)


def u_to_t(ucoeffs: np.ndarray) -> np.ndarray:
    """Exact U-basis to T-basis conversion (U_k = 2 sum' T_j, j = k, k-2, ...)."""
    n = len(ucoeffs)
    t = np.zeros(n)
    for k in range(n - 1, -1, -1):
        c = ucoeffs[k]
        if c == 0.0:
            continue
        js = np.arange(k, 0, -2)
        t[js] += 2.0 * c
        if k % 2 == 0:
            t[0] += c
    return t


def t_to_u(tcoeffs: np.ndarray) -> np.ndarray:
    """Exact T-basis to U-basis conversion (T_k = (U_k - U_{k-2})/2)."""
    n = len(tcoeffs)
    u = np.zeros(n)
    u[0] += tcoeffs[0]
    if n > 1:
        u[1] += tcoeffs[1] / 2
    for k in range(2, n):
        u[k] += tcoeffs[k] / 2
        u[k - 2] -= tcoeffs[k] / 2
    return u


def t_coeffs_from_u_values(values: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """T-series of the interpolant through values at the U-root grid."""
    return u_to_t(u_coeffs_from_values(values, theta))


def cheb1_nodes(n: int) -> np.ndarray:
    """First-kind Chebyshev points cos((2j+1)pi/(2n)), ascending."""
    j = np.arange(n - 1, -1, -1)
    return np.cos((2 * j + 1) * np.pi / (2 * n))


def t_coeffs_from_cheb1_values(values: np.ndarray) -> np.ndarray:
    """T-series interpolating values at cheb1_nodes(n) (DCT-II)."""
    n = len(values)
    a = dct(values[::-1], type=2) / n
    a[0] /= 2
    return a


def t_values(tcoeffs: np.ndarray, u) -> np.ndarray:
    return _cheb.chebval(u, tcoeffs)


def t_derivative(tcoeffs: np.ndarray) -> np.ndarray:
    return _cheb.chebder(tcoeffs)


def inverse_joukowski(w):
    """rho(w) = w - sqrt(w-1) sqrt(w+1), the |rho| <= 1 branch off [-1,1]."""
    w = np.asarray(w, dtype=complex)
    return w - np.sqrt(w - 1.0) * np.sqrt(w + 1.0)


def rho_power_sum(ucoeffs: np.ndarray, rho) -> np.ndarray:
    """sum_k c_k rho^{k+1}, evaluated stably by Horner."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    for c in ucoeffs[::-1]:
        out = (out + c) * rho
    return out


def rho_power_sum_weighted(ucoeffs: np.ndarray, rho) -> np.ndarray:
    """sum_k c_k (k+1) rho^{k+1} (for derivatives of transform sums)."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    for k in range(len(ucoeffs) - 1, -1, -1):
        out = out * rho
        out = out + ucoeffs[k] * (k + 1)
    return out * rho
