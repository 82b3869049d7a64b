"""Apply and invert the master operator of the linearized equilibrium problem.

For a one-cut measure mu with potential V the operator is

    Xi f(x) = -beta int (f(x) - f(y))/(x - y) dmu(y) + V'(x) f(x),

which on the support reduces to beta PV int f(y)/(x-y) dmu(y) by the
variational equality.  In the Chebyshev-U basis the PV transform is a pure
coefficient shift, so applying Xi is exact on interpolants.  Inversion solves
the dominant airfoil (square-root-weight) singular integral equation:

    h(x) = h0(x) - pi (x - m)(g(x) + c_g) + c2,
    f(x) = h(x) / (pi^2 beta (x-a)(b-x) S(x)),

with h0 the regularized weighted integral of divided differences of g and
(c_g, c2) the unique pair making h vanish at both endpoints.  Off the
support, f continues as k/ell with k(x) = beta int f dmu/(x-y) - g(x) - c_g
and ell(x) = beta G(x) - V'(x) = -sign(x - m) sqrt(V'(x)^2 + 2 beta F(x)).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as ncheb
from numpy.polynomial import polynomial as npoly
from scipy.fft import dst

from . import grids
from .equilibrium import EquilibriumMeasure, _endpoint_polynomial
from .errors import (
    ClampWarning,
    CriticalityError,
    DomainError,
    InvalidInputError,
    InversionFailureError,
)
from .potentials import Potential

_EDGE_GUARD_VALUE = 1e-8
_EDGE_GUARD_DERIV = 1e-7
# Pulled-back half-width of the band past each support edge where interior
# Chebyshev series keep serving functions that are analytic across the
# edge.  The k/ell exterior rules divide by ell ~ sqrt(distance), so their
# values (and worse, their derivatives) amplify numerator error right
# outside the support; the series extension is smooth and accurate there.
EDGE_BAND_U = 1e-2


# ----------------------------------------------------------------- exterior

class ExteriorFactor:
    """The factor ell(x) = beta G(x) - V'(x) on the complement of [a, b].

    Evaluated from the stable closed form -sign(x-m) sqrt(Q(x)) with
    Q = V'^2 + 2 beta F; ell is Holder-1/2 at the endpoints (exponent 0.5)
    and behaves like -V'(x) at infinity.
    """

    exponent: float = 0.5

    def __init__(self, mu: EquilibriumMeasure, V: Potential, grid_size: int = 64):
        self.mu = mu
        self.V = V
        self.q_poly = _endpoint_polynomial(mu, V)
        self.q_deriv = npoly.polyder(self.q_poly)
        # diagnostic exterior grid of values, one dyadic range per side
        off = np.geomspace(1e-6, 1.0, grid_size // 2) * mu.r
        self.grid = np.concatenate([mu.a - off[::-1], mu.b + off])
        self.values = self(self.grid)

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        inside = (x_arr > self.mu.a) & (x_arr < self.mu.b)
        if np.any(inside):
            raise DomainError("ell evaluated inside the support")
        q = npoly.polyval(x_arr, self.q_poly)
        neg = q < 0
        if np.any(neg):
            warnings.warn(
                "V'^2 + 2 beta F numerically negative near an endpoint; "
                "clamping ell to 0", ClampWarning)
            q = np.clip(q, 0.0, None)
        out = -np.sign(x_arr - self.mu.m) * np.sqrt(q)
        return out if x_arr.ndim else float(out)

    def derivative(self, x):
        x_arr = np.asarray(x, dtype=float)
        q = np.clip(npoly.polyval(x_arr, self.q_poly), 1e-300, None)
        qp = npoly.polyval(x_arr, self.q_deriv)
        out = -np.sign(x_arr - self.mu.m) * qp / (2.0 * np.sqrt(q))
        return out if x_arr.ndim else float(out)


def exterior_ell(mu: EquilibriumMeasure, V: Potential, x):
    """ell(x) for x off [a, b]; sign convention matches beta G - V'."""
    return ExteriorFactor(mu, V)(x)


def _transform_of(mu: EquilibriumMeasure, ucoeffs: np.ndarray, x: np.ndarray,
                  order: int = 0) -> np.ndarray:
    """int p(y) dmu(y)/(x - y) off support, p the interpolant with f*rho_hat
    U-coefficients `ucoeffs`; order 1 gives d/dx of the transform."""
    w = (np.asarray(x, dtype=float) - mu.m) / mu.r
    rho = grids.inverse_joukowski(w.astype(complex))
    if order == 0:
        return ((np.pi / mu.r) * grids.rho_power_sum(ucoeffs, rho)).real
    s = np.sqrt(w.astype(complex) - 1.0) * np.sqrt(w.astype(complex) + 1.0)
    val = -(np.pi / mu.r**2) * grids.rho_power_sum_weighted(ucoeffs, rho) / s
    return val.real


class _KOverEllRule:
    """Exterior continuation f = (beta H_f - g - c_g)/ell of an inversion."""

    def __init__(self, mu, V, fk_ucoeffs, g, gprime, c_g, edge_vals, edge_derivs):
        self.mu = mu
        self.fk_ucoeffs = fk_ucoeffs
        self.g = g
        self.gprime = gprime
        self.c_g = c_g
        self.ell = ExteriorFactor(mu, V)
        self.edge_vals = edge_vals      # (f(a), f(b)) interior limits
        self.edge_derivs = edge_derivs  # (f'(a), f'(b)) interior limits

    def _dist_side(self, x):
        left = self.mu.a - x
        right = x - self.mu.b
        dist = np.maximum(left, right)
        side = np.where(left > right, 0, 1)
        return dist, side

    def __call__(self, x, order=0):
        x = np.asarray(x, dtype=float)
        dist, side = self._dist_side(x)
        guard = (_EDGE_GUARD_VALUE if order == 0 else _EDGE_GUARD_DERIV) * max(
            1.0, self.mu.r)
        near = dist < guard
        out = np.empty_like(x)
        if np.any(~near):
            xo = x[~near]
            ell = self.ell(xo)
            h = _transform_of(self.mu, self.fk_ucoeffs, xo)
            k = self.mu.beta * h - self.g(xo) - self.c_g
            f = k / ell
            if order == 0:
                out[~near] = f
            else:
                hp = _transform_of(self.mu, self.fk_ucoeffs, xo, order=1)
                kp = self.mu.beta * hp - self.gprime(xo)
                out[~near] = (kp - f * self.ell.derivative(xo)) / ell
        if np.any(near):
            ref = self.edge_vals if order == 0 else self.edge_derivs
            out[near] = np.where(side[near] == 0, ref[0], ref[1])
        return out


class _XiImageRule:
    """Exterior values of Xi f: -f(x) ell(x) + beta int f dmu/(x - y)."""

    def __init__(self, mu, V, fk_ucoeffs, f_eval):
        self.mu = mu
        self.fk_ucoeffs = fk_ucoeffs
        self.f_eval = f_eval  # callable (x, order) for f itself off support
        self.ell = ExteriorFactor(mu, V)

    def __call__(self, x, order=0):
        x = np.asarray(x, dtype=float)
        h = _transform_of(self.mu, self.fk_ucoeffs, x)
        fv = self.f_eval(x, 0)
        if order == 0:
            return -fv * self.ell(x) + self.mu.beta * h
        hp = _transform_of(self.mu, self.fk_ucoeffs, x, order=1)
        return (-self.f_eval(x, 1) * self.ell(x)
                - fv * self.ell.derivative(x) + self.mu.beta * hp)


class _H0Rule:
    """Exterior evaluation of the regular weighted integral h0."""

    def __init__(self, xq, wq, gq, g):
        self.xq = xq
        self.wq = wq
        self.gq = gq
        self.g = g

    def __call__(self, x, order=0):
        if order != 0:
            raise InvalidInputError("h0 exterior rule supports order 0 only")
        x = np.asarray(x, dtype=float)
        gx = np.asarray(self.g(x), dtype=float)
        num = self.gq[None, :] - gx[:, None]
        return (self.wq[None, :] * num / (self.xq[None, :] - x[:, None])).sum(axis=1)


# ------------------------------------------------------- support functions

@dataclass(eq=False)
class SupportFunction:
    """Function on [a, b] as a Chebyshev series, with exterior continuation.

    `interior` holds T-coefficients in the pulled-back variable; `exterior`
    is an evaluation rule (k/ell form for inversion results) or None, in
    which case the Chebyshev series extrapolates (exact for polynomials).
    """

    support: tuple[float, float]
    interior: np.ndarray
    exterior: object | None = None
    # nonzero only for functions analytic across the support edges: the
    # interior series then extends through a band past each edge, where
    # the ell-quotient exterior rules are ill-conditioned
    extend_band: float = 0.0

    def __post_init__(self):
        self.interior = np.atleast_1d(np.asarray(self.interior, dtype=float))
        a, b = self.support
        self._m = 0.5 * (a + b)
        self._r = 0.5 * (b - a)
        self._derivs = {0: self.interior}

    def _coeffs(self, order: int) -> np.ndarray:
        if order not in self._derivs:
            c = self._coeffs(order - 1)
            d = ncheb.chebder(c) / self._r if len(c) > 1 else np.zeros(1)
            self._derivs[order] = d
        return self._derivs[order]

    def evaluate(self, x, order: int = 0):
        x_arr = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x_arr).astype(float)
        a, b = self.support
        u = (flat - self._m) / self._r
        inside = np.abs(u) <= 1.0 + max(1e-12, self.extend_band)
        out = np.empty_like(flat)
        if np.any(inside):
            ui = u[inside]
            if self.extend_band <= 0.0:
                ui = np.clip(ui, -1, 1)
            out[inside] = ncheb.chebval(ui, self._coeffs(order))
        if np.any(~inside):
            if self.exterior is None:
                out[~inside] = ncheb.chebval(u[~inside], self._coeffs(order))
            elif order <= 1:
                out[~inside] = self.exterior(flat[~inside], order)
            else:
                h = 1e-5 * max(1.0, self._r)
                out[~inside] = (self.exterior(flat[~inside] + h, 1)
                                - self.exterior(flat[~inside] - h, 1)) / (2 * h)
        if x_arr.ndim == 0:
            return float(out[0])
        return out.reshape(x_arr.shape)

    def __call__(self, x, order: int = 0):
        return self.evaluate(x, order)

    def endpoint_values(self, order: int = 0) -> tuple[float, float]:
        c = self._coeffs(order)
        return float(ncheb.chebval(-1.0, c)), float(ncheb.chebval(1.0, c))


# ------------------------------------------------------------- operations

def _as_node_values(f, mu: EquilibriumMeasure):
    """Values of f at the measure's interior nodes plus an evaluator."""
    if isinstance(f, SupportFunction):
        return f.evaluate(mu.x), lambda x, order=0: f.evaluate(x, order)
    if callable(f):
        g = lambda x, order=0: _numeric_eval(f, x, order)
        return np.asarray(f(mu.x), dtype=float), g
    coeffs = np.atleast_1d(np.asarray(f, dtype=float))
    def poly_eval(x, order=0):
        c = coeffs
        for _ in range(order):
            c = npoly.polyder(c) if len(c) > 1 else np.zeros(1)
        return npoly.polyval(np.asarray(x, dtype=float), c)
    return poly_eval(mu.x), poly_eval


def _numeric_eval(f, x, order):
    if order == 0:
        return np.asarray(f(np.asarray(x, dtype=float)), dtype=float)
    h = 1e-6
    return (_numeric_eval(f, np.asarray(x) + h, order - 1)
            - _numeric_eval(f, np.asarray(x) - h, order - 1)) / (2 * h)


def apply_xi(f, mu: EquilibriumMeasure, V: Potential) -> SupportFunction:
    """Xi f as a SupportFunction valid on all of R.

    On [a, b]:  beta PV int f(y) dmu(y)/(x-y), a U->T coefficient shift.
    Off [a, b]: -f(x) ell(x) + beta int f(y) dmu(y)/(x-y).
    """
    fvals, f_eval = _as_node_values(f, mu)
    uc = grids.u_coeffs_from_values(fvals * mu.rho_hat, mu.theta)
    n = len(uc)
    out = np.zeros(n + 1)
    out[1:] = mu.beta * np.pi / mu.r * uc
    rule = _XiImageRule(mu, V, uc, f_eval)
    return SupportFunction((mu.a, mu.b), out, rule)


def airfoil_h0(g, support, degree: int = 64) -> SupportFunction:
    """h0(x) = int_a^b sqrt((y-a)(b-y)) (g(y) - g(x))/(y - x) dy.

    Regular (non-PV) integral by Gauss quadrature with the square-root
    weight; the diagonal is the divided-difference limit g'(x).
    """
    a, b = map(float, support)
    if not b > a:
        raise InvalidInputError(f"degenerate support [{a}, {b}]")
    n = degree + 1
    u, theta = grids.u_nodes(n)
    r = 0.5 * (b - a)
    x = 0.5 * (a + b) + r * u
    wq = r**2 * grids.u_quad_weights(n)
    gv, g_eval = _as_node_values_plain(g, x)
    gp = _spectral_derivative_values(gv, theta, r)
    h0 = _h0_nodes(x, wq, gv, gp)
    coeffs = grids.t_coeffs_from_u_values(h0, theta)
    return SupportFunction((a, b), coeffs, _H0Rule(x, wq, gv, g_eval))


def _as_node_values_plain(g, x):
    if isinstance(g, SupportFunction):
        return g.evaluate(x), lambda xx: g.evaluate(xx)
    if callable(g):
        return np.asarray(g(x), dtype=float), g
    coeffs = np.atleast_1d(np.asarray(g, dtype=float))
    ev = lambda xx: npoly.polyval(np.asarray(xx, dtype=float), coeffs)
    return ev(x), ev


def _spectral_derivative_values(gv, theta, r):
    c = grids.t_coeffs_from_u_values(gv, theta)
    return ncheb.chebval(np.cos(theta), ncheb.chebder(c)) / r


def _h0_nodes(x, wq, gv, gp):
    dx = x[None, :] - x[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (gv[None, :] - gv[:, None]) / dx
    np.fill_diagonal(q, gp)
    return q @ wq


def _h0_block(x, wq, G, Gp):
    """h0 for a block of right-hand sides; G, Gp are (ncols, n)."""
    dx = x[None, :] - x[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (G[:, None, :] - G[:, :, None]) / dx[None, :, :]
    idx = np.arange(len(x))
    q[:, idx, idx] = Gp
    return q @ wq


def _invert_block(mu: EquilibriumMeasure, V: Potential, G, Gp, Ga, Gb):
    """Tricomi inversion for a block of right-hand sides on mu's grid.

    G, Gp: (ncols, n) values of g and g' at interior nodes; Ga, Gb: values
    at the endpoints.  Returns (f_nodes (ncols, n), c_g (ncols,),
    f_T_coeffs (ncols, n), fk_ucoeffs (ncols, n)).
    """
    beta, r = mu.beta, mu.r
    wq = mu.r**2 * mu.uw
    rho = mu.rho_hat
    if np.min(rho) < 1e-8 * r**2:
        raise CriticalityError("density factor below floor; cannot invert")
    h0 = _h0_block(mu.x, wq, G, Gp)
    h0a = ((G - Ga[:, None]) / (mu.x - mu.a)[None, :]) @ wq
    h0b = ((G - Gb[:, None]) / (mu.x - mu.b)[None, :]) @ wq
    c_g = (h0b - h0a - np.pi * r * (Ga + Gb)) / (2 * np.pi * r)
    c2 = (np.pi * r * (Gb - Ga) - h0a - h0b) / 2
    h = (h0 - np.pi * (mu.x - mu.m)[None, :] * (G + c_g[:, None])
         + c2[:, None])
    res_a = np.abs(h0a + np.pi * r * (Ga + c_g) + c2)
    res_b = np.abs(h0b - np.pi * r * (Gb + c_g) + c2)
    scale = 1.0 + np.max(np.abs(h0), axis=1)
    bad = (res_a > 1e-8 * scale) | (res_b > 1e-8 * scale)
    if np.any(bad) or not np.all(np.isfinite(h)):
        raise InversionFailureError(
            "endpoint values of h fail to vanish after the constant solve"
        )
    f = h / (np.pi**2 * beta * (1 - mu.u**2)[None, :] * rho[None, :])
    sin_t = np.sin(mu.theta)
    n = len(mu.x)
    f_u = dst((f * sin_t[None, :])[:, ::-1], type=1, axis=1) / (n + 1)
    f_t = np.stack([grids.u_to_t(row) for row in f_u])
    fk_u = dst(((f * rho[None, :]) * sin_t[None, :])[:, ::-1], type=1,
               axis=1) / (n + 1)
    return f, c_g, f_t, fk_u


def invert_xi(g, mu: EquilibriumMeasure, V: Potential,
              gprime=None) -> tuple[SupportFunction, float]:
    """Solve Xi f = g + c_g; returns (f, c_g) with f valid on all of R.

    g may be a callable, polynomial coefficients, or a SupportFunction;
    gprime (same forms) overrides the spectral derivative used on the
    diagonal of h0 and in the exterior derivative rule.
    """
    gv, g_eval = _as_node_values(g, mu)
    if gprime is not None:
        gpv, gp_eval = _as_node_values(gprime, mu)
        gp_plain = lambda x: gp_eval(x, 0)
    else:
        gpv = _spectral_derivative_values(gv, mu.theta, mu.r)
        gp_plain = lambda x: g_eval(x, 1)
    ga = float(np.asarray(g_eval(np.array([mu.a]), 0))[0])
    gb = float(np.asarray(g_eval(np.array([mu.b]), 0))[0])
    f_nodes, c_g, f_t, fk_u = _invert_block(
        mu, V, gv[None, :], gpv[None, :], np.array([ga]), np.array([gb]))
    coeffs = f_t[0]
    edge_vals = (float(ncheb.chebval(-1.0, coeffs)),
                 float(ncheb.chebval(1.0, coeffs)))
    dcoeffs = ncheb.chebder(coeffs) / mu.r
    edge_derivs = (float(ncheb.chebval(-1.0, dcoeffs)),
                   float(ncheb.chebval(1.0, dcoeffs)))
    rule = _KOverEllRule(mu, V, fk_u[0],
                         lambda x: np.asarray(g_eval(x, 0), dtype=float),
                         lambda x: np.asarray(gp_plain(x), dtype=float),
                         float(c_g[0]), edge_vals, edge_derivs)
    # inversion results are analytic across the support edges, so the
    # interior series extends through the near-edge band
    return SupportFunction((mu.a, mu.b), coeffs, rule,
                           extend_band=EDGE_BAND_U), float(c_g[0])
