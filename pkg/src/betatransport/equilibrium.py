"""Equilibrium measures of one-cut beta-matrix models.

The equilibrium measure of a confining polynomial potential V at inverse
temperature beta minimizes

    I_V(mu) = 1/2 iint (V(x) + V(y) - beta log|x-y|) dmu(x) dmu(y)

and on a single interval [a, b] has density S(x) sqrt((x-a)(b-x)) where,
with F(x) = -int (V'(x)-V'(y))/(x-y) dmu(y),

    S(x)^2 (x-a)(b-x) = -(beta pi)^{-2} [V'(x)^2 + 2 beta F(x)]

and a, b are the two bulk-bracketing zeros of Q = V'^2 + 2 beta F.  For
polynomial V the function F is a polynomial whose coefficients are moments
of mu, so the fixed point runs over a short moment vector: from moments,
form Q, take its exact roots, divide off the endpoint factors, normalize.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as ncheb
from numpy.polynomial import polynomial as npoly
from scipy.optimize import brentq

from . import grids
from .errors import (
    CriticalityError,
    DomainError,
    InvalidInputError,
    InvalidSupportError,
    NoOneCutSolutionError,
    NonConvergenceError,
)
from .potentials import Potential

_DENSITY_FLOOR = 1e-8
_MASS_TOL = 1e-10


@dataclass(eq=False)
class EquilibriumMeasure:
    """One-cut measure dmu = S(x) sqrt((x-a)(b-x)) dx on [a, b].

    s_coeffs are Chebyshev-T coefficients of S in the pulled-back variable
    u = (x - m)/r.  Node values, quadrature weights, and transform data are
    derived once and cached; instances are treated as immutable.
    """

    a: float
    b: float
    s_coeffs: np.ndarray
    beta: float

    def __post_init__(self):
        if not self.b > self.a:
            raise InvalidSupportError(f"need b > a, got [{self.a}, {self.b}]")
        self.s_coeffs = np.atleast_1d(np.asarray(self.s_coeffs, dtype=float))
        n = len(self.s_coeffs)
        self.u, self.theta = grids.u_nodes(n)
        self.uw = grids.u_quad_weights(n)
        self.x = self.m + self.r * self.u
        s_vals = ncheb.chebval(self.u, self.s_coeffs)
        self.rho_hat = self.r**2 * s_vals  # r^2 S at nodes
        # int f dmu = sum omega_j f(x_j)
        self.omega = self.uw * self.rho_hat
        self.rho_ucoeffs = grids.u_coeffs_from_values(self.rho_hat, self.theta)
        # T-moments tau_k = int T_k(u) dmu_pulled(u), k = 0..n-1
        tk = np.cos(np.outer(np.arange(n), self.theta))
        self.t_moments = tk @ self.omega

    @property
    def m(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def r(self) -> float:
        return 0.5 * (self.b - self.a)

    @property
    def degree(self) -> int:
        return len(self.s_coeffs) - 1

    def mass(self) -> float:
        return float(np.sum(self.omega))

    def s_values(self, x) -> np.ndarray:
        return ncheb.chebval((np.asarray(x) - self.m) / self.r, self.s_coeffs)

    def density(self, x) -> np.ndarray:
        """Lebesgue density of mu, zero off [a, b]."""
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        out = np.zeros_like(x, dtype=float)
        xs = x[inside]
        out[inside] = self.s_values(xs) * np.sqrt((xs - self.a) * (self.b - xs))
        return out if x.ndim else float(out)

    def moments(self, kmax: int) -> np.ndarray:
        return np.array([np.sum(self.omega * self.x**q) for q in range(kmax + 1)])

    def cdf(self, x) -> np.ndarray:
        """mu((-inf, x]) by the closed-form antiderivative of the U-series."""
        x = np.asarray(x, dtype=float)
        th = np.arccos(np.clip((x - self.m) / self.r, -1.0, 1.0))
        c = self.rho_ucoeffs
        out = np.full_like(th, 0.0)
        # int_theta^pi sin((k+1)t) sin t dt per U_k term
        out += c[0] * ((np.pi - th) / 2 + np.sin(2 * th) / 4)
        for k in range(1, len(c)):
            term = (np.sin((k + 2) * th) / (2 * (k + 2))
                    - np.sin(k * th) / (2 * k))
            out += c[k] * term
        out = np.where(x <= self.a, 0.0, np.where(x >= self.b, self.mass(), out))
        return out if x.ndim else float(out)

    def quantile(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        flat = np.atleast_1d(q)
        if np.any((flat < 0) | (flat > 1)):
            raise InvalidInputError("quantile levels must lie in [0, 1]")
        out = np.array([
            brentq(lambda x, qq=qq: self.cdf(x) - qq, self.a, self.b,
                   xtol=1e-14)
            if 0 < qq < 1 else (self.a if qq == 0 else self.b)
            for qq in flat
        ])
        return out if q.ndim else float(out[0])

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "beta": self.beta,
            "s_coeffs": list(map(float, self.s_coeffs)),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EquilibriumMeasure":
        return cls(float(d["a"]), float(d["b"]),
                   np.asarray(d["s_coeffs"], dtype=float), float(d["beta"]))


@dataclass
class HypothesisReport:
    one_cut: bool
    min_density_factor: float
    effective_potential_ok: bool
    details: str = ""


def _initial_support(V: Potential) -> tuple[float, float]:
    """Semicircle guess: quadratic fit at the global minimum of V."""
    vp = V.derivative_coeffs(1)
    crit = npoly.polyroots(vp)
    crit = crit[np.abs(crit.imag) < 1e-9].real
    if crit.size:
        x0 = crit[np.argmin(npoly.polyval(crit, np.asarray(V.coeffs)))]
    else:
        x0 = 0.0
    curv = float(npoly.polyval(x0, V.derivative_coeffs(2)))
    radius = np.sqrt(2 * V.beta / curv) if curv > 1e-12 else 1.0
    return float(x0 - radius), float(x0 + radius)


def _one_cut_step(V: Potential, moments: np.ndarray, center: float,
                  degree: int):
    """One exact solve of the ansatz given the moment vector of mu.

    Returns (a, b, s_values at the new U-nodes, new moments, mass).
    """
    beta = V.beta
    vp = V.derivative_coeffs(1)
    d1 = len(vp) - 1
    # F(x) = - sum_p x^p sum_{m>p} vp_m M_{m-1-p}
    F = np.zeros(max(d1, 1))
    for p in range(d1):
        F[p] = -sum(vp[mm] * moments[mm - 1 - p] for mm in range(p + 1, d1 + 1))
    Q = npoly.polyadd(npoly.polymul(vp, vp), 2 * beta * F)
    roots = npoly.polyroots(Q)
    scale = max(1.0, np.max(np.abs(roots))) if roots.size else 1.0
    real = np.sort(roots[np.abs(roots.imag) < 1e-8 * scale].real)
    left = real[real < center]
    right = real[real > center]
    if left.size == 0 or right.size == 0:
        raise NoOneCutSolutionError(
            "endpoint equation V'^2 + 2 beta F has no real root pair "
            "bracketing the bulk; no one-cut solution"
        )
    a, b = float(left[-1]), float(right[0])
    # exact division by the endpoint factors (a, b are roots of Q)
    den = npoly.polymul([-a, 1.0], [b, -1.0])  # (x-a)(b-x)
    R, _ = npoly.polydiv(-np.atleast_1d(Q), den)
    n = degree + 1
    u, _ = grids.u_nodes(n)
    x = 0.5 * (a + b) + 0.5 * (b - a) * u
    Rv = npoly.polyval(x, R)
    if np.min(Rv) < -1e-10 * max(1.0, np.max(np.abs(Rv))):
        raise NoOneCutSolutionError(
            "density factor S^2 negative inside the candidate support; "
            "the one-cut ansatz is inconsistent for this potential"
        )
    s_vals = np.sqrt(np.clip(Rv, 0.0, None)) / (beta * np.pi)
    uw = grids.u_quad_weights(n)
    mass = float(np.sum(uw * (0.5 * (b - a)) ** 2 * s_vals))
    s_vals = s_vals / mass
    kmax = len(moments) - 1
    new_m = np.array([np.sum(uw * (0.5 * (b - a)) ** 2 * s_vals * x**q)
                      for q in range(kmax + 1)])
    return a, b, s_vals, new_m, mass


def solve_equilibrium(
    V: Potential,
    degree: int = 64,
    tol: float = 1e-10,
    max_iter: int = 200,
    damping: float = 0.5,
) -> EquilibriumMeasure:
    """Fixed-point solve for the one-cut equilibrium measure of V.

    Iterates on the moment vector of mu with damping; each step solves the
    ansatz exactly for the current moments.  Raises NoOneCutSolutionError /
    CriticalityError / NonConvergenceError per the failure mode.
    """
    V.require_confining("model potential")
    vp = V.derivative_coeffs(1)
    d1 = len(vp) - 1
    a, b = _initial_support(V)
    n = degree + 1
    u, _ = grids.u_nodes(n)
    uw = grids.u_quad_weights(n)
    # moments of the initial semicircle on [a, b]
    r0 = 0.5 * (b - a)
    x0 = 0.5 * (a + b) + r0 * u
    w0 = uw * r0**2 * (2 / (np.pi * r0**2))
    moments = np.array([np.sum(w0 * x0**q) for q in range(max(d1, 1))])
    prev = None
    for _ in range(max_iter):
        a_new, b_new, s_vals, new_m, _ = _one_cut_step(
            V, moments, 0.5 * (a + b), degree)
        move = max(abs(a_new - a), abs(b_new - b))
        if prev is not None:
            move = max(move, float(np.max(np.abs(s_vals - prev))))
        a, b, prev = a_new, b_new, s_vals
        if move < tol:
            break
        moments = (1 - damping) * moments + damping * new_m
    else:
        raise NonConvergenceError(
            f"equilibrium iteration did not contract in {max_iter} steps "
            f"(last movement {move:.3e})"
        )
    if np.min(s_vals) < _DENSITY_FLOOR:
        raise CriticalityError(
            f"density factor min {np.min(s_vals):.3e} below the "
            f"non-criticality floor {_DENSITY_FLOOR:g}"
        )
    _, theta = grids.u_nodes(n)
    s_coeffs = grids.t_coeffs_from_u_values(s_vals, theta)
    mu = EquilibriumMeasure(a, b, s_coeffs, V.beta)
    if abs(mu.mass() - 1.0) > _MASS_TOL:
        raise NonConvergenceError(
            f"converged measure has mass {mu.mass():.12f}, not 1"
        )
    return mu


def variational_residual(mu: EquilibriumMeasure, V: Potential) -> float:
    """max over interior nodes of |beta PV int dmu/(x-y) - V'(x)|."""
    n = len(mu.rho_ucoeffs)
    # PV int rho_hat(v) sqrt(1-v^2)/(u-v) dv = pi sum c_k T_{k+1}(u)
    tkp1 = np.cos(np.outer(np.arange(1, n + 1), mu.theta))
    pv = np.pi * (mu.rho_ucoeffs @ tkp1) / mu.r
    vp = npoly.polyval(mu.x, V.derivative_coeffs(1))
    return float(np.max(np.abs(mu.beta * pv - vp)))


def stieltjes(mu: EquilibriumMeasure, z):
    """G(z) = int dmu(y)/(z - y) for z off [a, b]; G ~ 1/z at infinity."""
    zarr = np.asarray(z, dtype=complex)
    on_support = (zarr.imag == 0) & (zarr.real >= mu.a) & (zarr.real <= mu.b)
    if np.any(on_support):
        raise DomainError("Stieltjes transform requested on the support")
    w = (zarr - mu.m) / mu.r
    rho = grids.inverse_joukowski(w)
    out = (np.pi / mu.r) * grids.rho_power_sum(mu.rho_ucoeffs, rho)
    return out if zarr.ndim else complex(out)


def log_potential(mu: EquilibriumMeasure, x) -> np.ndarray:
    """int log|x - y| dmu(y), closed form from the Chebyshev log kernel."""
    x = np.asarray(x, dtype=float)
    u = (x - mu.m) / mu.r
    tau = mu.t_moments
    n = len(tau)
    ks = np.arange(1, n)
    out = np.empty_like(u)
    inside = np.abs(u) <= 1.0
    if np.any(inside):
        ui = u[inside]
        tk = np.cos(np.outer(ks, np.arccos(ui)))
        out[inside] = -np.log(2.0) - 2.0 * ((tau[1:] / ks) @ tk)
    if np.any(~inside):
        ue = u[~inside]
        rho = grids.inverse_joukowski(ue.astype(complex)).real
        powers = rho[None, :] ** ks[:, None]
        out[~inside] = np.log(np.abs(1.0 / rho) / 2.0) - 2.0 * (
            (tau[1:] / ks) @ powers)
    out = out + np.log(mu.r)
    return out if x.ndim else float(out)


def effective_potential(mu: EquilibriumMeasure, V: Potential, x):
    """U_V(x) = V(x) - beta int log|x-y| dmu(y)."""
    x_arr = np.asarray(x, dtype=float)
    out = npoly.polyval(x_arr, np.asarray(V.coeffs)) - mu.beta * log_potential(
        mu, x_arr)
    return out if x_arr.ndim else float(out)


def check_hypotheses(
    mu: EquilibriumMeasure, V: Potential, scan_points: int = 512
) -> HypothesisReport:
    """Non-criticality floor and exterior minimality of U_V.

    Scans U_V on geometric grids on both sides of the support out to
    |x| = 10 max(|a|, |b|) and verifies the exterior minimum sits at the
    endpoints; also checks that V'^2 + 2 beta F stays positive outside
    (the exterior factor ell never vanishes).
    """
    grid_u = np.concatenate([mu.u, [-1.0, 1.0]])
    smin = float(np.min(ncheb.chebval(grid_u, mu.s_coeffs)))
    notes = []
    far = 10.0 * max(abs(mu.a), abs(mu.b), 1.0)
    offsets = np.geomspace(1e-6 * mu.r, 1.0, scan_points)
    ok = True
    q_poly = _endpoint_polynomial(mu, V)
    for side, edge in (("left", mu.a), ("right", mu.b)):
        sign = -1.0 if side == "left" else 1.0
        reach = max(far - abs(edge), mu.r)
        xs = edge + sign * offsets * reach
        u_edge = effective_potential(mu, V, np.array([edge]))[0]
        u_scan = effective_potential(mu, V, xs)
        if np.min(u_scan) < u_edge - 1e-8 * max(1.0, abs(u_edge)):
            ok = False
            notes.append(f"{side} exterior dips below the endpoint value")
        qv = npoly.polyval(xs, q_poly)
        if np.min(qv) <= 0:
            ok = False
            notes.append(f"exterior factor vanishes on the {side} scan grid")
    one_cut = smin >= _DENSITY_FLOOR
    if not one_cut:
        notes.append(f"density factor min {smin:.3e} below floor")
    return HypothesisReport(
        one_cut=one_cut,
        min_density_factor=smin,
        effective_potential_ok=ok,
        details="; ".join(notes) if notes else
        "one-cut, non-critical, exterior minimum at the endpoints",
    )


def _endpoint_polynomial(mu: EquilibriumMeasure, V: Potential) -> np.ndarray:
    """Q = V'^2 + 2 beta F as polynomial coefficients, F from mu-moments."""
    vp = V.derivative_coeffs(1)
    d1 = len(vp) - 1
    M = mu.moments(max(d1 - 1, 0))
    F = np.zeros(max(d1, 1))
    for p in range(d1):
        F[p] = -sum(vp[mm] * M[mm - 1 - p] for mm in range(p + 1, d1 + 1))
    return npoly.polyadd(npoly.polymul(vp, vp), 2 * mu.beta * F)


def interpolated_measure(
    muV: EquilibriumMeasure, muVW: EquilibriumMeasure, t: float
) -> EquilibriumMeasure:
    """Linear interpolation (1-t) mu_V + t mu_{V+W} of same-support measures."""
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError(f"interpolation time must be in [0, 1], got {t}")
    if abs(muV.a - muVW.a) > 1e-8 or abs(muV.b - muVW.b) > 1e-8:
        raise InvalidInputError(
            "support mismatch: interpolation needs matched supports "
            f"([{muV.a},{muV.b}] vs [{muVW.a},{muVW.b}])"
        )
    if muV.beta != muVW.beta:
        raise InvalidInputError("beta mismatch between measures")
    na, nb = len(muV.s_coeffs), len(muVW.s_coeffs)
    ca = np.pad(muV.s_coeffs, (0, max(nb - na, 0)))
    cb = np.pad(muVW.s_coeffs, (0, max(na - nb, 0)))
    return EquilibriumMeasure(muV.a, muV.b, (1 - t) * ca + t * cb, muV.beta)


def energy(mu: EquilibriumMeasure, V: Potential) -> float:
    """I_V(mu) = int V dmu - (beta/2) iint log|x-y| dmu dmu.

    The double logarithmic integral uses the Chebyshev log-kernel expansion
    log|u-v| = -log 2 - 2 sum_k T_k(u) T_k(v)/k, which turns it into a sum
    over squared T-moments of mu.
    """
    tau = mu.t_moments
    n = len(tau)
    ks = np.arange(1, n)
    double_log = np.log(mu.r) - np.log(2.0) - 2.0 * np.sum(tau[1:] ** 2 / ks)
    v_int = float(np.sum(mu.omega * npoly.polyval(mu.x, np.asarray(V.coeffs))))
    return v_int - 0.5 * mu.beta * double_log
