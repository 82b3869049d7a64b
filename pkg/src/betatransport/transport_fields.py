"""First-order accurate transport vector fields between interpolating models.

The field acting on a configuration (lambda_1, ..., lambda_N) at time t is

    Y_i = y0(lam_i) + (1/N) y1(lam_i)
          + (1/N) sum_j z(lam_i, lam_j) - int z(lam_i, y) dmu_t(y),

with each ingredient obtained by inverting the master operator Xi_t of the
interpolating measure mu_t = (1-t) mu_V + t mu_{V+Wt}:

    Xi y0 = -(Wt + const),
    Xi z(., y) = (beta/2) (y0(.) - y0(y))/(. - y) + const(y),
    Xi y1 = -(beta/2 - 1) (y0' + int d1 z(u, .) dmu_t(u)) + const.

z is stored as a two-variable Chebyshev coefficient tensor built from one
block inversion per y-node; sums over eigenvalues then collapse through the
basis (sum_j first, contract after), which keeps the cost of a field
evaluation linear in N.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as ncheb
from scipy.fft import dct

from . import grids
from .equilibrium import EquilibriumMeasure, interpolated_measure, solve_equilibrium
from .errors import (
    DegenerateConfigurationError,
    InvalidInputError,
    InvalidSupportError,
    UnsupportedOrderError,
)
from .master_operator import (
    EDGE_BAND_U,
    ExteriorFactor,
    SupportFunction,
    _invert_block,
    _transform_of,
    invert_xi,
)
from .potentials import AffineMap, Potential, interpolate, match_supports

_DD_GUARD = 1e-6
_PAIR_FLOOR = 1e-12
_CHUNK = 1 << 17


def _chebvander_clip(u: np.ndarray, deg: int) -> np.ndarray:
    """Chebyshev Vandermonde rows, extended through the edge band.

    Beyond the band the rows are placeholders (clipped to avoid overflow)
    and callers overwrite them with the exterior rule.
    """
    lim = 1.0 + EDGE_BAND_U
    return ncheb.chebvander(np.clip(u, -lim, lim), deg)


def _fit_over_y(values: np.ndarray) -> np.ndarray:
    """Chebyshev-T fit along axis 0 for data at first-kind nodes."""
    ny = values.shape[0]
    a = dct(values[::-1], type=2, axis=0) / ny
    a[0] /= 2
    return a


def _divided_difference(fx, fy, x, y, fmid, guard):
    """(fx - fy)/(x - y) with the smooth diagonal limit fmid."""
    dx = x - y
    small = np.abs(dx) < guard
    safe = np.where(small, 1.0, dx)
    return np.where(small, fmid, (fx - fy) / safe)


# ------------------------------------------------------------------ ZField

@dataclass(eq=False)
class ZField:
    """Two-variable interaction kernel z(x, y) of a time slice.

    Czz[k, l] multiplies T_k(u_x) T_l(u_y); C1 and C2 are its exact partial
    derivative tensors.  Hzc carries the U-coefficients of z(., y) rho_hat
    fitted over y, which gives the measure transform of z off the support in
    closed form, so evaluation stays accurate through the spectral edges.
    """

    mu: EquilibriumMeasure
    V: Potential
    y0: SupportFunction
    y_nodes: np.ndarray
    Czz: np.ndarray
    Hzc: np.ndarray
    c_coeffs: np.ndarray

    def __post_init__(self):
        r = self.mu.r
        self.C1 = ncheb.chebder(self.Czz, axis=0) / r
        self.C2 = ncheb.chebder(self.Czz, axis=1) / r
        self.Hzc_dy = ncheb.chebder(self.Hzc, axis=1) / r
        self.c_dcoeffs = (ncheb.chebder(self.c_coeffs) / r
                          if len(self.c_coeffs) > 1 else np.zeros(1))
        self.ell = ExteriorFactor(self.mu, self.V)
        n = self.Czz.shape[0]
        tau = self.mu.t_moments
        ny = self.Czz.shape[1]
        self._tau_y = tau[:ny]
        self._tau_x = tau
        # int z(x, y) dmu(y): interior series plus exact exterior rule
        zbar_c = self.Czz @ self._tau_y
        y0n = self.y0.evaluate(self.mu.x)
        self._y0rho_u = grids.u_coeffs_from_values(y0n * self.mu.rho_hat,
                                                   self.mu.theta)
        self._hbar_u = self.Hzc @ self._tau_y
        self._cbar = float(self.c_coeffs @ self._tau_y)
        self.zbar = SupportFunction((self.mu.a, self.mu.b), zbar_c,
                                    _ZBarRule(self, zbar_c))
        # int d1 z(u, x) dmu(u), a polynomial-like series in the second slot
        self.a_series = SupportFunction(
            (self.mu.a, self.mu.b), self._tau_x[: n - 1] @ self.C1
            if n > 1 else np.zeros(1))

    # -- helpers ---------------------------------------------------------

    def _pullback(self, x):
        return (np.asarray(x, dtype=float) - self.mu.m) / self.mu.r

    @property
    def _edge_guard_u(self) -> float:
        """Pulled-back half-width of the near-edge band served by the
        interior tensor (the k/ell quotient degrades right at the edge)."""
        return EDGE_BAND_U

    def _dd(self, x, y, order=0):
        """Divided difference of y0 (order 0) or its partials (order 1, 2)."""
        guard = _DD_GUARD * max(1.0, self.mu.r)
        mid = 0.5 * (x + y)
        fx = self.y0.evaluate(x)
        fy = self.y0.evaluate(y)
        dd = _divided_difference(fx, fy, x, y, self.y0.evaluate(mid, 1), guard)
        if order == 0:
            return dd
        half_second = 0.5 * self.y0.evaluate(mid, 2)
        if order == 1:  # d/dx
            return _divided_difference(self.y0.evaluate(x, 1), dd, x, y,
                                       half_second, guard)
        return _divided_difference(dd, self.y0.evaluate(y, 1), x, y,
                                   half_second, guard)

    def c_at(self, y):
        return ncheb.chebval(self._pullback(y), self.c_coeffs)

    def _exterior(self, x, y, dx, dy):
        """Exact off-support values via z = (beta Hz - (beta/2) DD - c)/ell."""
        beta = self.mu.beta
        uy = self._pullback(y)
        ell = self.ell(x)
        if dy == 0:
            Ty = ncheb.chebvander(uy, self.Hzc.shape[1] - 1)
            hk = Ty @ self.Hzc.T  # (m, n): y-contracted U-coefficients
            h = self._transform_rows(hk, x, 0)
            val = (beta * h - 0.5 * beta * self._dd(x, y) - self.c_at(y)) / ell
            if dx == 0:
                return val
            hp = self._transform_rows(hk, x, 1)
            kp = (beta * hp - 0.5 * beta * self._dd(x, y, order=1)
                  - val * self.ell.derivative(x))
            return kp / ell
        Ty = ncheb.chebvander(uy, self.Hzc_dy.shape[1] - 1)
        hk_dy = Ty @ self.Hzc_dy.T
        h_dy = self._transform_rows(hk_dy, x, 0)
        cp = ncheb.chebval(uy, self.c_dcoeffs)
        return (beta * h_dy - 0.5 * beta * self._dd(x, y, order=2) - cp) / ell

    def _transform_rows(self, hk, x, order):
        """Row-wise transform sums: hk[i] are U-coefficients for point x[i]."""
        w = (np.asarray(x, dtype=float) - self.mu.m) / self.mu.r
        rho = grids.inverse_joukowski(w.astype(complex))
        n = hk.shape[1]
        powers = rho[:, None] ** np.arange(1, n + 1)
        if order == 0:
            return (np.pi / self.mu.r) * (powers * hk).sum(axis=1).real
        s = np.sqrt(w.astype(complex) - 1.0) * np.sqrt(w.astype(complex) + 1.0)
        weighted = (powers * hk * np.arange(1, n + 1)[None, :]).sum(axis=1)
        return (-(np.pi / self.mu.r**2) * weighted / s).real

    # -- evaluation ------------------------------------------------------

    def evaluate(self, x, y, dx: int = 0, dy: int = 0):
        """z and first partials at broadcast pairs (x, y)."""
        if (dx, dy) not in ((0, 0), (1, 0), (0, 1)):
            raise UnsupportedOrderError(
                f"z supports derivative orders (0,0), (1,0), (0,1); "
                f"got ({dx}, {dy})")
        xb, yb = np.broadcast_arrays(np.asarray(x, dtype=float),
                                     np.asarray(y, dtype=float))
        xf = xb.ravel().astype(float)
        yf = yb.ravel().astype(float)
        ux = self._pullback(xf)
        out = np.empty_like(xf)
        inside = np.abs(ux) <= 1.0 + self._edge_guard_u
        if np.any(inside):
            C = {(0, 0): self.Czz, (1, 0): self.C1, (0, 1): self.C2}[(dx, dy)]
            out[inside] = self._tensor(C, xf[inside], yf[inside])
        if np.any(~inside):
            out[~inside] = self._exterior(xf[~inside], yf[~inside], dx, dy)
        res = out.reshape(xb.shape)
        return float(res) if res.ndim == 0 else res

    def _tensor(self, C, x, y):
        ux = self._pullback(x)
        uy = self._pullback(y)
        out = np.empty_like(ux)
        for lo in range(0, len(ux), _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            Tx = _chebvander_clip(ux[sl], C.shape[0] - 1)
            Ty = ncheb.chebvander(uy[sl], C.shape[1] - 1)
            out[sl] = ((Tx @ C) * Ty).sum(axis=1)
        return out

    def sum_over_sources(self, x, sources, dx: int = 0):
        """sum_j z(x_i, src_j) along the last axis, per leading index.

        x and sources share shape (..., N); the j-sum collapses onto the
        y-basis before contraction, so the cost is O(N) per point.
        """
        if dx not in (0, 1):
            raise UnsupportedOrderError("source sums support dx in {0, 1}")
        xb = np.asarray(x, dtype=float)
        sb = np.asarray(sources, dtype=float)
        lead = xb.shape[:-1]
        xf = xb.reshape(-1, xb.shape[-1])
        sf = sb.reshape(-1, sb.shape[-1])
        C = self.Czz if dx == 0 else self.C1
        ny = C.shape[1]
        Ty = ncheb.chebvander(self._pullback(sf), ny - 1)
        sy = Ty.sum(axis=1)  # (B, ny)
        v = sy @ C.T  # (B, n)
        ux = self._pullback(xf)
        Tx = _chebvander_clip(ux, C.shape[0] - 1)
        out = np.einsum("bik,bk->bi", Tx.reshape(*xf.shape, -1), v)
        extr = np.abs(ux) > 1.0 + self._edge_guard_u
        if np.any(extr):
            out[extr] = self._sum_exterior(xf, sf, sy, extr, dx)
        return out.reshape(*lead, xb.shape[-1])

    def _sum_exterior(self, xf, sf, sy, extr, dx):
        beta = self.mu.beta
        bi, ci = np.nonzero(extr)
        xe = xf[bi, ci]
        hk = sy[bi] @ self.Hzc.T
        ell = self.ell(xe)
        h = self._transform_rows(hk, xe, 0)
        dd = self._dd(xe[:, None], sf[bi])
        csum = sy[bi] @ self.c_coeffs
        val = (beta * h - 0.5 * beta * dd.sum(axis=1) - csum) / ell
        if dx == 0:
            return val
        hp = self._transform_rows(hk, xe, 1)
        ddp = self._dd(xe[:, None], sf[bi], order=1)
        return (beta * hp - 0.5 * beta * ddp.sum(axis=1)
                - val * self.ell.derivative(xe)) / ell


class _ZBarRule:
    """Exterior rule for int z(x, y) dmu(y)."""

    def __init__(self, zf: ZField, zbar_c: np.ndarray):
        self.zf = zf
        self.edge_vals = (float(ncheb.chebval(-1.0, zbar_c)),
                          float(ncheb.chebval(1.0, zbar_c)))
        dz = (ncheb.chebder(zbar_c) / zf.mu.r if len(zbar_c) > 1
              else np.zeros(1))
        self.edge_derivs = (float(ncheb.chebval(-1.0, dz)),
                            float(ncheb.chebval(1.0, dz)))

    def __call__(self, x, order=0):
        zf = self.zf
        mu = zf.mu
        beta = mu.beta
        x = np.asarray(x, dtype=float)
        guard = (1e-8 if order == 0 else 1e-7) * max(1.0, mu.r)
        left = mu.a - x
        right = x - mu.b
        near = np.maximum(left, right) < guard
        if np.any(near):
            ref = self.edge_vals if order == 0 else self.edge_derivs
            out = np.empty_like(x)
            out[near] = np.where(left[near] > right[near], ref[0], ref[1])
            if np.any(~near):
                out[~near] = self(x[~near], order)
            return out
        hbar = _transform_of(mu, zf._hbar_u, x)
        g = _transform_of(mu, mu.rho_ucoeffs, x)  # Stieltjes transform
        hy0 = _transform_of(mu, zf._y0rho_u, x)
        y0x = zf.y0.evaluate(x)
        ell = zf.ell(x)
        val = (beta * hbar - 0.5 * beta * (y0x * g - hy0) - zf._cbar) / ell
        if order == 0:
            return val
        hbar_p = _transform_of(mu, zf._hbar_u, x, 1)
        g_p = _transform_of(mu, mu.rho_ucoeffs, x, 1)
        hy0_p = _transform_of(mu, zf._y0rho_u, x, 1)
        y0x_p = zf.y0.evaluate(x, 1)
        kp = (beta * hbar_p
              - 0.5 * beta * (y0x_p * g + y0x * g_p - hy0_p)
              - val * zf.ell.derivative(x))
        return kp / ell


# ------------------------------------------------------------ field build

def build_z(mu: EquilibriumMeasure, V: Potential, y0: SupportFunction,
            n_y: int = 48) -> ZField:
    """Interaction kernel from one block inversion over a y-node grid."""
    beta = mu.beta
    y_nodes = mu.m + mu.r * grids.cheb1_nodes(n_y)
    y0n = y0.evaluate(mu.x)
    y0y = y0.evaluate(y_nodes)
    y0pn = y0.evaluate(mu.x, 1)
    guard = _DD_GUARD * max(1.0, mu.r)
    X = mu.x[None, :]
    Yn = y_nodes[:, None]
    mid = 0.5 * (X + Yn)
    G = _divided_difference(y0n[None, :], y0y[:, None], X, Yn,
                            y0.evaluate(mid, 1), guard)
    Gp = _divided_difference(y0pn[None, :], G, X, Yn,
                             0.5 * y0.evaluate(mid, 2), guard)
    Ga = (y0.evaluate(mu.a) - y0y) / (mu.a - y_nodes)
    Gb = (y0.evaluate(mu.b) - y0y) / (mu.b - y_nodes)
    _, cg, f_t, fk_u = _invert_block(mu, V, G, Gp, Ga, Gb)
    Czz = _fit_over_y(0.5 * beta * f_t).T
    Hzc = _fit_over_y(0.5 * beta * fk_u).T
    c_coeffs = grids.t_coeffs_from_cheb1_values(0.5 * beta * cg)
    return ZField(mu, V, y0, y_nodes, Czz, Hzc, c_coeffs)


def build_y0(mu: EquilibriumMeasure, Vt: Potential,
             Wt: Potential) -> tuple[SupportFunction, float]:
    """Leading field: solves Xi_t y0 = -(Wt + const)."""
    g = -np.asarray(Wt.coeffs)
    return invert_xi(g, mu, Vt)


def build_y1(mu: EquilibriumMeasure, Vt: Potential, y0: SupportFunction,
             z: ZField) -> tuple[SupportFunction, float]:
    """Subleading field: solves Xi_t y1 = -(beta/2 - 1)(y0' + A) + const.

    A(x) = int d1 z(u, x) dmu_t(u); at beta = 2 the right-hand side
    vanishes identically and y1 = 0.
    """
    beta = mu.beta
    factor = -(0.5 * beta - 1.0)
    if factor == 0.0:
        return SupportFunction((mu.a, mu.b), np.zeros(1)), 0.0
    g = lambda x: factor * (y0.evaluate(x, 1) + z.a_series.evaluate(x))
    gp = lambda x: factor * (y0.evaluate(x, 2) + z.a_series.evaluate(x, 1))
    return invert_xi(g, mu, Vt, gprime=gp)


@dataclass(eq=False)
class FieldSlice:
    """All transport ingredients frozen at one interpolation time."""

    t: float
    mu: EquilibriumMeasure
    Vt: Potential
    y0: SupportFunction
    c0: float
    z: ZField
    y1: SupportFunction
    c1: float


@dataclass(eq=False)
class TransportFieldSet:
    """Time-sliced transport fields for the interpolation V -> V + Wt.

    Slices sit at Chebyshev-spaced times; evaluation between slices is
    linear interpolation of values (supports coincide by construction).
    """

    V: Potential
    W_tilde: Potential
    rescaling: AffineMap
    times: np.ndarray
    slices: list[FieldSlice]
    source_measure: EquilibriumMeasure
    target_measure: EquilibriumMeasure

    @property
    def beta(self) -> float:
        return self.V.beta

    def bracket(self, t: float) -> tuple[FieldSlice, FieldSlice, float]:
        t = float(t)
        if not -1e-12 <= t <= 1.0 + 1e-12:
            raise InvalidInputError(f"time {t} outside [0, 1]")
        i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1,
                        0, len(self.times) - 2))
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return self.slices[i], self.slices[i + 1], float(np.clip(w, 0.0, 1.0))

    def _lerp(self, t, f):
        s0, s1, w = self.bracket(t)
        if w == 0.0:
            return f(s0)
        if w == 1.0:
            return f(s1)
        return (1.0 - w) * f(s0) + w * f(s1)

    def y0_at(self, t, x, order: int = 0):
        return self._lerp(t, lambda s: s.y0.evaluate(x, order))

    def y1_at(self, t, x, order: int = 0):
        return self._lerp(t, lambda s: s.y1.evaluate(x, order))

    def zbar_at(self, t, x, order: int = 0):
        return self._lerp(t, lambda s: s.z.zbar.evaluate(x, order))

    def z_sum_at(self, t, x, sources, dx: int = 0):
        return self._lerp(t, lambda s: s.z.sum_over_sources(x, sources, dx))

    def z_diag_dy_at(self, t, x):
        return self._lerp(t, lambda s: s.z.evaluate(x, x, dy=1))

    def potential_at(self, t: float) -> Potential:
        return interpolate(self.V, self.W_tilde, float(t))

    def measure_at(self, t: float) -> EquilibriumMeasure:
        return interpolated_measure(self.source_measure, self.target_measure,
                                    float(t))


def _assemble_field_set(V: Potential, Wt: Potential, L: AffineMap,
                        muV: EquilibriumMeasure,
                        mu_target: EquilibriumMeasure,
                        times: np.ndarray, n_y: int) -> TransportFieldSet:
    slices = []
    for t in times:
        mu_t = interpolated_measure(muV, mu_target, float(t))
        Vt = interpolate(V, Wt, float(t))
        y0, c0 = build_y0(mu_t, Vt, Wt)
        z = build_z(mu_t, Vt, y0, n_y=n_y)
        y1, c1 = build_y1(mu_t, Vt, y0, z)
        slices.append(FieldSlice(float(t), mu_t, Vt, y0, c0, z, y1, c1))
    return TransportFieldSet(V, Wt, L, times, slices, muV, mu_target)


def build_field_set(V: Potential, W: Potential, n_time: int = 17,
                    degree: int = 64, n_y: int = 48,
                    solver_kwargs: dict | None = None) -> TransportFieldSet:
    """Solve both models, rescale supports, and slice the transport fields.

    The target model V + W is affinely rescaled so its equilibrium support
    matches the source; all fields are then built for the matched
    perturbation Wt on the common support.
    """
    V.require_confining("source potential")
    interpolate(V, W, 1.0).require_confining("target potential")
    kw = dict(degree=degree)
    kw.update(solver_kwargs or {})
    muV = solve_equilibrium(V, **kw)
    muVW = solve_equilibrium(interpolate(V, W, 1.0), **kw)
    L, Wt = match_supports(V, W, (muV.a, muV.b), (muVW.a, muVW.b))
    mu_target = solve_equilibrium(interpolate(V, Wt, 1.0), **kw)
    if (abs(mu_target.a - muV.a) > 1e-8 or abs(mu_target.b - muV.b) > 1e-8):
        raise InvalidSupportError(
            "support mismatch after rescaling: "
            f"[{mu_target.a}, {mu_target.b}] vs [{muV.a}, {muV.b}]")
    times = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, n_time)))
    times[0], times[-1] = 0.0, 1.0
    return _assemble_field_set(V, Wt, L, muV, mu_target, times, n_y)


def check_field_equations(fields: TransportFieldSet, idx: int,
                          n_check: int = 12) -> dict:
    """Max defining-equation residual of one slice at interior check nodes.

    Applies Xi independently of the inversion route and measures how well
    y0, z, and y1 satisfy their equations up to the stored constants.
    """
    from .master_operator import apply_xi

    sl = fields.slices[idx]
    mu, Vt = sl.mu, sl.Vt
    beta = mu.beta
    xc = mu.m + mu.r * grids.cheb1_nodes(n_check)
    xi_y0 = apply_xi(sl.y0, mu, Vt).evaluate(xc)
    out = {"y0": float(np.max(np.abs(
        xi_y0 + fields.W_tilde(xc) - sl.c0)))}
    worst = 0.0
    for y in mu.m + mu.r * grids.cheb1_nodes(n_check):
        xi_z = apply_xi(
            lambda x, y=y: sl.z.evaluate(x, np.full_like(
                np.asarray(x, dtype=float), y)), mu, Vt).evaluate(xc)
        rhs = 0.5 * beta * sl.z._dd(xc, np.full_like(xc, y)) + sl.z.c_at(y)
        worst = max(worst, float(np.max(np.abs(xi_z - rhs))))
    out["z"] = worst
    if 0.5 * beta == 1.0:
        out["y1"] = float(np.max(np.abs(sl.y1.evaluate(xc))))
    else:
        xi_y1 = apply_xi(sl.y1, mu, Vt).evaluate(xc)
        rhs1 = (-(0.5 * beta - 1.0)
                * (sl.y0.evaluate(xc, 1) + sl.z.a_series.evaluate(xc))
                + sl.c1)
        out["y1"] = float(np.max(np.abs(xi_y1 - rhs1)))
    return out


# ---------------------------------------------------------- serialization

_FIELDSET_FORMAT = "betatransport.fieldset/1"


def fieldset_to_dict(fields: TransportFieldSet) -> dict:
    """Versioned bundle with the inputs and per-slice coefficient arrays.

    The bundle holds everything needed to rebuild the field set
    deterministically (potentials, rescaling, time grid, resolution knobs)
    plus the solved coefficients for integrity checking on load.
    """
    return {
        "format": _FIELDSET_FORMAT,
        "beta": fields.V.beta,
        "v_coeffs": [float(c) for c in fields.V.coeffs],
        "w_tilde_coeffs": [float(c) for c in fields.W_tilde.coeffs],
        "rescaling": {"scale": fields.rescaling.scale,
                      "shift": fields.rescaling.shift},
        "times": [float(t) for t in fields.times],
        "degree": len(fields.source_measure.x) - 1,
        "n_y": len(fields.slices[0].z.y_nodes),
        "support": [fields.source_measure.a, fields.source_measure.b],
        "slices": [
            {
                "t": sl.t,
                "measure": sl.mu.to_dict(),
                "y0": [float(c) for c in sl.y0.interior],
                "c0": sl.c0,
                "y1": [float(c) for c in sl.y1.interior],
                "c1": sl.c1,
            }
            for sl in fields.slices
        ],
    }


def fieldset_from_dict(d: dict) -> TransportFieldSet:
    """Rebuild a field set from its bundle and verify the stored arrays."""
    from .errors import ConfigurationError

    if d.get("format") != _FIELDSET_FORMAT:
        raise ConfigurationError(
            f"unrecognized field-set bundle format {d.get('format')!r}")
    beta = float(d["beta"])
    V = Potential(tuple(d["v_coeffs"]), beta)
    Wt = Potential(tuple(d["w_tilde_coeffs"]), beta)
    L = AffineMap(float(d["rescaling"]["scale"]),
                  float(d["rescaling"]["shift"]))
    degree = int(d["degree"])
    muV = solve_equilibrium(V, degree=degree)
    mu_target = solve_equilibrium(interpolate(V, Wt, 1.0), degree=degree)
    a, b = map(float, d["support"])
    if abs(muV.a - a) > 1e-8 or abs(muV.b - b) > 1e-8:
        raise ConfigurationError(
            "bundle support does not match the re-solved source measure")
    fields = _assemble_field_set(V, Wt, L, muV, mu_target,
                                 np.asarray(d["times"], dtype=float),
                                 int(d["n_y"]))
    for sl, rec in zip(fields.slices, d["slices"]):
        if not np.allclose(sl.y0.interior, rec["y0"], atol=1e-8):
            raise ConfigurationError(
                f"bundle slice t={rec['t']} does not reproduce; "
                "it was written by an incompatible build")
    return fields


# -------------------------------------------------------- field evaluation

def evaluate_field(fields: TransportFieldSet, t: float, lam: np.ndarray,
                   N: int | None = None,
                   include_correction: bool = True) -> np.ndarray:
    """The velocity Y at configuration lam (last axis holds eigenvalues)."""
    lam = np.asarray(lam, dtype=float)
    if N is None:
        N = lam.shape[-1]
    y0v = fields.y0_at(t, lam)
    if not include_correction:
        return y0v
    y1v = fields.y1_at(t, lam)
    zsum = fields.z_sum_at(t, lam, lam)
    zbar = fields.zbar_at(t, lam)
    return y0v + (y1v + zsum) / N - zbar


def field_divergence(fields: TransportFieldSet, t: float, lam: np.ndarray,
                     N: int | None = None) -> np.ndarray:
    """d Y_i / d lam_i, including the diagonal second-slot term."""
    lam = np.asarray(lam, dtype=float)
    if N is None:
        N = lam.shape[-1]
    d = fields.y0_at(t, lam, 1) + fields.y1_at(t, lam, 1) / N
    d = d + fields.z_sum_at(t, lam, lam, dx=1) / N
    d = d + fields.z_diag_dy_at(t, lam) / N
    return d - fields.zbar_at(t, lam, 1)


def _pair_sum(lam: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """sum_{i<j} (Y_i - Y_j)/(lam_i - lam_j) per configuration row."""
    dl = lam[..., :, None] - lam[..., None, :]
    n = lam.shape[-1]
    idx = np.arange(n)
    off = ~np.eye(n, dtype=bool)
    if np.min(np.abs(dl[..., off])) < _PAIR_FLOOR:
        raise DegenerateConfigurationError(
            "coincident eigenvalues in pair interaction sum")
    dy = Y[..., :, None] - Y[..., None, :]
    dl = dl.copy()
    dl[..., idx, idx] = 1.0
    dy[..., idx, idx] = 0.0
    return 0.5 * (dy / dl).sum(axis=(-2, -1))


def residual(fields: TransportFieldSet, t: float, lam: np.ndarray,
             N: int | None = None) -> np.ndarray:
    """Raw master-equation residual of configurations lam at time t.

    r = -beta sum_{i<j} (Y_i - Y_j)/(lam_i - lam_j) + N sum_i Wt(lam_i)
        + N sum_i V_t'(lam_i) Y_i - sum_i (dY/dlam)_i.

    Centering across samples removes the deterministic part; the centered
    mean absolute value decays like 1/N when the fields solve the hierarchy
    to first order.
    """
    lam = np.asarray(lam, dtype=float)
    if N is None:
        N = lam.shape[-1]
    beta = fields.beta
    Vt = fields.potential_at(t)
    Y = evaluate_field(fields, t, lam, N)
    div = field_divergence(fields, t, lam, N)
    pair = _pair_sum(lam, Y)
    wt_term = N * fields.W_tilde(lam).sum(axis=-1)
    vy_term = N * (Vt(lam, 1) * Y).sum(axis=-1)
    return -beta * pair + wt_term + vy_term - div.sum(axis=-1)


@dataclass
class ResidualSample:
    """Centered residual statistics for one (N, t, sample count) setting."""

    N: int
    t: float
    n_samples: int
    raw: np.ndarray

    @property
    def centered_mean_abs(self) -> float:
        r = self.raw
        return float(np.mean(np.abs(r - np.mean(r))))


def field_equation_residuals(fields: TransportFieldSet, t: float,
                             samples: np.ndarray,
                             chunk: int = 32) -> ResidualSample:
    """Residuals over a batch of sampled configurations (rows)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise InvalidInputError("samples must be a 2-d array (batch, N)")
    parts = [residual(fields, t, samples[i:i + chunk])
             for i in range(0, len(samples), chunk)]
    raw = np.concatenate(parts)
    return ResidualSample(samples.shape[1], float(t), len(samples), raw)


def residual_slope(results: list[ResidualSample]) -> float:
    """Least-squares slope of log centered residual against log N."""
    if len(results) < 2:
        raise InvalidInputError("need at least two sizes for a slope")
    x = np.log([r.N for r in results])
    y = np.log([r.centered_mean_abs for r in results])
    return float(np.polyfit(x, y, 1)[0])
