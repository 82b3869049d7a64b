"""Characteristic flows of the transport fields and the resulting maps.

The approximate transport map factors as

    T = L^{-1} o (X0_1 + (1/N) X1_1),

where X0 flows a point along the leading field y0 from t = 0 to 1, X1
carries the order-1/N correction (which couples all eigenvalues of a
configuration through the kernel z), and L is the affine support rescaling
fixed at build time.  X0 and its space derivative are tabulated once on a
padded grid and interpolated monotonically; the correction is integrated
per configuration batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from .errors import InvalidInputError, StiffFlowError
from .transport_fields import TransportFieldSet

_LEADING_RTOL = 1e-10
_LEADING_ATOL = 1e-12
_CORRECTION_RTOL = 1e-8
_CORRECTION_ATOL = 1e-10


def _solve(rhs, y0, rtol, atol, what):
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="RK45", rtol=rtol, atol=atol)
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise StiffFlowError(f"{what} integration failed: {sol.message}")
    return sol.y[:, -1]


def flow_scalar(fields: TransportFieldSet, x0, rtol: float = _LEADING_RTOL,
                atol: float = _LEADING_ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Flow points along y0 from t = 0 to 1; returns (X0, dX0/dx).

    The derivative comes from the variational equation dX' /dt = y0'(X) X',
    integrated jointly with the positions.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    m = len(x0)

    def rhs(t, state):
        x = state[:m]
        v = fields.y0_at(t, x)
        vp = fields.y0_at(t, x, 1)
        return np.concatenate([v, vp * state[m:]])

    out = _solve(rhs, np.concatenate([x0, np.ones(m)]), rtol, atol,
                 "leading flow")
    return out[:m], out[m:]


def flow_correction(fields: TransportFieldSet, samples: np.ndarray,
                    N: int | None = None,
                    rtol: float = _CORRECTION_RTOL,
                    atol: float = _CORRECTION_ATOL,
                    batch: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Joint flow of configurations and their 1/N correction.

    Returns (X0, X1) arrays of the samples' shape; the correction couples
    eigenvalues within a configuration, so whole rows are integrated
    together (in batches to bound the ODE state size).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise InvalidInputError("samples must be 2-d (batch, N)")
    B, n_eig = samples.shape
    if N is None:
        N = n_eig
    X0 = np.empty_like(samples)
    X1 = np.empty_like(samples)
    for lo in range(0, B, batch):
        rows = samples[lo:lo + batch]
        nb = rows.shape[0]

        def rhs(t, state, nb=nb):
            x = state[: nb * n_eig].reshape(nb, n_eig)
            x1 = state[nb * n_eig:].reshape(nb, n_eig)
            v = fields.y0_at(t, x)
            vp = fields.y0_at(t, x, 1)
            drift = (fields.y1_at(t, x)
                     + fields.z_sum_at(t, x, x)
                     - N * fields.zbar_at(t, x))
            return np.concatenate([v.ravel(), (vp * x1 + drift).ravel()])

        state0 = np.concatenate([rows.ravel(), np.zeros(nb * n_eig)])
        out = _solve(rhs, state0, rtol, atol, "correction flow")
        X0[lo:lo + batch] = out[: nb * n_eig].reshape(nb, n_eig)
        X1[lo:lo + batch] = out[nb * n_eig:].reshape(nb, n_eig)
    return X0, X1


@dataclass(eq=False)
class TransportMap:
    """Tabulated approximate transport map between the two models."""

    fields: TransportFieldSet
    grid: np.ndarray
    x0_values: np.ndarray
    x0_derivs: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.x0_values) <= 0):
            raise StiffFlowError("leading flow lost monotonicity")
        if np.any(self.x0_derivs <= 0):
            raise StiffFlowError("leading flow derivative lost positivity")
        self._x0 = PchipInterpolator(self.grid, self.x0_values,
                                     extrapolate=True)
        self._x0p = PchipInterpolator(self.grid, self.x0_derivs,
                                      extrapolate=True)

    @property
    def rescaling(self):
        return self.fields.rescaling

    def leading(self, x) -> np.ndarray:
        """X0 at time 1, in matched (source-support) coordinates."""
        return self._x0(np.asarray(x, dtype=float))

    def __call__(self, x) -> np.ndarray:
        """The scalar map T0 = L^{-1} o X0_1 into target-model coordinates."""
        return self.rescaling.inverse()(self.leading(x))

    def derivative(self, x) -> np.ndarray:
        """dT0/dx, positive wherever the flow stayed monotone."""
        return self._x0p(np.asarray(x, dtype=float)) / self.rescaling.scale


def build_transport_map(fields: TransportFieldSet, n_grid: int = 512,
                        pad: float = 1.0,
                        rtol: float = _LEADING_RTOL,
                        atol: float = _LEADING_ATOL) -> TransportMap:
    """Tabulate the leading flow on a padded support grid."""
    a, b = fields.source_measure.a, fields.source_measure.b
    grid = np.linspace(a - pad, b + pad, n_grid)
    vals, derivs = flow_scalar(fields, grid, rtol=rtol, atol=atol)
    return TransportMap(fields, grid, vals, derivs)


def map_derivative_at(tmap: TransportMap, x) -> np.ndarray:
    return tmap.derivative(x)


@dataclass
class MappedSample:
    """Sampled configurations pushed through the transport map."""

    source: np.ndarray
    values: np.ndarray
    N: int
    include_correction: bool


_MAP_FORMAT = "betatransport.map/1"


def map_to_dict(tmap: TransportMap) -> dict:
    """Versioned bundle of the tabulated map and its field set."""
    from .transport_fields import fieldset_to_dict

    return {
        "format": _MAP_FORMAT,
        "fieldset": fieldset_to_dict(tmap.fields),
        "grid": [float(v) for v in tmap.grid],
        "values": [float(v) for v in tmap.x0_values],
        "derivs": [float(v) for v in tmap.x0_derivs],
    }


def map_from_dict(d: dict) -> TransportMap:
    """Rebuild a transport map from its bundle."""
    from .errors import ConfigurationError
    from .transport_fields import fieldset_from_dict

    if d.get("format") != _MAP_FORMAT:
        raise ConfigurationError(
            f"unrecognized map bundle format {d.get('format')!r}")
    fields = fieldset_from_dict(d["fieldset"])
    return TransportMap(fields,
                        np.asarray(d["grid"], dtype=float),
                        np.asarray(d["values"], dtype=float),
                        np.asarray(d["derivs"], dtype=float))


def apply_map(tmap: TransportMap, samples: np.ndarray,
              N: int | None = None, include_correction: bool = True,
              batch: int = 64, rtol: float = 1e-8) -> MappedSample:
    """Push configurations through T.

    With the correction, each row is integrated as a coupled system and
    T = L^{-1}(X0 + X1/N); without it, rows are mapped through the
    tabulated scalar flow pointwise.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if N is None:
        N = samples.shape[1]
    if include_correction:
        X0, X1 = flow_correction(tmap.fields, samples, N=N, batch=batch,
                                 rtol=rtol)
        matched = X0 + X1 / N
    else:
        matched = tmap.leading(samples)
    values = tmap.rescaling.inverse()(matched)
    return MappedSample(samples, values, N, include_correction)
