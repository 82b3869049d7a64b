"""Polynomial confining potentials and affine support matching.

A model is specified by a polynomial potential V and the inverse temperature
beta; the perturbed model uses V + W and the interpolating family
V_t = V + t W.  When source and target supports differ, an affine map L is
chosen so that the modified perturbation Wtilde = V(L^{-1}) + W(L^{-1}) - V
produces a target measure supported exactly on the source support; the full
transport then composes with L^{-1} coordinatewise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    ConfigurationError,
    InvalidSupportError,
    UnsupportedOrderError,
)

_MAX_DERIVATIVE_ORDER = 4


@dataclass(frozen=True)
class Potential:
    """Real polynomial potential with its inverse temperature.

    coeffs are ascending-degree polynomial coefficients.  Arbitrary
    polynomials are representable (perturbations W may be zero or low
    degree); confinement is checked where a potential is used as a model,
    via `is_confining`.
    """

    coeffs: tuple[float, ...]
    beta: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ConfigurationError("potential needs a 1-d coefficient list")
        if not np.all(np.isfinite(c)):
            raise ConfigurationError("potential coefficients must be finite")
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "coeffs", tuple(float(x) for x in c))

    @property
    def degree(self) -> int:
        c = np.trim_zeros(np.asarray(self.coeffs), "b")
        return max(len(c) - 1, 0)

    @property
    def is_confining(self) -> bool:
        """Even degree >= 2 with positive leading coefficient."""
        d = self.degree
        return d >= 2 and d % 2 == 0 and self.coeffs[d] > 0

    def require_confining(self, what: str = "potential") -> None:
        if not self.is_confining:
            raise ConfigurationError(
                f"{what} must have even degree >= 2 and positive leading "
                f"coefficient; got coefficients {list(self.coeffs)}"
            )

    def derivative_coeffs(self, order: int = 1) -> np.ndarray:
        c = np.asarray(self.coeffs)
        for _ in range(order):
            c = npoly.polyder(c)
        return c if c.size else np.zeros(1)

    def __call__(self, x, order: int = 0):
        return evaluate(self, x, order)


def evaluate(V: Potential, x, order: int = 0):
    """d^order V / dx^order at x, exact polynomial differentiation."""
    if not 0 <= order <= _MAX_DERIVATIVE_ORDER:
        raise UnsupportedOrderError(
            f"derivative order must be in 0..{_MAX_DERIVATIVE_ORDER}, got {order}"
        )
    return npoly.polyval(x, V.derivative_coeffs(order) if order else V.coeffs)


def interpolate(V: Potential, W: Potential, t: float) -> Potential:
    """The interpolating potential V + t W."""
    if V.beta != W.beta:
        raise ConfigurationError(
            f"beta mismatch between potentials: {V.beta} vs {W.beta}"
        )
    c = npoly.polyadd(np.asarray(V.coeffs), t * np.asarray(W.coeffs))
    return Potential(tuple(c), V.beta)


@dataclass(frozen=True)
class AffineMap:
    """x -> scale * x + shift, with scale != 0."""

    scale: float
    shift: float = 0.0

    def __post_init__(self):
        if self.scale == 0 or not np.isfinite(self.scale) or not np.isfinite(self.shift):
            raise ConfigurationError(f"degenerate affine map: {self}")

    def __call__(self, x):
        return self.scale * np.asarray(x) + self.shift

    def inverse(self) -> "AffineMap":
        return AffineMap(1.0 / self.scale, -self.shift / self.scale)

    @staticmethod
    def identity() -> "AffineMap":
        return AffineMap(1.0, 0.0)


def compose_affine(coeffs, amap: AffineMap) -> np.ndarray:
    """Coefficients of p(scale*x + shift) for ascending-degree coeffs p."""
    p = npoly.Polynomial(np.atleast_1d(np.asarray(coeffs, dtype=float)))
    q = p(npoly.Polynomial([amap.shift, amap.scale]))
    return q.coef


def match_supports(
    V: Potential, W: Potential, suppV, suppVW
) -> tuple[AffineMap, Potential]:
    """Affine L mapping the target support onto the source support.

    Given solved supports [a0, b0] of mu_V and [a1, b1] of mu_{V+W}, returns
    (L, Wtilde) with L([a1, b1]) = [a0, b0] and
    Wtilde = V(L^{-1}) + W(L^{-1}) - V, so that mu_{V + Wtilde} is supported
    on [a0, b0] and the pushforward of the perturbed model by L is the
    Wtilde-model.
    """
    a0, b0 = map(float, suppV)
    a1, b1 = map(float, suppVW)
    if not (b0 > a0) or not (b1 > a1):
        raise InvalidSupportError(
            f"degenerate support interval: source [{a0},{b0}], target [{a1},{b1}]"
        )
    scale = (b0 - a0) / (b1 - a1)
    shift = a0 - scale * a1
    L = AffineMap(scale, shift)
    Linv = L.inverse()
    v_pull = compose_affine(V.coeffs, Linv)
    w_pull = compose_affine(W.coeffs, Linv)
    wt = npoly.polysub(npoly.polyadd(v_pull, w_pull), np.asarray(V.coeffs))
    wt = np.trim_zeros(np.atleast_1d(wt), "b")
    if wt.size == 0:
        wt = np.zeros(1)
    return L, Potential(tuple(wt), V.beta)
