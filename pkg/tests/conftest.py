"""Shared fixtures: model pairs and solved objects reused across modules.

Field sets and maps here use a slightly reduced resolution; the residual
self-checks still pass with orders of magnitude to spare and the unit
suite stays fast.  Acceptance tests build their own full-resolution
objects.
"""
import numpy as np
import pytest

from betatransport import (
    Potential,
    build_field_set,
    build_transport_map,
    solve_equilibrium,
)


@pytest.fixture(scope="session")
def gauss2():
    """Quadratic model x^2/2 at beta = 2; semicircle support [-2, 2]."""
    return Potential((0.0, 0.0, 0.5), 2.0)


@pytest.fixture(scope="session")
def quartic_w2():
    """Perturbation 0.1 x^4 at beta = 2."""
    return Potential((0.0, 0.0, 0.0, 0.0, 0.1), 2.0)


@pytest.fixture(scope="session")
def mu_gauss2(gauss2):
    return solve_equilibrium(gauss2)


@pytest.fixture(scope="session")
def mu_quartic2(gauss2, quartic_w2):
    from betatransport import interpolate

    return solve_equilibrium(interpolate(gauss2, quartic_w2, 1.0))


@pytest.fixture(scope="session")
def fields_gq2(gauss2, quartic_w2):
    return build_field_set(gauss2, quartic_w2, n_time=17, n_y=32)


@pytest.fixture(scope="session")
def tmap_gq2(fields_gq2):
    return build_transport_map(fields_gq2, n_grid=256)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
