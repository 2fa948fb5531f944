import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from eitpimc.boundary_data import NotHarmonicError, Polynomial
from eitpimc.oracle import (
    SOLID_HARMONICS,
    annulus_radial_case,
    dirichlet_polynomial_case,
    robin_sphere_case,
    solid_harmonic,
)


def _laplacian(f, x, h=1e-3):
    out = -6 * f(x)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out = out + f(x + e) + f(x - e)
    return out / h**2


CASES = [
    dirichlet_polynomial_case("x2-y2"),
    dirichlet_polynomial_case("xyz"),
    robin_sphere_case(1, 2.0),
    robin_sphere_case(2, 2.0, "xy"),
    robin_sphere_case(0, 1.0),
    annulus_radial_case(0.5, 1.0),
    annulus_radial_case(0.3, -2.0),
]


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.name)
def test_boundary_conditions_hold(case):
    assert case.boundary_residual(2000) <= 1e-12


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.name)
def test_exact_solution_is_harmonic(case):
    x = np.array([[0.7, 0.1, -0.2], [0.1, 0.6, 0.3]])
    assert_allclose(_laplacian(case.exact, x), 0.0, atol=1e-4)


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.name)
def test_total_flux_vanishes(case):
    assert abs(case.total_flux(200_000)) <= 0.05


def test_oracle_values():
    assert_allclose(annulus_radial_case(0.5, 1.0).exact(np.array([[0.75, 0, 0]])), [2 - 1 / 0.75])
    assert_allclose(robin_sphere_case(1, 2.0).exact(np.array([[0, 0, 0.9]])), [0.9])
    assert_allclose(dirichlet_polynomial_case("x2-y2").exact(np.array([[0.5, 0, 0]])), [0.25])


def test_all_listed_harmonics_are_harmonic():
    for name in SOLID_HARMONICS:
        assert solid_harmonic(name).is_harmonic(), name


def test_rejections():
    with pytest.raises(NotHarmonicError):
        dirichlet_polynomial_case(Polynomial({(2, 0, 0): 1.0}))
    with pytest.raises(KeyError):
        solid_harmonic("nope")
    with pytest.raises(ValueError):
        annulus_radial_case(1.2, 1.0)
    with pytest.raises(ValueError):
        robin_sphere_case(1, -1.0)
