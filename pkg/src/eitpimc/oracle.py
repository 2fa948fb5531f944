"""Closed-form validation problems.

Each :class:`OracleCase` bundles a domain, boundary data and the exact
solution, so solvers can be checked without a reference computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .boundary_data import BoundaryData, Field, NotHarmonicError, Polynomial
from .geometry import DomainSpec, whole_sphere_robin_domain

__all__ = [
    "OracleCase",
    "SOLID_HARMONICS",
    "annulus_radial_case",
    "dirichlet_polynomial_case",
    "robin_sphere_case",
    "solid_harmonic",
]

# homogeneous harmonic polynomials up to degree 4, keyed by a short name
SOLID_HARMONICS: dict[str, Polynomial] = {
    "1": Polynomial({(0, 0, 0): 1.0}),
    "x": Polynomial({(1, 0, 0): 1.0}),
    "y": Polynomial({(0, 1, 0): 1.0}),
    "z": Polynomial({(0, 0, 1): 1.0}),
    "x2-y2": Polynomial({(2, 0, 0): 1.0, (0, 2, 0): -1.0}),
    "xy": Polynomial({(1, 1, 0): 1.0}),
    "yz": Polynomial({(0, 1, 1): 1.0}),
    "2z2-x2-y2": Polynomial({(0, 0, 2): 2.0, (2, 0, 0): -1.0, (0, 2, 0): -1.0}),
    "xyz": Polynomial({(1, 1, 1): 1.0}),
    "x3-3xy2": Polynomial({(3, 0, 0): 1.0, (1, 2, 0): -3.0}),
    "z3-1.5z(x2+y2)": Polynomial({(0, 0, 3): 1.0, (2, 0, 1): -1.5, (0, 2, 1): -1.5}),
    "x4-6x2y2+y4": Polynomial({(4, 0, 0): 1.0, (2, 2, 0): -6.0, (0, 4, 0): 1.0}),
    "xy(x2-y2)": Polynomial({(3, 1, 0): 1.0, (1, 3, 0): -1.0}),
}

# the default degree-n harmonic for the Robin case
_ROBIN_DEFAULT = {0: "1", 1: "z", 2: "x2-y2", 3: "x3-3xy2", 4: "x4-6x2y2+y4"}


def solid_harmonic(name: str) -> Polynomial:
    try:
        return SOLID_HARMONICS[name]
    except KeyError:
        raise KeyError(f"unknown harmonic {name!r}; choose from {sorted(SOLID_HARMONICS)}") from None


def _homogeneous_degree(p: Polynomial) -> int | None:
    degrees = {sum(k) for k in p.terms}
    if len(degrees) == 1:
        return degrees.pop()
    return None


@dataclass(frozen=True)
class OracleCase:
    """A problem with a known solution.

    ``flux`` returns the derivative along the outward normal of the domain,
    which on the anomaly sphere points towards the anomaly centre.
    """

    name: str
    domain: DomainSpec
    data: BoundaryData
    exact: Callable[[np.ndarray], np.ndarray]
    flux: Callable[[np.ndarray], np.ndarray]

    def boundary_residual(self, n_points: int = 1000, seed: int = 0) -> float:
        """Largest violation of the boundary conditions at random points."""
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(n_points, 3))
        y = v / np.linalg.norm(v, axis=1)[:, None]
        u = self.exact(y)
        du = self.flux(y)
        d = self.data
        worst = 0.0
        if d.outer_dirichlet is not None:
            worst = max(worst, np.max(np.abs(u - d.outer_dirichlet(y))))
        else:
            idx = self.domain.electrode_index(y)
            kappa = d.robin_coefficients(self.domain) if self.domain.electrodes else np.zeros(0)
            scale = d.scale_for(self.domain)
            on = idx >= 0
            if np.any(on):
                z = 1.0 / kappa[idx[on]]
                lhs = z * du[on] + u[on]
                rhs = scale[idx[on]] * d.phi1(y[on])
                worst = max(worst, np.max(np.abs(lhs - rhs)))
            if np.any(~on):
                worst = max(worst, np.max(np.abs(du[~on] - d.phi2(y[~on]))))
        if self.domain.has_anomaly:
            ya = np.asarray(self.domain.anomaly_center) + self.domain.anomaly_radius * y
            worst = max(worst, np.max(np.abs(self.exact(ya) - d.phi3(ya))))
        return float(worst)

    def total_flux(self, n_points: int = 200_000, seed: int = 0) -> float:
        """Monte Carlo integral of the flux over the whole boundary."""
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(n_points, 3))
        y = v / np.linalg.norm(v, axis=1)[:, None]
        total = 4.0 * np.pi * np.mean(self.flux(y))
        if self.domain.has_anomaly:
            r0 = self.domain.anomaly_radius
            ya = np.asarray(self.domain.anomaly_center) + r0 * y
            total += 4.0 * np.pi * r0**2 * np.mean(self.flux(ya))
        return float(total)


def _poly_normal_derivative(p: Polynomial):
    gx, gy, gz = p.gradient()

    def flux(y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        n = y / np.linalg.norm(y, axis=1)[:, None]
        return n[:, 0] * gx(y) + n[:, 1] * gy(y) + n[:, 2] * gz(y)

    return flux


def dirichlet_polynomial_case(p: Polynomial | str) -> OracleCase:
    """Unit ball with Dirichlet data ``p`` on the whole sphere; ``u = p``."""
    name = p if isinstance(p, str) else repr(p)
    if isinstance(p, str):
        p = solid_harmonic(p)
    if not p.is_harmonic():
        raise NotHarmonicError(f"{p!r} is not harmonic (its Laplacian is {p.laplacian()!r})")
    if p.degree > 4:
        raise ValueError("supported harmonics have degree <= 4")
    data = BoundaryData(Field.zero(), Field.zero(), Field.zero(), outer_dirichlet=Field.polynomial(p))
    return OracleCase(f"dirichlet:{name}", DomainSpec(()), data, p, _poly_normal_derivative(p))


def robin_sphere_case(degree: int, kappa: float, harmonic: Polynomial | str | None = None) -> OracleCase:
    """Whole-sphere Robin problem ``z du/dn + u = ψ`` with ``z = 1/kappa``.

    For a homogeneous harmonic ``Y`` of degree ``n`` the normal derivative on
    the unit sphere is ``n Y``, so ``ψ = (n z + 1) Y`` gives ``u = Y``.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if harmonic is None:
        if degree not in _ROBIN_DEFAULT:
            raise ValueError("supported harmonics have degree <= 4")
        harmonic = _ROBIN_DEFAULT[degree]
    name = harmonic if isinstance(harmonic, str) else repr(harmonic)
    Y = solid_harmonic(harmonic) if isinstance(harmonic, str) else harmonic
    if not Y.is_harmonic():
        raise NotHarmonicError(f"{Y!r} is not harmonic")
    if _homogeneous_degree(Y) != degree:
        raise ValueError(f"{Y!r} is not homogeneous of degree {degree}")
    z = 1.0 / kappa
    psi = Y.scaled(degree * z + 1.0)
    data = BoundaryData(Field.polynomial(psi), Field.zero(), Field.zero())
    return OracleCase(
        f"robin:{name}:kappa={kappa:g}",
        whole_sphere_robin_domain(z),
        data,
        Y,
        _poly_normal_derivative(Y),
    )


def annulus_radial_case(r0: float, g: float) -> OracleCase:
    """Flux ``g`` on the outer sphere, ``u = 0`` on the sphere of radius ``r0``.

    The solution is ``u(r) = g/r0 - g/r``.
    """
    if not 0 < r0 < 1:
        raise ValueError("need 0 < r0 < 1")
    a, b = g / r0, -g

    def exact(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(np.atleast_2d(x), axis=1)
        u = a + b / r
        return u if x.ndim > 1 else float(u[0])

    def flux(y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        r = np.linalg.norm(y, axis=1)
        du_dr = -b / r**2
        # outward normal of the domain is +r on the outer sphere, -r on the inner one
        sign = np.where(r > 0.5 * (1.0 + r0), 1.0, -1.0)
        return sign * du_dr

    data = BoundaryData(Field.zero(), Field.constant(g), Field.zero())
    domain = DomainSpec((), (0.0, 0.0, 0.0), r0)
    return OracleCase(f"annulus:r0={r0:g}:g={g:g}", domain, data, exact, flux)
