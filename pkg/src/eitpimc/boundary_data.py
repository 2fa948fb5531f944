"""Boundary data for the mixed problem.

The three data functions are stored as :class:`Field` objects: polynomials in
Cartesian coordinates (enough for every oracle) plus the two ``cos(4 theta)``
electrode patterns.  Fields evaluate on numpy arrays and also pack into flat
arrays for the compiled walk kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .geometry import DomainSpec

__all__ = ["Field", "BoundaryData", "Polynomial", "NotHarmonicError"]

# field kinds understood by the kernels
POLY = 0
COS4_POLAR = 1
COS4_YZ = 2


class NotHarmonicError(ValueError):
    pass


class Polynomial:
    """Sparse polynomial in (x, y, z) with exact monomial arithmetic."""

    def __init__(self, terms: Mapping[tuple[int, int, int], float] | None = None):
        self.terms: dict[tuple[int, int, int], float] = {}
        for k, v in (terms or {}).items():
            if v != 0:
                self.terms[tuple(int(a) for a in k)] = float(v)

    @classmethod
    def constant(cls, c: float) -> "Polynomial":
        return cls({(0, 0, 0): c})

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    def laplacian(self) -> "Polynomial":
        out: dict[tuple[int, int, int], float] = {}
        for (a, b, c), v in self.terms.items():
            for axis, p in enumerate((a, b, c)):
                if p >= 2:
                    k = [a, b, c]
                    k[axis] -= 2
                    key = tuple(k)
                    out[key] = out.get(key, 0.0) + v * p * (p - 1)
        return Polynomial(out)

    def is_harmonic(self) -> bool:
        return all(v == 0 for v in self.laplacian().terms.values())

    def gradient(self) -> tuple["Polynomial", "Polynomial", "Polynomial"]:
        parts = []
        for axis in range(3):
            out = {}
            for k, v in self.terms.items():
                if k[axis] >= 1:
                    kk = list(k)
                    kk[axis] -= 1
                    out[tuple(kk)] = out.get(tuple(kk), 0.0) + v * k[axis]
            parts.append(Polynomial(out))
        return tuple(parts)

    def __call__(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        flat = np.atleast_2d(p)
        out = np.zeros(len(flat))
        for (a, b, c), v in self.terms.items():
            out += v * flat[:, 0] ** a * flat[:, 1] ** b * flat[:, 2] ** c
        return out if p.ndim > 1 else out[0]

    def scaled(self, s: float) -> "Polynomial":
        return Polynomial({k: s * v for k, v in self.terms.items()})

    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return Polynomial(out)

    def arrays(self):
        if not self.terms:
            return np.zeros((1, 3), np.int64), np.zeros(1)
        keys = sorted(self.terms)
        return np.array(keys, dtype=np.int64), np.array([self.terms[k] for k in keys])

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (a, b, c), v in sorted(self.terms.items()):
            mono = "*".join(f"{s}^{p}" if p > 1 else s for s, p in zip("xyz", (a, b, c)) if p)
            parts.append(f"{v:g}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


@dataclass(frozen=True)
class Field:
    """A scalar function on the boundary.

    ``kind`` selects the evaluation rule: ``"poly"`` evaluates the polynomial
    directly, ``"cos4theta"`` is cos(4 theta) with theta the polar angle from
    +z, and ``"cos4theta-yz"`` is cos(4 theta) with theta = atan2(y, z).  The
    two cos patterns are evaluated on the radial projection of the point.
    """

    kind: str = "poly"
    poly: Polynomial = field(default_factory=Polynomial)
    label: str = ""

    @classmethod
    def zero(cls) -> "Field":
        return cls("poly", Polynomial(), "0")

    @classmethod
    def constant(cls, v: float) -> "Field":
        return cls("poly", Polynomial.constant(v), f"constant:{v:g}")

    @classmethod
    def polynomial(cls, p: Polynomial, label: str = "") -> "Field":
        return cls("poly", p, label or repr(p))

    @classmethod
    def cos4theta(cls) -> "Field":
        return cls("cos4theta", Polynomial(), "cos4theta")

    @classmethod
    def cos4theta_yz(cls) -> "Field":
        return cls("cos4theta-yz", Polynomial(), "cos4theta-yz")

    @property
    def code(self) -> int:
        return {"poly": POLY, "cos4theta": COS4_POLAR, "cos4theta-yz": COS4_YZ}[self.kind]

    @property
    def is_zero(self) -> bool:
        return self.kind == "poly" and not self.poly.terms

    def __call__(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        flat = np.atleast_2d(p)
        if self.kind == "poly":
            out = np.atleast_1d(self.poly(flat))
        else:
            r = np.linalg.norm(flat, axis=1)
            if self.kind == "cos4theta":
                theta = np.arccos(np.clip(flat[:, 2] / r, -1.0, 1.0))
            else:
                theta = np.arctan2(flat[:, 1], flat[:, 2])
            out = np.cos(4.0 * theta)
        return out if p.ndim > 1 else float(out[0])

    def kernel_arrays(self):
        exps, coefs = self.poly.arrays()
        return self.code, exps, coefs


@dataclass(frozen=True)
class BoundaryData:
    """Data of the mixed problem on a :class:`DomainSpec`.

    ``phi1`` is the Robin data ``u + z_l du/dn`` on the electrodes, scaled per
    electrode by ``electrode_scale``; ``phi2`` is the outward flux off the
    electrodes; ``phi3`` is the potential on the anomaly.  When
    ``outer_dirichlet`` is set the whole outer sphere becomes a Dirichlet
    boundary with that data (used by validation runs only).
    """

    phi1: Field = field(default_factory=Field.cos4theta)
    phi2: Field = field(default_factory=Field.zero)
    phi3: Field = field(default_factory=Field.zero)
    electrode_scale: tuple[float, ...] | None = None
    outer_dirichlet: Field | None = None

    def scale_for(self, domain: DomainSpec) -> np.ndarray:
        L = len(domain.electrodes)
        if self.electrode_scale is None:
            return np.ones(max(L, 1))
        s = np.asarray(self.electrode_scale, dtype=float)
        if len(s) != L:
            raise ValueError("electrode_scale needs one entry per electrode")
        return s

    def robin_coefficients(self, domain: DomainSpec) -> np.ndarray:
        k = np.array([e.robin_coefficient for e in domain.electrodes], dtype=float)
        if np.any(~np.isfinite(k)) or np.any(k < 0):
            raise ValueError("Robin coefficients must be finite and non-negative")
        return k

    def phi1_at(self, domain: DomainSpec, electrode_id: int, points) -> np.ndarray:
        ids = [e.id for e in domain.electrodes]
        s = self.scale_for(domain)[ids.index(electrode_id)]
        return s * self.phi1(points)

    def with_phi1(self, phi1: Field, electrode_scale: Iterable[float] | None = None) -> "BoundaryData":
        return BoundaryData(
            phi1,
            self.phi2,
            self.phi3,
            None if electrode_scale is None else tuple(electrode_scale),
            self.outer_dirichlet,
        )

    def linear_combination(self, a: float, other: "BoundaryData", b: float) -> "BoundaryData":
        """``a*self + b*other`` for polynomial data (used by linearity checks)."""
        fields = []
        for f, g in ((self.phi1, other.phi1), (self.phi2, other.phi2), (self.phi3, other.phi3)):
            if f.kind != "poly" or g.kind != "poly":
                raise ValueError("linear combinations need polynomial fields")
            fields.append(Field.polynomial(f.poly.scaled(a) + g.poly.scaled(b)))
        return BoundaryData(*fields)

    @property
    def is_zero(self) -> bool:
        return (
            self.phi1.is_zero
            and self.phi2.is_zero
            and self.phi3.is_zero
            and (self.outer_dirichlet is None or self.outer_dirichlet.is_zero)
        )


def chebyshev_cos4(z):
    """cos(4 arccos z), i.e. the polar cos(4 theta) pattern on the unit sphere."""
    z = np.asarray(z, dtype=float)
    return 8.0 * z**4 - 8.0 * z**2 + 1.0

