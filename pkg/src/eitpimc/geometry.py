"""Domain geometry: the unit ball, an optional spherical anomaly and electrode caps.

Points are plain ``numpy`` 3-vectors.  Boundary regions are encoded by
:class:`BoundaryRegion`, which also carries the electrode id for Robin points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "BOUNDARY_TOL",
    "BoundaryRegion",
    "DomainSpec",
    "Electrode",
    "GeometryError",
    "default_electrodes",
    "default_domain",
    "geodesic_distance",
    "cap_area",
]

BOUNDARY_TOL = 1e-9

# region codes shared with the compiled kernels
ROBIN = 0
NEUMANN = 1
DIRICHLET = 2


class GeometryError(ValueError):
    """Raised for points or configurations outside a domain's contract."""


@dataclass(frozen=True)
class BoundaryRegion:
    """Tag of a boundary point.

    ``kind`` is one of ``"robin"``, ``"neumann"`` or ``"dirichlet"``;
    ``electrode`` is the 1-based electrode id for Robin points and ``None``
    otherwise.
    """

    kind: str
    electrode: int | None = None

    @classmethod
    def robin(cls, electrode: int) -> "BoundaryRegion":
        return cls("robin", int(electrode))

    @property
    def code(self) -> int:
        return {"robin": ROBIN, "neumann": NEUMANN, "dirichlet": DIRICHLET}[self.kind]

    def __str__(self) -> str:
        if self.kind == "robin":
            return f"RobinElectrode({self.electrode})"
        return {"neumann": "NeumannOff", "dirichlet": "DirichletAnomaly"}[self.kind]


NEUMANN_OFF = BoundaryRegion("neumann")
DIRICHLET_ANOMALY = BoundaryRegion("dirichlet")


def geodesic_distance(a, b) -> np.ndarray:
    """Great-circle distance between unit vectors (broadcasts over leading axes)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # atan2 form stays accurate for nearly coincident points
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


def cap_area(cap_radius: float, outer_radius: float = 1.0) -> float:
    """Area of a spherical cap of geodesic radius ``cap_radius``."""
    return 2.0 * math.pi * outer_radius**2 * (1.0 - math.cos(cap_radius))


@dataclass(frozen=True)
class Electrode:
    id: int
    center: tuple[float, float, float]
    cap_radius: float = 0.2
    contact_impedance: float = 0.5

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.shape != (3,):
            raise GeometryError(f"electrode {self.id}: center must be a 3-vector")
        if abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise GeometryError(f"electrode {self.id}: center must be a unit vector")
        if not self.cap_radius > 0:
            raise GeometryError(f"electrode {self.id}: cap_radius must be positive")
        if not self.contact_impedance > 0:
            raise GeometryError(f"electrode {self.id}: contact_impedance must be positive")
        object.__setattr__(self, "center", tuple(float(v) for v in c))

    @property
    def robin_coefficient(self) -> float:
        return 1.0 / self.contact_impedance

    @property
    def area(self) -> float:
        return cap_area(self.cap_radius)


def default_electrodes(
    count: int = 8, cap_radius: float = 0.2, contact_impedance: float = 0.5
) -> list[Electrode]:
    """Electrodes spaced evenly on the y-z great circle, electrode 1 at +z.

    Electrode ``l`` sits at angle ``(l-1)*360/count`` degrees from +z towards +y.
    """
    out = []
    for k in range(count):
        a = 2.0 * math.pi * k / count
        center = (0.0, math.sin(a), math.cos(a))
        # snap tiny components so the layout is exactly mirror symmetric
        center = tuple(0.0 if abs(v) < 1e-15 else v for v in center)
        out.append(Electrode(k + 1, center, cap_radius, contact_impedance))
    return out


@dataclass(frozen=True)
class DomainSpec:
    """Unit ball minus an optional spherical anomaly, with electrode caps.

    ``anomaly_radius == 0`` means there is no anomaly.
    """

    electrodes: tuple[Electrode, ...] = field(default_factory=lambda: tuple(default_electrodes()))
    anomaly_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    anomaly_radius: float = 0.0
    outer_radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        object.__setattr__(
            self, "anomaly_center", tuple(float(v) for v in np.asarray(self.anomaly_center, float))
        )
        if self.outer_radius != 1.0:
            raise GeometryError("outer_radius is fixed at 1.0")
        if self.anomaly_radius < 0:
            raise GeometryError("anomaly_radius must be >= 0")
        if self.has_anomaly:
            reach = np.linalg.norm(self.anomaly_center) + self.anomaly_radius
            if not reach < self.outer_radius:
                raise GeometryError("anomaly must lie strictly inside the outer sphere")
        ids = [e.id for e in self.electrodes]
        if len(set(ids)) != len(ids):
            raise GeometryError("electrode ids must be unique")
        for i, a in enumerate(self.electrodes):
            for b in self.electrodes[i + 1 :]:
                if geodesic_distance(a.center, b.center) <= a.cap_radius + b.cap_radius:
                    raise GeometryError(f"electrode caps {a.id} and {b.id} overlap")

    @property
    def has_anomaly(self) -> bool:
        return self.anomaly_radius > 0

    def electrode(self, electrode_id: int) -> Electrode:
        for e in self.electrodes:
            if e.id == electrode_id:
                return e
        raise KeyError(f"no electrode with id {electrode_id}")

    # -- distances ---------------------------------------------------------

    def distance_to_boundary(self, x) -> float:
        """Distance from an interior point to the nearest boundary sphere."""
        x = np.asarray(x, dtype=float)
        d_out = self.outer_radius - float(np.linalg.norm(x))
        d = d_out
        if self.has_anomaly:
            d_in = float(np.linalg.norm(x - np.asarray(self.anomaly_center))) - self.anomaly_radius
            d = min(d, d_in)
        if not d > 0:
            raise GeometryError(f"point {x.tolist()} is not inside the domain")
        return d

    def contains(self, x) -> bool:
        try:
            self.distance_to_boundary(x)
        except GeometryError:
            return False
        return True

    # -- boundary classification ---------------------------------------------

    def classify_boundary_point(self, y, tol: float = BOUNDARY_TOL) -> BoundaryRegion:
        y = np.asarray(y, dtype=float)
        if self.has_anomaly:
            r_in = np.linalg.norm(y - np.asarray(self.anomaly_center))
            if abs(r_in - self.anomaly_radius) <= tol * max(self.anomaly_radius, 1.0):
                return DIRICHLET_ANOMALY
        r = np.linalg.norm(y)
        if abs(r - self.outer_radius) > tol * self.outer_radius:
            raise GeometryError(f"point {y.tolist()} lies on no boundary sphere")
        yhat = y / r
        for e in self.electrodes:
            if geodesic_distance(yhat, e.center) <= e.cap_radius:
                return BoundaryRegion.robin(e.id)
        return NEUMANN_OFF

    def electrode_index(self, points) -> np.ndarray:
        """Vectorised classification of outer-sphere points.

        Returns the 0-based position in :attr:`electrodes` for Robin points and
        ``-1`` elsewhere.  Points are assumed to be on the outer sphere.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        p = p / np.linalg.norm(p, axis=1)[:, None]
        out = np.full(len(p), -1, dtype=np.int64)
        for k, e in enumerate(self.electrodes):
            inside = geodesic_distance(p, np.asarray(e.center)[None, :]) <= e.cap_radius
            out[inside & (out < 0)] = k
        return out

    def project_to_outer_boundary(self, x):
        """Closest outer-sphere point and the outward normal there."""
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        if r == 0.0:
            raise GeometryError("radial projection is undefined at the centre")
        normal = x / r
        return self.outer_radius * normal, normal

    # -- packing for compiled kernels ----------------------------------------

    def kernel_arrays(self):
        """Arrays consumed by the compiled walk kernels."""
        L = len(self.electrodes)
        centers = np.zeros((max(L, 1), 3))
        cos_caps = np.full(max(L, 1), 2.0)  # cos(cap) > 1 never matches
        kappa = np.zeros(max(L, 1))
        for k, e in enumerate(self.electrodes):
            centers[k] = e.center
            cos_caps[k] = math.cos(e.cap_radius) if e.cap_radius < math.pi else -2.0
            kappa[k] = e.robin_coefficient
        return (
            centers,
            cos_caps,
            kappa,
            L,
            np.asarray(self.anomaly_center, dtype=float),
            float(self.anomaly_radius),
        )


def default_domain(anomaly_radius: float = 0.0, anomaly_center: Sequence[float] = (0.0, 0.0, 0.0)):
    """The eight-electrode unit sphere used throughout the validation runs."""
    return DomainSpec(tuple(default_electrodes()), tuple(anomaly_center), anomaly_radius)


def whole_sphere_robin_domain(contact_impedance: float) -> DomainSpec:
    """One "electrode" covering the whole outer sphere."""
    e = Electrode(1, (0.0, 0.0, 1.0), math.pi, contact_impedance)
    return DomainSpec((e,))
