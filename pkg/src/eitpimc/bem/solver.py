"""Collocation boundary-element reference solver on the unit sphere.

Unknowns are element-wise constant potentials collocated at element area
centroids.  For the mixed electrode problem the boundary equation is::

    ½u(x) + ∫ ∂G/∂n_y u dS + Σ_l (1/z_l) ∫_{E_l} G u dS
        = Σ_l (1/z_l) ∫_{E_l} G φ1 dS + ∫_off G φ2 dS

with ``G`` the free-space kernel ``1/(4π|x-y|)`` plus, for a concentric
anomaly of radius ``r0``, the image term that vanishes on the anomaly.  The
anomaly boundary then drops out of the system (only ``φ3 = 0`` is
supported).

When the mesh, the layout and the data share the reflection symmetries
``diag(±1, ±1, ±1)``, unknowns are merged over symmetry orbits and only one
collocation row per orbit is assembled.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba as nb
import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree

from ..boundary_data import BoundaryData
from ..geometry import NEUMANN, ROBIN, DomainSpec, GeometryError
from .mesh import MeshParams, SurfaceMesh, build_global_mesh
from .quadrature import FOUR_PI, GL3, GL10, TRI_BARY, TRI_W, element_integrals

__all__ = [
    "DenseSystem",
    "QuadratureOptions",
    "ReferenceSolution",
    "assemble",
    "double_layer_row_sums",
    "greens_function",
    "interior_potential",
    "reference_currents",
    "solve",
    "solve_reference",
    "symmetry_orbits",
]

COND_LIMIT = 1e10


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class QuadratureOptions:
    """``far``, ``far_abs``: one-point rule beyond this many element
    diameters and beyond this distance.  ``eta``: adaptive pieces must be
    this many diameters from the point.
    """

    far: float = 5.0
    far_abs: float = 1.0
    eta: float = 1.5
    maxlev: int = 12


def greens_function(x, y, anomaly_radius: float = 0.0):
    """Kernel and its derivative along ``y/|y|``.

    With ``anomaly_radius = r0 > 0`` the image term of a concentric sphere is
    added, so the kernel vanishes for ``x`` on that sphere.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0):
        raise ValueError("coincident points")
    r0 = float(anomaly_radius)
    if r0 > 0 and (np.any(np.linalg.norm(x, axis=-1) < r0) or np.any(np.linalg.norm(y, axis=-1) < r0)):
        raise GeometryError("points inside the anomaly")
    ry = np.linalg.norm(y, axis=-1)
    n = y / ry[..., None]
    G = 1.0 / (FOUR_PI * r)
    dG = np.sum(d * n, axis=-1) / (FOUR_PI * r**3)
    if r0 > 0:
        xx = np.sum(x * x, axis=-1)
        yy = ry**2
        xy = np.sum(x * y, axis=-1)
        D = xx * yy - 2 * r0**2 * xy + r0**4
        G = G - r0 / (FOUR_PI * np.sqrt(D))
        dG = dG + r0 / FOUR_PI * (xx * yy - r0**2 * xy) / (ry * D**1.5)
    return G, dG


# ---------------------------------------------------------------------------
# symmetry


SIGNS = np.array([[sx, sy, sz] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)], dtype=float)


def symmetry_orbits(mesh: SurfaceMesh, columns: list[np.ndarray], tol: float = 1e-9):
    """Merge elements related by coordinate reflections.

    A reflection is used only if it maps every element onto an element with
    the same area and the same value in each array of ``columns``.

    Returns
    -------
    orbit : ndarray
        Orbit index of each element.
    reps : ndarray
        One representative element per orbit.
    n_sym : int
        Number of reflections in the symmetry group found.
    """
    c = mesh.centroid
    tree = cKDTree(c)
    perms = []
    for s in SIGNS:
        dist, idx = tree.query(c * s)
        if np.max(dist) > tol:
            continue
        ok = np.allclose(mesh.area[idx], mesh.area, rtol=1e-9, atol=1e-15)
        for col in columns:
            ok = ok and np.allclose(col[idx], col, rtol=1e-9, atol=1e-12)
        if ok:
            perms.append(idx)
    rep = np.arange(len(mesh))
    for p in perms:
        rep = np.minimum(rep, p)
    reps, orbit = np.unique(rep, return_inverse=True)
    return orbit.astype(np.int64), reps.astype(np.int64), len(perms)


# ---------------------------------------------------------------------------
# assembly


@nb.njit(cache=True)
def _assemble(
    rows, orbit, n_orb, kind, geo, plane, mean_pt, rule_pts, rule_w, area, diam, coll, r0,
    colK, colS, rhsK, rhsS, far, far_abs, eta, maxlev,
    bary, bw, gx3, gw3, gx10, gw10, A, b,
):
    buf = np.zeros(4)
    n = kind.shape[0]
    for a in range(rows.shape[0]):
        i = rows[a]
        x = coll[i].copy()
        for j in range(n):
            buf[:] = 0.0
            element_integrals(
                x, j, kind, geo, plane, mean_pt, rule_pts, rule_w, area, diam, i == j, r0, far, far_abs, eta, maxlev, buf,
                bary, bw, gx3, gw3, gx10, gw10,
            )
            S = buf[0] + buf[2]
            K = buf[1] + buf[3]
            A[a, orbit[j]] += colK[j] * K + colS[j] * S
            b[a] += rhsK[j] * K + rhsS[j] * S


@nb.njit(cache=True)
def _potential_sums(
    points, kind, geo, plane, mean_pt, rule_pts, rule_w, area, diam, r0, wS, wK, far, far_abs, eta, maxlev,
    bary, bw, gx3, gw3, gx10, gw10, out,
):
    # out[p] = Σ_j wS_j S_j(x_p) - wK_j K_j(x_p)
    buf = np.zeros(4)
    for p in range(points.shape[0]):
        x = points[p].copy()
        s = 0.0
        for j in range(kind.shape[0]):
            buf[:] = 0.0
            element_integrals(
                x, j, kind, geo, plane, mean_pt, rule_pts, rule_w, area, diam, False, r0, far, far_abs, eta, maxlev, buf,
                bary, bw, gx3, gw3, gx10, gw10,
            )
            s += wS[j] * (buf[0] + buf[2]) - wK[j] * (buf[1] + buf[3])
        out[p] = s


def _rules():
    return TRI_BARY, TRI_W, GL3[0], GL3[1], GL10[0], GL10[1]


@dataclass
class DenseSystem:
    """Collocation system ``matrix @ unknowns = rhs``.

    ``orbit[i]`` is the unknown carried by element ``i``; without symmetry
    reduction it is ``i`` itself.  ``mode`` is ``"mixed"`` (unknown
    potentials) or ``"dirichlet"`` (unknown normal derivatives).
    """

    matrix: np.ndarray
    rhs: np.ndarray
    orbit: np.ndarray
    reps: np.ndarray
    mode: str = "mixed"
    n_symmetries: int = 1
    boundary_values: np.ndarray | None = None  # Dirichlet data per element

    @property
    def size(self) -> int:
        return len(self.rhs)


def _element_values(mesh: SurfaceMesh, domain: DomainSpec, data: BoundaryData):
    """Per-element Robin coefficient, φ1 and φ2 at the collocation points."""
    n = len(mesh)
    kappa = np.zeros(n)
    phi1 = np.zeros(n)
    phi2 = np.zeros(n)
    rob = mesh.region == ROBIN
    for e in domain.electrodes:
        m = rob & (mesh.electrode == e.id)
        if np.any(m):
            kappa[m] = e.robin_coefficient
            phi1[m] = data.phi1_at(domain, e.id, mesh.centroid[m])
    off = mesh.region == NEUMANN
    if np.any(off) and not data.phi2.is_zero:
        phi2[off] = data.phi2(mesh.centroid[off])
    return kappa, phi1, phi2


def _check_supported(domain: DomainSpec, data: BoundaryData):
    if domain.has_anomaly and np.linalg.norm(domain.anomaly_center) > 0:
        raise GeometryError(
            "the reference solver handles concentric anomalies only; use the path solver for offset ones"
        )
    if domain.has_anomaly and not data.phi3.is_zero:
        raise ValueError("the reference solver supports phi3 = 0 only")


def assemble(
    mesh: SurfaceMesh,
    data: BoundaryData,
    domain: DomainSpec,
    symmetric: bool = True,
    quad: QuadratureOptions = QuadratureOptions(),
) -> DenseSystem:
    """Collocation system of the mixed problem, or of the Dirichlet problem
    when ``data.outer_dirichlet`` is set (then the unknowns are ``du/dn``)."""
    _check_supported(domain, data)
    n = len(mesh)
    r0 = float(domain.anomaly_radius)
    if data.outer_dirichlet is not None:
        g = data.outer_dirichlet(mesh.centroid)
        cols = [g]
        colK, colS, rhsK, rhsS = np.zeros(n), np.ones(n), g, np.zeros(n)
        mode = "dirichlet"
    else:
        kappa, phi1, phi2 = _element_values(mesh, domain, data)
        cols = [kappa, phi1, phi2, mesh.region.astype(float)]
        colK, colS = np.ones(n), kappa
        rhsK, rhsS = np.zeros(n), kappa * phi1 + phi2
        mode = "mixed"
        g = None
    if symmetric:
        orbit, reps, n_sym = symmetry_orbits(mesh, cols)
    else:
        orbit, reps, n_sym = np.arange(n, dtype=np.int64), np.arange(n, dtype=np.int64), 1
    m = len(reps)
    A = np.zeros((m, m))
    b = np.zeros(m)
    _assemble(
        reps, orbit, m, mesh.kind, mesh.geo, mesh.plane, mesh.mean_point, mesh.rule_pts, mesh.rule_w, mesh.area, mesh.diam,
        mesh.centroid, r0, colK, colS, rhsK, rhsS, quad.far, quad.far_abs, quad.eta, quad.maxlev, *_rules(), A, b,
    )
    if mode == "mixed":
        A[np.arange(m), np.arange(m)] += 0.5
    else:
        b += 0.5 * g[reps]
    if not np.all(np.isfinite(A)):
        raise SingularSystemError("non-finite matrix entries")
    return DenseSystem(A, b, orbit, reps, mode, n_sym, g)


def _inv_norm1_estimate(lu_piv, n: int, iters: int = 5) -> float:
    """Hager's estimate of ``||A^-1||_1`` from an LU factorisation."""
    x = np.full(n, 1.0 / n)
    est = 0.0
    for _ in range(iters):
        y = sla.lu_solve(lu_piv, x)
        est_new = np.abs(y).sum()
        xi = np.sign(y)
        xi[xi == 0] = 1.0
        z = sla.lu_solve(lu_piv, xi, trans=1)
        j = int(np.argmax(np.abs(z)))
        if est_new <= est or np.abs(z[j]) <= z @ x:
            est = max(est, est_new)
            break
        est = est_new
        x = np.zeros(n)
        x[j] = 1.0
    return est


@dataclass
class SolveReport:
    unknowns: np.ndarray
    residual: float
    condition_estimate: float


def solve(system: DenseSystem) -> SolveReport:
    """Dense LU solve with residual and a 1-norm condition estimate."""
    A = system.matrix
    if A.shape[0] == 0:
        return SolveReport(np.zeros(0), 0.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu = sla.lu_factor(A, check_finite=True)
        except (sla.LinAlgWarning, ValueError) as exc:
            raise SingularSystemError(str(exc)) from exc
    if np.any(np.diag(lu[0]) == 0):
        raise SingularSystemError("singular matrix")
    x = sla.lu_solve(lu, system.rhs)
    bnorm = np.linalg.norm(system.rhs)
    res = np.linalg.norm(A @ x - system.rhs) / (bnorm if bnorm > 0 else 1.0)
    cond = np.abs(A).sum(axis=0).max() * _inv_norm1_estimate(lu, A.shape[0])
    if cond > COND_LIMIT:
        warnings.warn(f"ill-conditioned system: condition estimate {cond:.3g}", stacklevel=2)
    return SolveReport(x, float(res), float(cond))


# ---------------------------------------------------------------------------
# post-processing


@dataclass
class ReferenceSolution:
    """Element potentials and fluxes, and electrode currents."""

    mesh: SurfaceMesh
    potential: np.ndarray
    flux: np.ndarray
    electrode_ids: tuple[int, ...]
    currents: np.ndarray
    residual: float
    condition_estimate: float
    n_unknowns: int
    n_symmetries: int
    anomaly_radius: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(np.sum(self.currents))


def reference_currents(
    report: SolveReport, system: DenseSystem, mesh: SurfaceMesh, data: BoundaryData, domain: DomainSpec
) -> ReferenceSolution:
    """Element fluxes from the Robin identity and the cap-averaged currents."""
    x = report.unknowns[system.orbit]
    if system.mode == "dirichlet":
        u = system.boundary_values
        q = x
        kappa = np.zeros(len(mesh))
        ids = ()
        J = np.zeros(0)
    else:
        u = x
        kappa, phi1, phi2 = _element_values(mesh, domain, data)
        rob = mesh.region == ROBIN
        q = np.where(rob, kappa * (phi1 - u), phi2)
        ids = tuple(e.id for e in domain.electrodes)
        J = np.zeros(len(ids))
        for k, e in enumerate(domain.electrodes):
            m = mesh.electrode_mask(e.id)
            J[k] = np.sum(mesh.area[m] * q[m]) / np.sum(mesh.area[m])
    return ReferenceSolution(
        mesh, u, q, ids, J, report.residual, report.condition_estimate, system.size,
        system.n_symmetries, float(domain.anomaly_radius),
        {
            "n_elements": len(mesh),
            "n_unknowns": system.size,
            "area_defect": mesh.area_defect,
            "min_diam": float(mesh.diam.min()),
            "max_diam": float(mesh.diam.max()),
        },
    )


def interior_potential(
    x, solution: ReferenceSolution, quad: QuadratureOptions = QuadratureOptions()
) -> np.ndarray:
    """Representation formula ``u(x) = ∫ G du/dn - ∫ dG/dn u`` at interior points."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(pts, axis=1)
    if np.any(r >= 1.0):
        raise GeometryError("interior points must satisfy |x| < 1")
    if solution.anomaly_radius > 0 and np.any(r <= solution.anomaly_radius):
        raise GeometryError("point inside the anomaly")
    mesh = solution.mesh
    for p, rp in zip(pts, r):
        near = np.linalg.norm(mesh.centroid - p, axis=1).argmin()
        if 1.0 - rp < mesh.diam[near]:
            warnings.warn("evaluation point within one element diameter of the boundary", stacklevel=2)
    out = np.zeros(len(pts))
    _potential_sums(
        np.ascontiguousarray(pts), mesh.kind, mesh.geo, mesh.plane, mesh.mean_point, mesh.rule_pts, mesh.rule_w, mesh.area, mesh.diam,
        solution.anomaly_radius, solution.flux, solution.potential, quad.far, quad.far_abs, quad.eta, quad.maxlev,
        *_rules(), out,
    )
    return out if np.ndim(x) > 1 else out[0]


def double_layer_row_sums(
    mesh: SurfaceMesh, rows=None, quad: QuadratureOptions = QuadratureOptions()
) -> np.ndarray:
    """``Σ_j ∫_j ∂G/∂n_y dS`` at the collocation points of ``rows`` (free space)."""
    n = len(mesh)
    rows = np.arange(n, dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    A = np.zeros((len(rows), 1))
    b = np.zeros(len(rows))
    _assemble(
        rows, np.zeros(n, dtype=np.int64), 1, mesh.kind, mesh.geo, mesh.plane, mesh.mean_point, mesh.rule_pts, mesh.rule_w, mesh.area,
        mesh.diam, mesh.centroid, 0.0, np.ones(n), np.zeros(n), np.zeros(n), np.zeros(n),
        quad.far, quad.far_abs, quad.eta, quad.maxlev, *_rules(), A, b,
    )
    return A[:, 0]


def solve_reference(
    domain: DomainSpec,
    data: BoundaryData,
    mesh_params: MeshParams = MeshParams(),
    symmetric: bool = True,
    quad: QuadratureOptions = QuadratureOptions(),
    mesh: SurfaceMesh | None = None,
) -> ReferenceSolution:
    """Mesh, assemble, solve and post-process in one call."""
    _check_supported(domain, data)
    if mesh is None:
        mesh = build_global_mesh(domain, mesh_params)
    system = assemble(mesh, data, domain, symmetric, quad)
    report = solve(system)
    return reference_currents(report, system, mesh, data, domain)

