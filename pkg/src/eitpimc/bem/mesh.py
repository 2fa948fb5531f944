"""Surface meshes of the unit sphere: graded electrode caps plus an icosphere.

Each electrode is covered out to an extended radius ``r_ext`` by a polar
grid of four graded layers.  The rest of the sphere is a subdivided
icosahedron whose triangles inside the extended caps are dropped and whose
vertices next to a cap are snapped onto the cap boundary.

Icosphere triangles with an edge on a cap rim become rim triangles whose
edge follows the rim circle, so the caps and the rest tile the sphere
without gaps or overlaps.

Elements are stored as rows of ``geo`` (``GEO_WIDTH`` numbers, unused
entries zero):

* kind 0 (projected triangle): three vertices;
* kind 1 (polar sector): cap centre, tangent ``e1``, tangent ``e2``, then
  ``ρa, ρb, φa, φb``;
* kind 2 (rim triangle): cap frame as for kind 1, rim radius ``ρe``, rim
  angles ``φ0, φ1``, apex, then the parameters ``(s, t)`` of the element's
  collocation point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..geometry import NEUMANN, ROBIN, BoundaryRegion, DomainSpec, Electrode, GeometryError
from .quadrature import TRI_BARY, TRI_W

GEO_WIDTH = 18

__all__ = [
    "GEO_WIDTH",
    "MeshParams",
    "SurfaceMesh",
    "build_global_mesh",
    "build_graded_electrode_mesh",
    "icosphere",
    "layer_widths",
]


@dataclass(frozen=True)
class MeshParams:
    """Grading parameters of the cap meshes and the icosphere depth.

    The layers are ``[0, r1]``, ``[r1, r]``, ``[r, r2]`` and ``[r2, r_ext]``
    with ``r`` the electrode radius.
    """

    depth: int = 5
    r1: float = 0.12
    r2: float = 0.26
    r_ext: float = 0.3
    rings: tuple[int, int, int, int] = (20, 16, 16, 9)
    alpha: float = 0.75
    sectors: int = 120

    def __post_init__(self):
        object.__setattr__(self, "rings", tuple(int(m) for m in self.rings))
        if len(self.rings) != 4 or min(self.rings) < 1:
            raise ValueError("need four ring counts >= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.sectors < 1 or self.depth < 0:
            raise ValueError("sectors >= 1 and depth >= 0 required")
        if not 0 < self.r1 < self.r2 < self.r_ext < math.pi / 2:
            raise ValueError("need 0 < r1 < r2 < r_ext < pi/2")


def layer_widths(extent: float, m: int, alpha: float, toward_end: bool) -> np.ndarray:
    """Widths ``dx·α^i`` scaled to fill ``extent``.

    With ``toward_end`` the widths shrink along the layer, otherwise they grow.
    """
    w = alpha ** np.arange(m)
    w = w * (extent / w.sum())
    return w if toward_end else w[::-1]


def cap_ring_edges(cap_radius: float, params: MeshParams) -> np.ndarray:
    """Ring boundaries from the cap centre to ``r_ext``."""
    r, (m1, m2, m3, m4) = cap_radius, params.rings
    if not params.r1 < r < params.r2:
        raise GeometryError(f"electrode radius {r} must lie between r1={params.r1} and r2={params.r2}")
    parts = [
        layer_widths(params.r1, m1, params.alpha, False),  # finest at the centre
        layer_widths(r - params.r1, m2, params.alpha, True),  # finest at the rim
        layer_widths(params.r2 - r, m3, params.alpha, False),  # finest at the rim
        np.full(m4, (params.r_ext - params.r2) / m4),
    ]
    edges = np.concatenate([[0.0], np.cumsum(np.concatenate(parts))])
    # pin the layer boundaries exactly
    ends = np.cumsum([0, m1, m2, m3, m4])
    for k, v in zip(ends, [0.0, params.r1, r, params.r2, params.r_ext]):
        edges[k] = v
    return edges


def _frame(center) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    a = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = a - (a @ c) * c
    t1 /= np.linalg.norm(t1)
    return np.array([c, t1, np.cross(c, t1)])


@dataclass
class SurfaceMesh:
    """Elements on the unit sphere with their region tags.

    ``electrode`` holds the 1-based id for Robin elements and 0 elsewhere.
    ``owner`` records which cap fragment produced an element (0 for the
    icosphere part).
    """

    kind: np.ndarray
    geo: np.ndarray
    region: np.ndarray
    electrode: np.ndarray
    params: MeshParams = field(default_factory=MeshParams)
    owner: np.ndarray | None = None

    def __post_init__(self):
        self.kind = np.asarray(self.kind, dtype=np.int64)
        self.geo = np.asarray(self.geo, dtype=float).reshape(-1, GEO_WIDTH)
        self.region = np.asarray(self.region, dtype=np.int64)
        self.electrode = np.asarray(self.electrode, dtype=np.int64)
        if self.owner is None:
            self.owner = np.zeros(len(self.kind), dtype=np.int64)
        self._derive()

    def __len__(self) -> int:
        return len(self.kind)

    @property
    def n_elements(self) -> int:
        return len(self.kind)

    def _derive(self):
        n = len(self.kind)
        self.area = np.zeros(n)
        self.mean_point = np.zeros((n, 3))
        self.diam = np.zeros(n)
        self.plane = np.zeros((n, 4))
        self.rule_pts = np.zeros((n, 4, 3))
        self.rule_w = np.zeros((n, 4))
        for k, derive in enumerate((self._derive_triangles, self._derive_sectors, self._derive_rim)):
            idx = np.nonzero(self.kind == k)[0]
            if len(idx):
                derive(idx)
        c = self.mean_point
        self.centroid = c / np.linalg.norm(c, axis=1)[:, None]
        rim = np.nonzero(self.kind == 2)[0]
        if len(rim):
            self.geo[rim, 15:17] = _rim_preimage(self.geo[rim], self.centroid[rim])

    def _derive_triangles(self, idx):
        P = self.geo[idx, :9].reshape(-1, 3, 3)
        a, b, c = P[:, 0], P[:, 1], P[:, 2]
        num = np.einsum("ij,ij->i", a, np.cross(b, c))
        den = 1 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
        self.area[idx] = 2.0 * np.arctan2(np.abs(num), den)
        nrm = np.cross(b - a, c - a)
        twoA = np.linalg.norm(nrm, axis=1)
        nrm = nrm / twoA[:, None]
        h = np.einsum("ij,ij->i", nrm, a)
        flip = h < 0
        nrm[flip] *= -1
        h = np.abs(h)
        self.plane[idx, :3] = nrm
        self.plane[idx, 3] = h
        self.diam[idx] = np.max(
            np.stack([np.linalg.norm(a - b, axis=1), np.linalg.norm(b - c, axis=1), np.linalg.norm(c - a, axis=1)]),
            axis=0,
        )
        # area-mean position: 7-point rule on the 16 pieces of a twice-refined triangle
        acc = np.zeros((len(idx), 3))
        for sub in _refined_barycentrics(2):
            for bary, w in zip(TRI_BARY, TRI_W):
                lam = bary @ sub
                p = lam[0] * a + lam[1] * b + lam[2] * c
                rp = np.linalg.norm(p, axis=1)
                jac = h / rp**3 * (twoA / 2.0) / 16.0
                acc += (w * jac)[:, None] * p / rp[:, None]
        self.mean_point[idx] = acc / self.area[idx][:, None]
        # degree-2 rule (three interior points), weights rescaled to the exact area
        for k, lam in enumerate(np.array([[4, 1, 1], [1, 4, 1], [1, 1, 4]]) / 6.0):
            p = lam[0] * a + lam[1] * b + lam[2] * c
            rp = np.linalg.norm(p, axis=1)
            self.rule_pts[idx, k] = p / rp[:, None]
            self.rule_w[idx, k] = h / rp**3 * (twoA / 2.0) / 3.0
        self.rule_w[idx] *= (self.area[idx] / self.rule_w[idx].sum(axis=1))[:, None]

    def _derive_sectors(self, idx):
        g = self.geo[idx]
        c, e1, e2 = g[:, 0:3], g[:, 3:6], g[:, 6:9]
        ra, rb, pa, pb = g[:, 9], g[:, 10], g[:, 11], g[:, 12]
        self.area[idx] = (np.cos(ra) - np.cos(rb)) * (pb - pa)
        i_cs = 0.5 * (np.sin(rb) ** 2 - np.sin(ra) ** 2)
        i_ss = 0.5 * (rb - ra) - 0.25 * (np.sin(2 * rb) - np.sin(2 * ra))
        m = (
            c * (i_cs * (pb - pa))[:, None]
            + e1 * (i_ss * (np.sin(pb) - np.sin(pa)))[:, None]
            + e2 * (i_ss * (np.cos(pa) - np.cos(pb)))[:, None]
        )
        self.mean_point[idx] = m / self.area[idx][:, None]
        # 2x2 Gauss rule, weights rescaled to the exact area
        t = 0.5 / math.sqrt(3.0)
        k = 0
        for sr in (0.5 - t, 0.5 + t):
            for sp in (0.5 - t, 0.5 + t):
                rho = ra + sr * (rb - ra)
                self.rule_pts[idx, k] = _sector_points(g, rho, pa + sp * (pb - pa))
                self.rule_w[idx, k] = 0.25 * np.sin(rho) * (rb - ra) * (pb - pa)
                k += 1
        self.rule_w[idx] *= (self.area[idx] / self.rule_w[idx].sum(axis=1))[:, None]
        corners = []
        for rho in (ra, rb, 0.5 * (ra + rb)):
            for phi in (pa, pb, 0.5 * (pa + pb)):
                corners.append(_sector_points(g, rho, phi))
        corners = np.stack(corners, axis=1)
        diff = corners[:, :, None, :] - corners[:, None, :, :]
        self.diam[idx] = np.sqrt(np.max(np.sum(diff**2, axis=-1), axis=(1, 2)))

    def _derive_rim(self, idx):
        g = self.geo[idx]
        gx, gw = np.polynomial.legendre.leggauss(16)
        gx, gw = 0.5 * (gx + 1), 0.5 * gw
        area = np.zeros(len(idx))
        acc = np.zeros((len(idx), 3))
        for si, sw in zip(gx, gw):
            for ti, tw in zip(gx, gw):
                y, jac = _rim_points(g, si, ti)
                area += sw * tw * jac
                acc += (sw * tw * jac)[:, None] * y
        self.area[idx] = area
        self.mean_point[idx] = acc / area[:, None]
        t = 0.5 / math.sqrt(3.0)
        k = 0
        for si in (0.5 - t, 0.5 + t):
            for ti in (0.5 - t, 0.5 + t):
                y, jac = _rim_points(g, si, ti)
                self.rule_pts[idx, k] = y
                self.rule_w[idx, k] = 0.25 * jac
                k += 1
        self.rule_w[idx] *= (area / self.rule_w[idx].sum(axis=1))[:, None]
        pts = np.stack([_rim_points(g, si, ti)[0] for si in (0.0, 0.5, 1.0) for ti in (0.0, 0.5, 1.0)], axis=1)
        diff = pts[:, :, None, :] - pts[:, None, :, :]
        self.diam[idx] = np.sqrt(np.max(np.sum(diff**2, axis=-1), axis=(1, 2)))

    # -- tags ----------------------------------------------------------------

    def region_tag(self, i: int) -> BoundaryRegion:
        code = self.region[i]
        if code == ROBIN:
            return BoundaryRegion.robin(int(self.electrode[i]))
        return BoundaryRegion("neumann" if code == NEUMANN else "dirichlet")

    @property
    def area_sum(self) -> float:
        return float(self.area.sum())

    @property
    def area_defect(self) -> float:
        """Relative gap or overlap of the element areas against the sphere."""
        return abs(self.area_sum - 4 * math.pi) / (4 * math.pi)

    def electrode_mask(self, electrode_id: int) -> np.ndarray:
        return (self.region == ROBIN) & (self.electrode == electrode_id)

    def vertices(self) -> np.ndarray:
        """Corner points, shape ``(n, 4, 3)``; triangles repeat their last vertex."""
        out = np.zeros((len(self), 4, 3))
        tri = self.kind == 0
        out[tri, :3] = self.geo[tri, :9].reshape(-1, 3, 3)
        out[tri, 3] = out[tri, 2]
        s = self.kind == 1
        g = self.geo[s]
        for k, (rho, phi) in enumerate([(9, 11), (10, 11), (10, 12), (9, 12)]):
            out[s, k] = _sector_points(g, g[:, rho], g[:, phi])
        r = self.kind == 2
        g = self.geo[r]
        for k, (si, ti) in enumerate([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, 1.0)]):
            out[r, k] = _rim_points(g, si, ti)[0]
        return out

    # -- plain-text dump -----------------------------------------------------

    def dump(self, path) -> None:
        p = self.params
        header = [
            "# eitpimc surface mesh v2",
            f"# depth={p.depth} r1={p.r1!r} r2={p.r2!r} r_ext={p.r_ext!r} "
            f"rings={','.join(map(str, p.rings))} alpha={p.alpha!r} sectors={p.sectors}",
            f"# columns: kind g0..g{GEO_WIDTH - 1} area region electrode owner",
            "# kind 0: g0..g8 triangle vertices; kind 1: g0..g8 cap frame, g9..g12 rho_a rho_b phi_a phi_b",
            "# kind 2: g0..g8 cap frame, g9..g11 rho_e phi_0 phi_1, g12..g14 apex, g15..g16 collocation (s, t)",
            "# region: 0 robin, 1 neumann, 2 dirichlet",
        ]
        with open(path, "w") as fh:
            fh.write("\n".join(header) + "\n")
            for i in range(len(self)):
                nums = " ".join(repr(float(v)) for v in self.geo[i])
                fh.write(
                    f"{self.kind[i]} {nums} {float(self.area[i])!r} {self.region[i]} {self.electrode[i]} {self.owner[i]}\n"
                )

    @classmethod
    def load(cls, path) -> "SurfaceMesh":
        params = MeshParams()
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.startswith("# depth="):
                    kv = dict(item.split("=") for item in line[2:].split())
                    params = MeshParams(
                        depth=int(kv["depth"]),
                        r1=float(kv["r1"]),
                        r2=float(kv["r2"]),
                        r_ext=float(kv["r_ext"]),
                        rings=tuple(int(v) for v in kv["rings"].split(",")),
                        alpha=float(kv["alpha"]),
                        sectors=int(kv["sectors"]),
                    )
                elif line.strip() and not line.startswith("#"):
                    rows.append(line.split())
        if not rows:
            return cls(np.zeros(0), np.zeros((0, GEO_WIDTH)), np.zeros(0), np.zeros(0), params)
        arr = np.array(rows, dtype=float)
        w = GEO_WIDTH
        return cls(
            arr[:, 0].astype(np.int64),
            arr[:, 1 : w + 1],
            arr[:, w + 2].astype(np.int64),
            arr[:, w + 3].astype(np.int64),
            params,
            arr[:, w + 4].astype(np.int64),
        )


def _sector_points(g, rho, phi):
    c, e1, e2 = g[:, 0:3], g[:, 3:6], g[:, 6:9]
    rho = np.asarray(rho)[:, None]
    phi = np.asarray(phi)[:, None]
    return np.cos(rho) * c + np.sin(rho) * (np.cos(phi) * e1 + np.sin(phi) * e2)


def _rim_points(g, s, t):
    """Points and area Jacobians of rim triangles at parameters ``(s, t)``."""
    c, e1, e2, V = g[:, 0:3], g[:, 3:6], g[:, 6:9], g[:, 12:15]
    re = g[:, 9][:, None]
    dphi = (g[:, 11] - g[:, 10])[:, None]
    phi = g[:, 10][:, None] + s * dphi
    G = np.cos(re) * c + np.sin(re) * (np.cos(phi) * e1 + np.sin(phi) * e2)
    D = np.sin(re) * dphi * (-np.sin(phi) * e1 + np.cos(phi) * e2)
    P = (1 - t) * G + t * V
    rp = np.linalg.norm(P, axis=1)
    y = P / rp[:, None]
    jac = np.abs(np.einsum("ij,ij->i", np.cross((1 - t) * D, V - G), y)) / rp**2
    return y, jac


def _rim_preimage(g, x, iters: int = 30):
    """Parameters ``(s, t)`` of the points ``x`` on rim triangles (Gauss-Newton)."""
    st = np.tile([0.5, 1.0 / 3.0], (len(g), 1))
    h = 1e-7
    for _ in range(iters):
        y = _rim_points(g, st[:, :1], st[:, 1:])[0]
        ys = (_rim_points(g, st[:, :1] + h, st[:, 1:])[0] - y) / h
        yt = (_rim_points(g, st[:, :1], st[:, 1:] + h)[0] - y) / h
        J = np.stack([ys, yt], axis=2)
        r = x - y
        JTJ = np.einsum("nki,nkj->nij", J, J)
        step = np.linalg.solve(JTJ, np.einsum("nki,nk->ni", J, r)[..., None])[..., 0]
        st = np.clip(st + step, 0.0, 1.0)
    return st


def _refined_barycentrics(levels: int):
    """Barycentric corner matrices of the 4**levels pieces of a triangle."""
    tris = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for t in tris:
            a, b, c = t
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt += [np.array(v) for v in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]
        tris = nxt
    return tris


# ---------------------------------------------------------------------------
# builders


def build_graded_electrode_mesh(electrode: Electrode, params: MeshParams = MeshParams()):
    """Polar-grid elements on the extended cap of one electrode.

    Returns ``(geo, region, electrode_ids)``; rings inside the electrode
    radius are Robin, the rest Neumann.
    """
    edges = cap_ring_edges(electrode.cap_radius, params)
    f = _frame(electrode.center).reshape(-1)
    n = params.sectors
    phis = 2.0 * math.pi * np.arange(n + 1) / n
    nr = len(edges) - 1
    geo = np.zeros((nr * n, GEO_WIDTH))
    geo[:, :9] = f
    geo[:, 9] = np.repeat(edges[:-1], n)
    geo[:, 10] = np.repeat(edges[1:], n)
    geo[:, 11] = np.tile(phis[:-1], nr)
    geo[:, 12] = np.tile(phis[1:], nr)
    inside = geo[:, 10] <= electrode.cap_radius + 1e-12
    region = np.where(inside, ROBIN, NEUMANN)
    ids = np.where(inside, electrode.id, 0)
    return geo, region, ids


def icosphere(depth: int):
    """Vertices and faces of a subdivided icosahedron in standard orientation."""
    t = (1 + 5**0.5) / 2
    V = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    F = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    V = [np.array(v, float) / np.linalg.norm(v) for v in V]
    for _ in range(depth):
        cache: dict[tuple[int, int], int] = {}
        nf = []

        def mid(a, b):
            k = (min(a, b), max(a, b))
            if k not in cache:
                m = V[a] + V[b]
                V.append(m / np.linalg.norm(m))
                cache[k] = len(V) - 1
            return cache[k]

        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        F = nf
    return np.array(V), np.array(F, dtype=np.int64)


def _snap_to_caps(V, F, centers, r_ext):
    """Drop faces inside the extended caps and pull boundary vertices onto the rims.

    Returns ``(V, F, rim_edge, cap)``: ``rim_edge[f]`` is the local index
    ``k`` of the edge ``(F[f, k], F[f, k+1])`` lying on the rim of cap
    ``cap[f]``, or -1.
    """
    V = V.copy()
    if len(centers) == 0:
        return V, F, np.full(len(F), -1), np.zeros(len(F), dtype=np.int64)
    ang = np.arccos(np.clip(V @ centers.T, -1, 1))
    near = np.argmin(ang, axis=1)
    d = ang[np.arange(len(V)), near]
    inside = d < r_ext
    # edge length scale for the "close to the rim" band
    h = float(np.median(np.linalg.norm(V[F[:, 0]] - V[F[:, 1]], axis=1)))
    mixed = inside[F].any(axis=1) & ~inside[F].all(axis=1)
    to_snap = np.zeros(len(V), bool)
    to_snap[np.unique(F[mixed][inside[F[mixed]]])] = True
    to_snap |= ~inside & (d - r_ext < 0.3 * h)
    for i in np.nonzero(to_snap)[0]:
        c = centers[near[i]]
        v = V[i] - (V[i] @ c) * c
        nv = np.linalg.norm(v)
        if nv == 0:  # the cap centre itself; its faces are all inside
            continue
        V[i] = math.cos(r_ext) * c + math.sin(r_ext) * v / nv
    on_or_in = inside | to_snap
    F = F[~on_or_in[F].all(axis=1)]
    # faces may still reach into a cap through a snapped vertex pair; drop slivers
    P = V[F]
    area2 = np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)
    F = F[area2 > 1e-6 * h * h]
    # edges used by one kept face with both ends on the same rim follow the rim
    edges = np.sort(np.stack([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]], axis=1), axis=2)
    flat = edges.reshape(-1, 2)
    _, inv, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
    single = (counts[inv.reshape(-1)] == 1).reshape(-1, 3)
    on_rim = to_snap[edges].all(axis=2) & (near[edges[..., 0]] == near[edges[..., 1]])
    rim = single & on_rim
    if np.any(rim.sum(axis=1) > 1):
        raise GeometryError("a face has two rim edges; change the icosphere depth")
    rim_edge = np.where(rim.any(axis=1), np.argmax(rim, axis=1), -1)
    cap = near[F[:, 0]]
    has = rim_edge >= 0
    cap[has] = near[F[has, rim_edge[has]]]
    return V, F, rim_edge, cap


def _rim_geo(V, F, rim_edge, cap, centers, r_ext):
    """``geo`` rows of the rim triangles."""
    rows = np.zeros((len(F), GEO_WIDTH))
    for n, (face, k, ci) in enumerate(zip(F, rim_edge, cap)):
        f = _frame(centers[ci])
        a, b, apex = V[face[k]], V[face[(k + 1) % 3]], V[face[(k + 2) % 3]]
        p0 = math.atan2(a @ f[2], a @ f[1])
        p1 = math.atan2(b @ f[2], b @ f[1])
        p1 += 2 * math.pi * round((p0 - p1) / (2 * math.pi))
        rows[n, :9] = f.reshape(-1)
        rows[n, 9:12] = (r_ext, p0, p1)
        rows[n, 12:15] = apex
    return rows


def build_global_mesh(domain: DomainSpec, params: MeshParams = MeshParams()) -> SurfaceMesh:
    """Cap meshes for every electrode plus a snapped icosphere elsewhere."""
    if domain.has_anomaly and np.linalg.norm(domain.anomaly_center) > 0:
        raise GeometryError(
            "the reference solver handles concentric anomalies only; use the path solver for offset ones"
        )
    es = domain.electrodes
    for i, a in enumerate(es):
        for b in es[i + 1 :]:
            ang = math.acos(max(-1.0, min(1.0, float(np.dot(a.center, b.center)))))
            if ang <= 2 * params.r_ext:
                raise GeometryError(f"extended caps of electrodes {a.id} and {b.id} overlap")
    geos, regions, ids, owners = [], [], [], []
    for e in es:
        g, r, i = build_graded_electrode_mesh(e, params)
        geos.append(g)
        regions.append(r)
        ids.append(i)
        owners.append(np.full(len(g), e.id))
    centers = np.array([e.center for e in es]).reshape(-1, 3)
    V, F = icosphere(params.depth)
    V, F, rim_edge, cap = _snap_to_caps(V, F, centers, params.r_ext)
    flat = rim_edge < 0
    tri = np.zeros((int(flat.sum()), GEO_WIDTH))
    tri[:, :9] = V[F[flat]].reshape(-1, 9)
    rim = _rim_geo(V, F[~flat], rim_edge[~flat], cap[~flat], centers, params.r_ext)
    n_cap = sum(len(g) for g in geos)
    geos += [tri, rim]
    n_ico = len(F)
    regions.append(np.full(n_ico, NEUMANN))
    ids.append(np.zeros(n_ico, dtype=np.int64))
    owners.append(np.zeros(n_ico, dtype=np.int64))
    kind = np.concatenate(
        [np.ones(n_cap, dtype=np.int64), np.zeros(len(tri), dtype=np.int64), np.full(len(rim), 2, dtype=np.int64)]
    )
    mesh = SurfaceMesh(
        kind, np.concatenate(geos), np.concatenate(regions), np.concatenate(ids), params, np.concatenate(owners)
    )
    if mesh.area_defect > 5e-3:
        warnings.warn(f"mesh area defect {mesh.area_defect:.2%} exceeds 0.5%; increase the depth", stacklevel=2)
    return mesh

