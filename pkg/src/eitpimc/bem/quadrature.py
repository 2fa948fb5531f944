"""Element integrals of the Laplace kernels on the unit sphere.

Three element kinds are supported, all lying exactly on the sphere:

* kind 0: the radial projection of a flat triangle ``Q0 Q1 Q2`` whose
  vertices are on the sphere; ``dS = h |P|^-3 dA`` with ``h`` the distance
  of the triangle's plane from the origin.
* kind 1: a polar sector ``[ρa, ρb] x [φa, φb]`` around a cap centre ``c``
  with tangent frame ``(e1, e2)``; ``dS = sin ρ dρ dφ``.
* kind 2: a rim triangle with one edge on the circle of geodesic radius
  ``ρe`` around a cap centre, between angles ``φ0`` and ``φ1``, and apex
  ``V``; the point at ``(s, t)`` is the projection of
  ``(1 - t) Γ(s) + t V`` with ``Γ`` the rim arc.  Its other two edges are
  great-circle arcs, so it fits exactly between a cap grid and projected
  triangles.

Every routine accumulates four numbers: the free-space single and double
layer integrals, and the same two for the image term of a concentric
Dirichlet sphere of radius ``r0`` (zero when ``r0 == 0``).
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

FOUR_PI = 4.0 * math.pi

# 7-point degree-5 rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
TRI_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
TRI_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def gauss_legendre01(n: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


GL3 = gauss_legendre01(3)
GL10 = gauss_legendre01(10)


@nb.njit(inline="always")
def _acc(x, y0, y1, y2, wt, r0, out):
    d0 = x[0] - y0
    d1 = x[1] - y1
    d2 = x[2] - y2
    r2 = d0 * d0 + d1 * d1 + d2 * d2
    r = math.sqrt(r2)
    ry = math.sqrt(y0 * y0 + y1 * y1 + y2 * y2)
    dn = (d0 * y0 + d1 * y1 + d2 * y2) / ry
    out[0] += wt / (FOUR_PI * r)
    out[1] += wt * dn / (FOUR_PI * r2 * r)
    if r0 > 0.0:
        xx = x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
        yy = ry * ry
        xy = x[0] * y0 + x[1] * y1 + x[2] * y2
        D = xx * yy - 2.0 * r0 * r0 * xy + r0**4
        sD = math.sqrt(D)
        out[2] += -wt * r0 / (FOUR_PI * sD)
        out[3] += wt * r0 / FOUR_PI * (xx * yy - r0 * r0 * xy) / (ry * D * sD)


# -- kind 0: projected triangles ----------------------------------------------


@nb.njit(inline="always")
def _tri_rule(x, q, h, r0, out, bary, bw):
    # q: 9 floats, three flat points in the parent plane
    e10 = q[3] - q[0]
    e11 = q[4] - q[1]
    e12 = q[5] - q[2]
    e20 = q[6] - q[0]
    e21 = q[7] - q[1]
    e22 = q[8] - q[2]
    c0 = e11 * e22 - e12 * e21
    c1 = e12 * e20 - e10 * e22
    c2 = e10 * e21 - e11 * e20
    area = 0.5 * math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
    for k in range(bw.shape[0]):
        p0 = bary[k, 0] * q[0] + bary[k, 1] * q[3] + bary[k, 2] * q[6]
        p1 = bary[k, 0] * q[1] + bary[k, 1] * q[4] + bary[k, 2] * q[7]
        p2 = bary[k, 0] * q[2] + bary[k, 1] * q[5] + bary[k, 2] * q[8]
        rp = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
        jac = h / (rp * rp * rp)
        _acc(x, p0 / rp, p1 / rp, p2 / rp, bw[k] * area * jac, r0, out)


@nb.njit(inline="always")
def _tri_center_diam(q):
    m0 = (q[0] + q[3] + q[6]) / 3.0
    m1 = (q[1] + q[4] + q[7]) / 3.0
    m2 = (q[2] + q[5] + q[8]) / 3.0
    rm = math.sqrt(m0 * m0 + m1 * m1 + m2 * m2)
    d = 0.0
    for a, b in ((0, 3), (3, 6), (6, 0)):
        e = math.sqrt((q[a] - q[b]) ** 2 + (q[a + 1] - q[b + 1]) ** 2 + (q[a + 2] - q[b + 2]) ** 2)
        d = max(d, e)
    return m0 / rm, m1 / rm, m2 / rm, d


@nb.njit(cache=True)
def tri_adaptive(x, q0, h, r0, eta, maxlev, out, bary, bw):
    """Subdivide until every piece is ``eta`` diameters away from ``x``."""
    stack = np.empty((4 * maxlev + 8, 9))
    level = np.empty(4 * maxlev + 8, dtype=np.int64)
    stack[0, :] = q0
    level[0] = 0
    top = 1
    while top > 0:
        top -= 1
        q = stack[top].copy()
        lev = level[top]
        m0, m1, m2, d = _tri_center_diam(q)
        dist = math.sqrt((x[0] - m0) ** 2 + (x[1] - m1) ** 2 + (x[2] - m2) ** 2)
        if dist > eta * d or lev >= maxlev:
            _tri_rule(x, q, h, r0, out, bary, bw)
            continue
        mid = np.empty(9)
        for k in range(3):
            mid[k] = 0.5 * (q[k] + q[3 + k])
            mid[3 + k] = 0.5 * (q[3 + k] + q[6 + k])
            mid[6 + k] = 0.5 * (q[6 + k] + q[k])
        for s in range(4):
            for k in range(3):
                if s == 0:
                    stack[top, k], stack[top, 3 + k], stack[top, 6 + k] = q[k], mid[k], mid[6 + k]
                elif s == 1:
                    stack[top, k], stack[top, 3 + k], stack[top, 6 + k] = mid[k], q[3 + k], mid[3 + k]
                elif s == 2:
                    stack[top, k], stack[top, 3 + k], stack[top, 6 + k] = mid[6 + k], mid[3 + k], q[6 + k]
                else:
                    stack[top, k], stack[top, 3 + k], stack[top, 6 + k] = mid[k], mid[3 + k], mid[6 + k]
            level[top] = lev + 1
            top += 1


@nb.njit(cache=True)
def tri_self(x, q, h, nrm, r0, out, gx, gw):
    """Integral over a projected triangle containing ``x`` (Duffy rule).

    The triangle is split at the radial preimage of ``x`` in its plane.
    """
    s = h / (x[0] * nrm[0] + x[1] * nrm[1] + x[2] * nrm[2])
    a0 = x[0] * s
    a1 = x[1] * s
    a2 = x[2] * s
    for t in range(3):
        b = 3 * t
        c = 3 * ((t + 1) % 3)
        B0, B1, B2 = q[b], q[b + 1], q[b + 2]
        C0, C1, C2 = q[c], q[c + 1], q[c + 2]
        u0 = B0 - a0
        u1 = B1 - a1
        u2 = B2 - a2
        v0 = C0 - B0
        v1 = C1 - B1
        v2 = C2 - B2
        c0 = u1 * v2 - u2 * v1
        c1 = u2 * v0 - u0 * v2
        c2 = u0 * v1 - u1 * v0
        twoA = math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
        for i in range(gx.shape[0]):
            uu = gx[i]
            for j in range(gx.shape[0]):
                vv = gx[j]
                p0 = a0 + uu * (u0 + vv * v0)
                p1 = a1 + uu * (u1 + vv * v1)
                p2 = a2 + uu * (u2 + vv * v2)
                rp = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
                jac = h / (rp * rp * rp) * twoA * uu
                _acc(x, p0 / rp, p1 / rp, p2 / rp, gw[i] * gw[j] * jac, r0, out)


# -- kinds 1 and 2: parametric elements -----------------------------------------


@nb.njit(inline="always")
def _param_point(kind, g, u, v):
    """Point and area Jacobian of a parametric element at ``(u, v)``.

    kind 1: sector, ``u = ρ``, ``v = φ``.  kind 2: rim triangle, ``u = s``
    runs along the rim arc and ``v = t`` towards the apex.
    """
    if kind == 1:
        cr = math.cos(u)
        sr = math.sin(u)
        cp = math.cos(v)
        sp = math.sin(v)
        y0 = cr * g[0] + sr * (cp * g[3] + sp * g[6])
        y1 = cr * g[1] + sr * (cp * g[4] + sp * g[7])
        y2 = cr * g[2] + sr * (cp * g[5] + sp * g[8])
        return y0, y1, y2, sr
    cr = math.cos(g[9])
    sr = math.sin(g[9])
    dphi = g[11] - g[10]
    phi = g[10] + u * dphi
    cp = math.cos(phi)
    sp = math.sin(phi)
    G0 = cr * g[0] + sr * (cp * g[3] + sp * g[6])
    G1 = cr * g[1] + sr * (cp * g[4] + sp * g[7])
    G2 = cr * g[2] + sr * (cp * g[5] + sp * g[8])
    D0 = sr * dphi * (-sp * g[3] + cp * g[6])
    D1 = sr * dphi * (-sp * g[4] + cp * g[7])
    D2 = sr * dphi * (-sp * g[5] + cp * g[8])
    P0 = (1.0 - v) * G0 + v * g[12]
    P1 = (1.0 - v) * G1 + v * g[13]
    P2 = (1.0 - v) * G2 + v * g[14]
    rp = math.sqrt(P0 * P0 + P1 * P1 + P2 * P2)
    y0 = P0 / rp
    y1 = P1 / rp
    y2 = P2 / rp
    # tangent derivatives of P; the projection onto the sphere scales the
    # normal component of their cross product by (y . n) / |P|^2
    a0 = (1.0 - v) * D0
    a1 = (1.0 - v) * D1
    a2 = (1.0 - v) * D2
    b0 = g[12] - G0
    b1 = g[13] - G1
    b2 = g[14] - G2
    c0 = a1 * b2 - a2 * b1
    c1 = a2 * b0 - a0 * b2
    c2 = a0 * b1 - a1 * b0
    jac = abs(c0 * y0 + c1 * y1 + c2 * y2) / (rp * rp)
    return y0, y1, y2, jac


@nb.njit(inline="always")
def _rect_rule(x, kind, g, ua, ub, va, vb, r0, out, gx, gw):
    du = ub - ua
    dv = vb - va
    for i in range(gx.shape[0]):
        u = ua + du * gx[i]
        for j in range(gx.shape[0]):
            y0, y1, y2, jac = _param_point(kind, g, u, va + dv * gx[j])
            _acc(x, y0, y1, y2, gw[i] * gw[j] * du * dv * jac, r0, out)


@nb.njit(inline="always")
def _dist(a0, a1, a2, b0, b1, b2):
    return math.sqrt((a0 - b0) ** 2 + (a1 - b1) ** 2 + (a2 - b2) ** 2)


@nb.njit(inline="always")
def _rect_extent(kind, g, ua, ub, va, vb):
    p0, p1, p2, _ = _param_point(kind, g, ua, va)
    q0, q1, q2, _ = _param_point(kind, g, ub, va)
    r0_, r1, r2, _ = _param_point(kind, g, ub, vb)
    s0, s1, s2, _ = _param_point(kind, g, ua, vb)
    lu = max(_dist(p0, p1, p2, q0, q1, q2), _dist(s0, s1, s2, r0_, r1, r2))
    lv = max(_dist(p0, p1, p2, s0, s1, s2), _dist(q0, q1, q2, r0_, r1, r2))
    if kind == 1:
        # chords underestimate long arcs around the cap centre
        lv = max(lv, math.sin(min(ub, 0.5 * math.pi)) * (vb - va))
    return lu, lv


@nb.njit(cache=True)
def rect_adaptive(x, kind, g, ua0, ub0, va0, vb0, r0, eta, maxlev, out, gx, gw):
    """Parametric element integral, bisecting the longer side until far from ``x``."""
    cap = 2 * maxlev + 8
    stack = np.empty((cap, 4))
    level = np.empty(cap, dtype=np.int64)
    stack[0, 0] = ua0
    stack[0, 1] = ub0
    stack[0, 2] = va0
    stack[0, 3] = vb0
    level[0] = 0
    top = 1
    while top > 0:
        top -= 1
        ua, ub, va, vb = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
        lev = level[top]
        lu, lv = _rect_extent(kind, g, ua, ub, va, vb)
        d = math.sqrt(lu * lu + lv * lv)
        m0, m1, m2, _ = _param_point(kind, g, 0.5 * (ua + ub), 0.5 * (va + vb))
        dist = _dist(x[0], x[1], x[2], m0, m1, m2)
        if dist > eta * d or lev >= maxlev:
            _rect_rule(x, kind, g, ua, ub, va, vb, r0, out, gx, gw)
            continue
        if lu >= lv:
            um = 0.5 * (ua + ub)
            stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = ua, um, va, vb
            stack[top + 1, 0], stack[top + 1, 1], stack[top + 1, 2], stack[top + 1, 3] = um, ub, va, vb
        else:
            vm = 0.5 * (va + vb)
            stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = ua, ub, va, vm
            stack[top + 1, 0], stack[top + 1, 1], stack[top + 1, 2], stack[top + 1, 3] = ua, ub, vm, vb
        level[top] = lev + 1
        level[top + 1] = lev + 1
        top += 2


@nb.njit(cache=True)
def _param_duffy(x, kind, g, ax, ay, bx, by, cx, cy, r0, out, gx, gw):
    # triangle (a, b, c) in the parameter plane, singular at a
    ux = bx - ax
    uy = by - ay
    vx = cx - bx
    vy = cy - by
    det = abs(ux * vy - uy * vx)
    if det == 0.0:
        return
    for i in range(gx.shape[0]):
        s = gx[i]
        for j in range(gx.shape[0]):
            t = gx[j]
            y0, y1, y2, jac = _param_point(kind, g, ax + s * (ux + t * vx), ay + s * (uy + t * vy))
            _acc(x, y0, y1, y2, gw[i] * gw[j] * det * s * jac, r0, out)


@nb.njit(cache=True)
def _quad_duffy(x, kind, g, ua, ub, va, vb, ux, vx, r0, out, gx, gw):
    _param_duffy(x, kind, g, ux, vx, ua, va, ub, va, r0, out, gx, gw)
    _param_duffy(x, kind, g, ux, vx, ub, va, ub, vb, r0, out, gx, gw)
    _param_duffy(x, kind, g, ux, vx, ub, vb, ua, vb, r0, out, gx, gw)
    _param_duffy(x, kind, g, ux, vx, ua, vb, ua, va, r0, out, gx, gw)


@nb.njit(cache=True)
def rect_self(x, kind, g, ua, ub, va, vb, ux, vx, r0, eta, maxlev, out, gx, gw, gx3, gw3):
    """Parametric element integral for ``x`` at parameter ``(ux, vx)``.

    The element is cut along its long side into pieces of aspect ratio about
    one; the piece holding ``x`` gets a four-triangle Duffy rule and the
    others the adaptive rule.
    """
    h = 1e-6
    p0, p1, p2, _ = _param_point(kind, g, ux - h, vx)
    q0, q1, q2, _ = _param_point(kind, g, ux + h, vx)
    su = _dist(p0, p1, p2, q0, q1, q2) / (2 * h)
    p0, p1, p2, _ = _param_point(kind, g, ux, vx - h)
    q0, q1, q2, _ = _param_point(kind, g, ux, vx + h)
    sv = _dist(p0, p1, p2, q0, q1, q2) / (2 * h)
    lu = su * (ub - ua)
    lv = sv * (vb - va)
    if lu >= lv:
        k = min(max(1, int(round(lu / max(lv, 1e-300)))), 4096)
        for i in range(k):
            a = ua + (ub - ua) * i / k
            b = ua + (ub - ua) * (i + 1) / k
            if a <= ux <= b:
                _quad_duffy(x, kind, g, a, b, va, vb, ux, vx, r0, out, gx, gw)
            else:
                rect_adaptive(x, kind, g, a, b, va, vb, r0, eta, maxlev, out, gx3, gw3)
    else:
        k = min(max(1, int(round(lv / max(lu, 1e-300)))), 4096)
        for i in range(k):
            a = va + (vb - va) * i / k
            b = va + (vb - va) * (i + 1) / k
            if a <= vx <= b:
                _quad_duffy(x, kind, g, ua, ub, a, b, ux, vx, r0, out, gx, gw)
            else:
                rect_adaptive(x, kind, g, ua, ub, a, b, r0, eta, maxlev, out, gx3, gw3)


@nb.njit(cache=True)
def sector_preimage(x, g, pa, pb):
    """``(ρ, φ)`` of ``x`` in a sector's frame, with ``φ`` shifted into ``[pa, pb]``."""
    rx = math.acos(min(1.0, max(-1.0, x[0] * g[0] + x[1] * g[1] + x[2] * g[2])))
    px = math.atan2(x[0] * g[6] + x[1] * g[7] + x[2] * g[8], x[0] * g[3] + x[1] * g[4] + x[2] * g[5])
    while px < pa - 1e-12:
        px += 2.0 * math.pi
    while px > pb + 1e-12:
        px -= 2.0 * math.pi
    return rx, px


# -- element dispatch -------------------------------------------------------


@nb.njit(cache=True)
def element_integrals(x, j, kind, geo, plane, mean_pt, rule_pts, rule_w, area, diam, self_elem, r0, far, far_abs,
                      eta, maxlev, out, bary, bw, gx3, gw3, gx10, gw10):
    """Add the four kernel integrals of element ``j`` seen from ``x`` to ``out``.

    ``plane[j]`` holds the unit normal and offset of a triangle's plane.
    Elements at least ``far`` diameters and ``far_abs`` away use a one-point
    rule at the area-mean position ``mean_pt[j]``; elements at least ``far``
    diameters away use the per-element rule ``rule_pts[j], rule_w[j]``.
    """
    if not self_elem:
        d0 = x[0] - mean_pt[j, 0]
        d1 = x[1] - mean_pt[j, 1]
        d2 = x[2] - mean_pt[j, 2]
        dd = d0 * d0 + d1 * d1 + d2 * d2
        lim = far * diam[j]
        if dd > lim * lim:
            if dd > far_abs * far_abs:
                _acc(x, mean_pt[j, 0], mean_pt[j, 1], mean_pt[j, 2], area[j], r0, out)
            else:
                for k in range(rule_w.shape[1]):
                    if rule_w[j, k] == 0.0:
                        continue
                    _acc(x, rule_pts[j, k, 0], rule_pts[j, k, 1], rule_pts[j, k, 2], rule_w[j, k], r0, out)
            return
    g = geo[j]
    k = kind[j]
    if k == 0:
        h = plane[j, 3]
        if self_elem:
            tri_self(x, g[:9].copy(), h, plane[j, :3].copy(), r0, out, gx10, gw10)
        else:
            tri_adaptive(x, g[:9].copy(), h, r0, eta, maxlev, out, bary, bw)
        return
    if k == 1:
        ua, ub, va, vb = g[9], g[10], g[11], g[12]
    else:
        ua, ub, va, vb = 0.0, 1.0, 0.0, 1.0
    if self_elem:
        if k == 1:
            ux, vx = sector_preimage(x, g, va, vb)
        else:
            ux, vx = g[15], g[16]
        rect_self(x, k, g, ua, ub, va, vb, ux, vx, r0, eta, 2 * maxlev, out, gx10, gw10, gx3, gw3)
    else:
        rect_adaptive(x, k, g, ua, ub, va, vb, r0, eta, 2 * maxlev, out, gx3, gw3)
