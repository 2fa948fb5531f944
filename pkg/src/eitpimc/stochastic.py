"""Reflecting Brownian paths by walk on spheres, with ε-shell local time.

Outside the shell of width ``epsilon`` below the outer sphere a path makes
the largest walk-on-spheres jump that stops at the shell entry.  Inside the
shell the jump radius is ``delta_x``, or ``2*delta_x`` when the point is
closer than ``delta_x`` to the outer sphere.  Shell steps add 1 (radius
``delta_x``) or 4 (radius ``2*delta_x``) to an integer counter worth
``(Δx)² / (3ε)`` of local time each, and a jump that leaves the ball is
pulled back to the point where its segment crosses the sphere (a boundary
event).  The batch kernel
charges each step's local time at the boundary point nearest to the step's
centre, so the data and the killing rate are read where the time was spent.

Local time here is normalised as ``L = lim (1/ε) ∫ 1{shell} ds``, which is
twice the semimartingale local time.  With that normalisation the path
functional is::

    u(x) = E[ ∫ e^{-A} (φ1/z)/2 dL_E + ∫ e^{-A} φ2/2 dL_off + e^{-A_τ} φ3(X_τ) ]
    A(t) = ∫ κ/2 dL_E,   κ = 1/z

Each pull-back also measures local time: ``dl = 2 n·(y - p)``, twice the
overshoot along the outward normal ``n`` at the jump's start, is the change
the pull-back makes to ``2 n·x``, so ``Σ dl`` is the local time that drives
the boundary condition.  Pulling back to the crossing point ``p``, rather
than radially, keeps that true to first order in ``ε`` for harmonics of
every degree; the radial pull-back adds a tangential term of relative size
about ``0.28 (n - 2) ε`` for degree ``n``.  The counting scheme
overestimates ``L`` by a factor that depends mainly on ``epsilon/delta_x``;
:func:`calibrate_local_time` measures it against ``Σ dl``.  A path started
on the sphere also counts a fixed amount of local time too little over its
first few steps; :func:`calibrate_start_offset` measures that amount and
boundary starts are charged it up front.

Robin charges kill (or discount) a path at a counting step, where the count
runs ahead of the pull-back local time by a fixed amount
(:func:`calibrate_end_offset`), and they read the data at the projection of
a point at depth ``d`` below the sphere.  Both shift the estimate by
``O(ε) ∂u/∂n``.  On an electrode ``∂u/∂n = κ(φ1 - u)``, so the shift is the
same as that of a slightly larger ``κ``, and scaling each Robin charge by
``1 - κ(d + δ/2)``, with ``δ`` the end offset, removes it to first order.

Every path owns a xoshiro256** stream seeded from ``(seed, key, index)``,
so results do not depend on how paths are split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numba as nb
import numpy as np
from numba import uint64

from .boundary_data import BoundaryData, Field
from .geometry import BoundaryRegion, DomainSpec, GeometryError

__all__ = [
    "BoundaryEvent",
    "NonTerminationError",
    "PathBatch",
    "PathRNG",
    "WalkParams",
    "WalkState",
    "calibrate_end_offset",
    "calibrate_local_time",
    "calibrate_start_offset",
    "local_time_increment",
    "local_time_value",
    "run_path",
    "run_paths",
    "sample_uniform_direction",
    "wos_step",
]

ROBIN_WEIGHTED = 0
ROBIN_SURVIVAL = 1

# step status codes
MOVED = 0
EXITED = 1
ABSORBED_ANOMALY = 2
ABSORBED_OUTER = 3

# path termination codes
RUNNING = 0
DONE_NP = 1
DONE_ABSORBED = 2
DONE_KILLED = 3
DONE_CAP = 4

# measured count/pull-back local-time ratios, keyed by (epsilon, delta_x)
FROZEN_LOCAL_TIME_SCALE = {
    (0.005, 0.0025): 1.29526,
    (0.01, 0.005): 1.29083,
    (0.02, 0.01): 1.28189,
}

# measured local-time deficit of the count for paths started on the sphere
FROZEN_START_OFFSET = {
    (0.005, 0.0025): 0.003055,
    (0.01, 0.005): 0.006103,
    (0.02, 0.01): 0.012159,
}


# measured lead of the count over the pull-back local time at a counting step
FROZEN_END_OFFSET = {
    (0.005, 0.0025): 0.002511,
    (0.01, 0.005): 0.004846,
    (0.02, 0.01): 0.009748,
}


class NonTerminationError(RuntimeError):
    """A path exceeded the step cap."""


# ---------------------------------------------------------------------------
# random numbers


@nb.njit(inline="always")
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@nb.njit(inline="always")
def _splitmix(s):
    s = s + uint64(0x9E3779B97F4A7C15)
    z = s
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return s, z ^ (z >> uint64(31))


@nb.njit(inline="always")
def _next_uniform(st):
    s0 = st[0]
    s1 = st[1]
    s2 = st[2]
    s3 = st[3]
    result = _rotl(s1 * uint64(5), 7) * uint64(9)
    t = s1 << uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    st[0] = s0
    st[1] = s1
    st[2] = s2
    st[3] = s3
    return (result >> uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def _seed_stream(seed, key, index, st):
    s = uint64(seed) ^ (uint64(key) * uint64(0x9E6C63D0676A9A99))
    s, base = _splitmix(s)
    s = base ^ (uint64(index) * uint64(0xD1B54A32D192ED03))
    for i in range(4):
        s, z = _splitmix(s)
        st[i] = z


@nb.njit(inline="always")
def _direction(st):
    z = 2.0 * _next_uniform(st) - 1.0
    phi = 2.0 * math.pi * _next_uniform(st)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    return s * math.cos(phi), s * math.sin(phi), z


@nb.njit(cache=True)
def _direction_py(st):
    v0, v1, v2 = _direction(st)
    n = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    return np.array([v0 / n, v1 / n, v2 / n])


@nb.njit(cache=True)
def _uniform_py(st):
    return _next_uniform(st)


class PathRNG:
    """One xoshiro256** stream, seeded from ``(seed, key, index)``."""

    def __init__(self, seed: int = 0, key: int = 0, index: int = 0):
        self.seed = int(seed) % 2**64
        self.key = int(key) % 2**64
        self.index = int(index)
        self.state = np.empty(4, dtype=np.uint64)
        _seed_stream(np.uint64(seed % 2**64), np.uint64(key % 2**64), np.uint64(index), self.state)

    def uniform(self) -> float:
        return _uniform_py(self.state)


def sample_uniform_direction(rng: PathRNG) -> np.ndarray:
    """Isotropic unit vector (``z`` uniform on [-1, 1], azimuth uniform)."""
    return _direction_py(rng.state)


# ---------------------------------------------------------------------------
# parameters and per-path records


@dataclass(frozen=True)
class WalkParams:
    """Numerical parameters of the walk.

    Parameters
    ----------
    epsilon, delta_x
        Shell width and the in-shell jump radius, ``0 < delta_x < epsilon``.
    max_boundary_events
        NP: a path stops after this many Robin (electrode) events.
    n_paths, seed
        Path count and the master seed.
    absorption_shell
        Paths closer than this to a Dirichlet sphere are absorbed.
    step_cap
        Hard limit on steps per path.
    robin_mode
        ``"weighted"`` carries ``e^{-A}`` along the path; ``"survival"``
        kills the path once ``A`` passes an Exp(1) clock drawn at the start,
        i.e. with probability ``1 - e^{-a}`` at each Robin charge, and scores
        the data at the kill.  Both have the same expectation.
    local_time_scale
        Divisor applied to the counted local time.  ``None`` uses the
        measured value for ``(epsilon, delta_x)``.
    start_local_time
        Local time charged at the start of paths that begin on the outer
        sphere.  ``None`` uses the measured offset when the scale is also
        measured, and 0 when ``local_time_scale`` is given.
    end_local_time
        Lead of the count over the exact local time at a counting step, used
        in the Robin hazard correction.  Same defaults as ``start_local_time``.
    weight_floor
        Weighted mode only: stop once ``e^{-A}`` drops below this value.
    """

    epsilon: float = 0.01
    delta_x: float = 0.005
    max_boundary_events: int = 2500
    n_paths: int = 200_000
    seed: int = 12345
    absorption_shell: float = 1e-5
    step_cap: int = 1_000_000
    robin_mode: str = "survival"
    local_time_scale: float | None = None
    start_local_time: float | None = None
    end_local_time: float | None = None
    weight_floor: float = 0.0

    def __post_init__(self):
        if not (0 < self.delta_x < self.epsilon < 0.5):
            raise ValueError("need 0 < delta_x < epsilon << 1")
        if self.max_boundary_events < 1:
            raise ValueError("max_boundary_events must be >= 1")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0 < self.absorption_shell < self.epsilon:
            raise ValueError("need 0 < absorption_shell < epsilon")
        if self.step_cap < 1:
            raise ValueError("step_cap must be >= 1")
        if self.robin_mode not in ("weighted", "survival"):
            raise ValueError("robin_mode must be 'weighted' or 'survival'")
        if self.local_time_scale is not None and not self.local_time_scale > 0:
            raise ValueError("local_time_scale must be positive")
        if self.start_local_time is not None and not self.start_local_time >= 0:
            raise ValueError("start_local_time must be >= 0")
        if self.end_local_time is not None and not self.end_local_time >= 0:
            raise ValueError("end_local_time must be >= 0")
        if not 0 <= self.weight_floor < 1:
            raise ValueError("weight_floor must lie in [0, 1)")

    @property
    def mode_code(self) -> int:
        return ROBIN_WEIGHTED if self.robin_mode == "weighted" else ROBIN_SURVIVAL

    def resolved_scale(self) -> float:
        if self.local_time_scale is not None:
            return float(self.local_time_scale)
        return local_time_scale_for(self.epsilon, self.delta_x)

    def resolved_start_offset(self) -> float:
        if self.start_local_time is not None:
            return float(self.start_local_time)
        if self.local_time_scale is not None:
            return 0.0
        return start_offset_for(self.epsilon, self.delta_x)

    def resolved_end_offset(self) -> float:
        if self.end_local_time is not None:
            return float(self.end_local_time)
        if self.local_time_scale is not None:
            return 0.0
        return end_offset_for(self.epsilon, self.delta_x)

    def with_(self, **kw) -> "WalkParams":
        return replace(self, **kw)


@dataclass
class WalkState:
    """State of one path between steps.

    ``fk_exponent`` holds ``-A``, so the Feynman-Kac weight is
    ``exp(fk_exponent)``.
    """

    position: np.ndarray
    step_index: int = 0
    local_time_counter: int = 0
    last_counter: int = 0
    fk_exponent: float = 0.0
    robin_sum: float = 0.0
    neumann_sum: float = 0.0
    terminated: bool = False
    absorption_point: np.ndarray | None = None

    @property
    def weight(self) -> float:
        return math.exp(self.fk_exponent)


@dataclass(frozen=True)
class BoundaryEvent:
    point: np.ndarray
    region: BoundaryRegion
    local_time_increment: float
    step_index: int


def local_time_increment(step_radius: float, in_shell: bool, params: WalkParams) -> int:
    """Counter increment of one completed step: 0, 1 or 4."""
    if not in_shell:
        return 0
    if math.isclose(step_radius, 2.0 * params.delta_x):
        return 4
    if math.isclose(step_radius, params.delta_x):
        return 1
    raise ValueError("shell steps have radius delta_x or 2*delta_x")


def local_time_value(dn: int, params: WalkParams) -> float:
    """Uncalibrated local time ``dn (Δx)² / (3ε)``."""
    if dn < 0:
        raise ValueError("counter increments are non-negative")
    return dn * params.delta_x**2 / (3.0 * params.epsilon)


# ---------------------------------------------------------------------------
# compiled core


@nb.njit(inline="always")
def _advance(pos, st, eps, dx, shell, ac, ar, outer_dirichlet):
    """One step in place.

    Returns ``(status, counter increment, dl)``.  A jump that leaves the
    ball is pulled back to the point where its segment crosses the sphere,
    and ``dl = 2 n·(y - p)`` is twice the overshoot ``y - p`` measured along
    the outward normal ``n`` at the start of the jump (0 when no exit).
    """
    r = math.sqrt(pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2])
    d_out = 1.0 - r
    d_in = 1e300
    if ar > 0.0:
        q0 = pos[0] - ac[0]
        q1 = pos[1] - ac[1]
        q2 = pos[2] - ac[2]
        rq = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2)
        d_in = rq - ar
        if d_in < shell:
            # absorb at the nearest anomaly point
            pos[0] = ac[0] + ar * q0 / rq
            pos[1] = ac[1] + ar * q1 / rq
            pos[2] = ac[2] + ar * q2 / rq
            return ABSORBED_ANOMALY, 0, 0.0
    if outer_dirichlet:
        if d_out < shell:
            pos[0] /= r
            pos[1] /= r
            pos[2] /= r
            return ABSORBED_OUTER, 0, 0.0
        R = min(d_out, d_in)
        inc = 0
    elif d_out >= eps + dx:
        # stop at the shell entry so the first shell contact is resolved
        R = min(d_out - eps, d_in)
        inc = 0
    elif d_out >= dx:
        R = dx
        inc = 1 if d_out < eps else 0
    else:
        R = 2.0 * dx
        inc = 4
    v0, v1, v2 = _direction(st)
    x0 = pos[0]
    x1 = pos[1]
    x2 = pos[2]
    pos[0] += R * v0
    pos[1] += R * v1
    pos[2] += R * v2
    if outer_dirichlet:
        return MOVED, 0, 0.0
    ry = pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]
    if ry >= 1.0:
        b = x0 * v0 + x1 * v1 + x2 * v2
        t = -b + math.sqrt(max(b * b + 1.0 - r * r, 0.0))
        p0 = x0 + t * v0
        p1 = x1 + t * v1
        p2 = x2 + t * v2
        rp = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
        p0 /= rp
        p1 /= rp
        p2 /= rp
        dl = 2.0 * ((pos[0] - p0) * x0 + (pos[1] - p1) * x1 + (pos[2] - p2) * x2) / r
        pos[0] = p0
        pos[1] = p1
        pos[2] = p2
        return EXITED, inc, dl
    return MOVED, inc, 0.0


@nb.njit(inline="always")
def _eval_field(code, exps, coefs, x0, x1, x2):
    if code == 0:
        s = 0.0
        for i in range(coefs.shape[0]):
            c = coefs[i]
            if c != 0.0:
                s += c * x0 ** exps[i, 0] * x1 ** exps[i, 1] * x2 ** exps[i, 2]
        return s
    r = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    if code == 1:
        t = x2 / r
        t2 = t * t
        return 8.0 * t2 * t2 - 8.0 * t2 + 1.0
    return math.cos(4.0 * math.atan2(x1, x2))


@nb.njit(inline="always")
def _electrode_of3(x0, x1, x2, centers, cos_caps, n_el):
    for k in range(n_el):
        if x0 * centers[k, 0] + x1 * centers[k, 1] + x2 * centers[k, 2] >= cos_caps[k]:
            return k
    return -1


@nb.njit(inline="always")
def _electrode_of(pos, centers, cos_caps, n_el):
    for k in range(n_el):
        d = pos[0] * centers[k, 0] + pos[1] * centers[k, 1] + pos[2] * centers[k, 2]
        if d >= cos_caps[k]:
            return k
    return -1


@nb.njit(inline="always")
def _charge(x0, x1, x2, dL, depth, h, centers, cos_caps, kappa, scale, n_el, codes, exps, coefs, mode, floor, w, A, clock, rs, ns):
    """Book local time ``dL`` at the unit vector ``x``.

    ``depth`` is the distance below the sphere of the point the time is
    charged for and ``h`` half the end offset; a Robin charge is scaled by
    ``1 - κ(depth + h)`` (clipped at 0).

    ``A`` is the Feynman-Kac exponent so far; survival mode kills the path
    when it passes ``clock``, an Exp(1) variable drawn at the start, which
    is the same as killing with probability ``1 - e^{-a}`` at each charge.
    Returns ``(w, A, rs, ns, code)`` with ``code`` RUNNING, DONE_KILLED or
    DONE_NP (weight floor reached).
    """
    e = _electrode_of3(x0, x1, x2, centers, cos_caps, n_el)
    if e < 0:
        return w, A, rs, ns + 0.5 * w * dL * _eval_field(codes[1], exps[1], coefs[1], x0, x1, x2), RUNNING
    a = 0.5 * kappa[e] * dL * max(1.0 - kappa[e] * (depth + h), 0.0)
    A += a
    if mode == ROBIN_WEIGHTED:
        f = scale[e] * _eval_field(codes[0], exps[0], coefs[0], x0, x1, x2)
        decay = math.exp(-a)
        rs += w * (1.0 - decay) * f
        w *= decay
        return w, A, rs, ns, DONE_NP if w < floor else RUNNING
    if A >= clock:
        return w, A, rs + scale[e] * _eval_field(codes[0], exps[0], coefs[0], x0, x1, x2), ns, DONE_KILLED
    return w, A, rs, ns, RUNNING


@nb.njit(cache=True)
def _walk_batch(
    starts, seed, key, first_index,
    centers, cos_caps, kappa, scale, n_el, ac, ar,
    codes, exps, coefs, outer_dirichlet,
    eps, dx, shell, q, l0, h, npmax, cap, mode, floor,
    robin, neumann, dirichlet, steps, events, robin_events, status, ltime,
):
    st = np.empty(4, dtype=np.uint64)
    pos = np.empty(3)
    n = starts.shape[0]
    for p in range(n):
        _seed_stream(seed, key, first_index + p, st)
        pos[0] = starts[p, 0]
        pos[1] = starts[p, 1]
        pos[2] = starts[p, 2]
        w = 1.0
        rs = 0.0
        ns = 0.0
        dv = 0.0
        nev = 0
        nrob = 0
        lt = 0.0
        code = RUNNING
        k = 0
        A = 0.0
        clock = -math.log(1.0 - _next_uniform(st)) if mode == ROBIN_SURVIVAL and n_el > 0 else 0.0
        r0 = math.sqrt(pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2])
        if l0 > 0.0 and r0 > 1.0 - 1e-12 and not outer_dirichlet:
            lt += l0
            w, A, rs, ns, c = _charge(
                pos[0] / r0, pos[1] / r0, pos[2] / r0, l0, 0.0, h,
                centers, cos_caps, kappa, scale, n_el, codes, exps, coefs, mode, floor, w, A, clock, rs, ns,
            )
            code = c
        while code == RUNNING:
            if k >= cap:
                code = DONE_CAP
                break
            k += 1
            x0 = pos[0]
            x1 = pos[1]
            x2 = pos[2]
            s, inc, _r = _advance(pos, st, eps, dx, shell, ac, ar, outer_dirichlet)
            if inc > 0:
                # book the time at the boundary point nearest to the step's centre
                rr = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
                dL = inc * q
                lt += dL
                w, A, rs, ns, c = _charge(
                    x0 / rr, x1 / rr, x2 / rr, dL, 1.0 - rr, h,
                    centers, cos_caps, kappa, scale, n_el, codes, exps, coefs, mode, floor, w, A, clock, rs, ns,
                )
                if c != RUNNING:
                    code = c
                    break
            if s == MOVED:
                continue
            if s == ABSORBED_ANOMALY:
                dv = w * _eval_field(codes[2], exps[2], coefs[2], pos[0], pos[1], pos[2])
                code = DONE_ABSORBED
                break
            if s == ABSORBED_OUTER:
                dv = w * _eval_field(codes[3], exps[3], coefs[3], pos[0], pos[1], pos[2])
                code = DONE_ABSORBED
                break
            nev += 1
            if _electrode_of(pos, centers, cos_caps, n_el) >= 0:
                nrob += 1
                if nrob >= npmax:
                    code = DONE_NP
                    break
        robin[p] = rs
        neumann[p] = ns
        dirichlet[p] = dv
        steps[p] = k
        events[p] = nev
        robin_events[p] = nrob
        status[p] = code
        ltime[p] = lt


@nb.njit(cache=True)
def _calibration_batch(n, steps_per_path, eps, dx, seed, key, out_count, out_pull):
    # reflecting walk in the unit ball started on the boundary
    st = np.empty(4, dtype=np.uint64)
    pos = np.empty(3)
    ac = np.zeros(3)
    for p in range(n):
        _seed_stream(seed, key, p, st)
        pos[0] = 0.0
        pos[1] = 0.0
        pos[2] = 1.0
        cnt = 0
        pull = 0.0
        for k in range(steps_per_path):
            s, inc, dl = _advance(pos, st, eps, dx, 1e-300, ac, 0.0, False)
            cnt += inc
            pull += dl
        out_count[p] = cnt
        out_pull[p] = pull


@nb.njit(cache=True)
def _end_offset_batch(n, burn_in, window, horizon, eps, dx, q, seed, key, num, den):
    # count-weighted future (pull-back - count) local time over a horizon, per path
    st = np.empty(4, dtype=np.uint64)
    pos = np.empty(3)
    ac = np.zeros(3)
    m = burn_in + window + horizon
    inc = np.zeros(m, dtype=np.int64)
    cp = np.zeros(m + 1)
    cc = np.zeros(m + 1)
    for p in range(n):
        _seed_stream(seed, key, p, st)
        pos[0] = 0.0
        pos[1] = 0.0
        pos[2] = 1.0
        for k in range(m):
            s, c, dl = _advance(pos, st, eps, dx, 1e-300, ac, 0.0, False)
            inc[k] = c
            cp[k + 1] = cp[k] + dl
            cc[k + 1] = cc[k] + c * q
        a = 0.0
        b = 0.0
        for k in range(burn_in, burn_in + window):
            if inc[k] > 0:
                # pull-backs from step k on against counts after step k
                a += inc[k] * ((cp[k + horizon] - cp[k]) - (cc[k + horizon] - cc[k + 1]))
                b += inc[k]
        num[p] = a
        den[p] = b


# ---------------------------------------------------------------------------
# packing


def _pack_fields(data: BoundaryData):
    fields = [data.phi1, data.phi2, data.phi3, data.outer_dirichlet or Field.zero()]
    packed = [f.kernel_arrays() for f in fields]
    m = max(len(c) for _, _, c in packed)
    codes = np.zeros(4, dtype=np.int64)
    exps = np.zeros((4, m, 3), dtype=np.int64)
    coefs = np.zeros((4, m))
    for i, (code, e, c) in enumerate(packed):
        codes[i] = code
        exps[i, : len(c)] = e
        coefs[i, : len(c)] = c
    return codes, exps, coefs


def check_compatible(domain: DomainSpec, params: WalkParams) -> None:
    """Reject anomalies that reach into the reflection shell."""
    if domain.has_anomaly:
        gap = 1.0 - np.linalg.norm(domain.anomaly_center) - domain.anomaly_radius
        need = params.epsilon + 2.0 * params.delta_x + params.absorption_shell
        if gap <= need:
            raise GeometryError(
                f"anomaly is {gap:.3g} from the outer sphere; the walk needs more than {need:.3g}"
            )


@dataclass
class PathBatch:
    """Per-path outputs of :func:`run_paths` (arrays of length n)."""

    robin: np.ndarray
    neumann: np.ndarray
    dirichlet: np.ndarray
    steps: np.ndarray
    events: np.ndarray
    robin_events: np.ndarray
    status: np.ndarray
    local_time: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.robin + self.neumann + self.dirichlet

    @property
    def n_absorbed(self) -> int:
        return int(np.count_nonzero(self.status == DONE_ABSORBED))

    @property
    def n_capped(self) -> int:
        return int(np.count_nonzero(self.status == DONE_CAP))

    def __len__(self) -> int:
        return len(self.robin)


def run_paths(
    starts,
    domain: DomainSpec,
    data: BoundaryData,
    params: WalkParams,
    key: int = 0,
    first_index: int = 0,
) -> PathBatch:
    """Run one path from each row of ``starts``.

    Path ``i`` uses the stream ``(params.seed, key, first_index + i)``.
    Starting points on the outer sphere are allowed; the first step then
    happens inside the shell.
    """
    starts = np.ascontiguousarray(np.atleast_2d(np.asarray(starts, dtype=float)))
    check_compatible(domain, params)
    r = np.linalg.norm(starts, axis=1)
    if np.any(r > 1.0 + 1e-12):
        raise GeometryError("starting points must lie in the closed unit ball")
    if domain.has_anomaly:
        d_in = np.linalg.norm(starts - np.asarray(domain.anomaly_center), axis=1) - domain.anomaly_radius
        if np.any(d_in <= 0):
            raise GeometryError("starting points must lie outside the anomaly")
    starts = starts / np.maximum(r, 1.0)[:, None]
    centers, cos_caps, kappa, n_el, ac, ar = domain.kernel_arrays()
    scale = data.scale_for(domain)
    codes, exps, coefs = _pack_fields(data)
    q = params.delta_x**2 / (3.0 * params.epsilon) / params.resolved_scale()
    n = len(starts)
    out = PathBatch(
        np.zeros(n), np.zeros(n), np.zeros(n),
        np.zeros(n, np.int64), np.zeros(n, np.int64), np.zeros(n, np.int64),
        np.zeros(n, np.int64), np.zeros(n),
    )
    _walk_batch(
        starts, np.uint64(params.seed), np.uint64(key % 2**64), np.uint64(first_index),
        centers, cos_caps, kappa, scale, n_el, ac, ar,
        codes, exps, coefs, data.outer_dirichlet is not None,
        params.epsilon, params.delta_x, params.absorption_shell, q, params.resolved_start_offset(),
        0.5 * params.resolved_end_offset(),
        params.max_boundary_events, params.step_cap, params.mode_code, params.weight_floor,
        out.robin, out.neumann, out.dirichlet, out.steps, out.events, out.robin_events,
        out.status, out.local_time,
    )
    return out


# ---------------------------------------------------------------------------
# local-time calibration


def calibrate_local_time(
    epsilon: float,
    delta_x: float,
    n_paths: int = 2000,
    steps_per_path: int = 200_000,
    seed: int = 20240611,
) -> tuple[float, float]:
    """Ratio of counted to exact local time for a shell scheme.

    Runs reflecting walks in the unit ball from the north pole and compares
    the counted local time ``n (Δx)²/(3ε)`` with the pull-back local time
    ``Σ dl`` (see :func:`_advance`).

    Returns
    -------
    scale, stderr
        The ratio of the totals and its delta-method standard error.
    """
    if not 0 < delta_x < epsilon:
        raise ValueError("need 0 < delta_x < epsilon")
    count = np.zeros(n_paths, dtype=np.int64)
    pull = np.zeros(n_paths)
    _calibration_batch(
        n_paths, steps_per_path, epsilon, delta_x, np.uint64(seed), np.uint64(0xCA1), count, pull
    )
    lc = count * delta_x**2 / (3.0 * epsilon)
    ratio = lc.sum() / pull.sum()
    resid = lc - ratio * pull
    stderr = resid.std(ddof=1) * math.sqrt(n_paths) / pull.sum()
    return float(ratio), float(stderr)


def _frozen_key(epsilon: float, delta_x: float):
    return (round(epsilon, 12), round(delta_x, 12))


def calibrate_start_offset(
    epsilon: float,
    delta_x: float,
    n_paths: int = 200_000,
    steps_per_path: int = 200,
    seed: int = 20240612,
    scale: float | None = None,
) -> tuple[float, float]:
    """Local time a path started on the sphere fails to count.

    The difference between the pull-back local time and the scaled count
    settles within a few dozen steps and then stays constant, so short runs
    from the north pole measure it.

    Returns
    -------
    offset, stderr
        Mean of ``Σ dl - n (Δx)²/(3ε)/scale`` and its standard error.
    """
    if not 0 < delta_x < epsilon:
        raise ValueError("need 0 < delta_x < epsilon")
    if scale is None:
        scale = local_time_scale_for(epsilon, delta_x)
    count = np.zeros(n_paths, dtype=np.int64)
    pull = np.zeros(n_paths)
    _calibration_batch(
        n_paths, steps_per_path, epsilon, delta_x, np.uint64(seed), np.uint64(0x57A), count, pull
    )
    d = pull - count * delta_x**2 / (3.0 * epsilon) / scale
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(n_paths))


def calibrate_end_offset(
    epsilon: float,
    delta_x: float,
    n_paths: int = 2000,
    window: int = 60_000,
    horizon: int = 300,
    burn_in: int = 500,
    seed: int = 20240613,
    scale: float | None = None,
) -> tuple[float, float]:
    """Lead of the count over the pull-back local time at a counting step.

    A path that is killed, or discounted, at a counting step has counted
    more local time than its pull-backs will show: afterwards the
    pull-backs catch up by a fixed amount.  This measures that amount as
    the count-weighted mean over the steps of stationary reflecting walks of
    ``Σ dl`` from the step on minus the scaled count after it, over
    ``horizon`` steps.

    Returns
    -------
    offset, stderr
        The weighted mean and its delta-method standard error over paths.
    """
    if not 0 < delta_x < epsilon:
        raise ValueError("need 0 < delta_x < epsilon")
    if scale is None:
        scale = local_time_scale_for(epsilon, delta_x)
    q = delta_x**2 / (3.0 * epsilon) / scale
    num = np.zeros(n_paths)
    den = np.zeros(n_paths)
    _end_offset_batch(
        n_paths, burn_in, window, horizon, epsilon, delta_x, q, np.uint64(seed), np.uint64(0xE4D), num, den
    )
    offset = num.sum() / den.sum()
    resid = num - offset * den
    stderr = resid.std(ddof=1) * math.sqrt(n_paths) / den.sum()
    return float(offset), float(stderr)


@lru_cache(maxsize=None)
def end_offset_for(epsilon: float, delta_x: float) -> float:
    """Frozen end offset when available, otherwise a fresh measurement."""
    key = _frozen_key(epsilon, delta_x)
    if key in FROZEN_END_OFFSET:
        return FROZEN_END_OFFSET[key]
    offset, _ = calibrate_end_offset(epsilon, delta_x)
    return max(offset, 0.0)


@lru_cache(maxsize=None)
def start_offset_for(epsilon: float, delta_x: float) -> float:
    """Frozen start offset when available, otherwise a fresh measurement."""
    key = _frozen_key(epsilon, delta_x)
    if key in FROZEN_START_OFFSET:
        return FROZEN_START_OFFSET[key]
    offset, _ = calibrate_start_offset(epsilon, delta_x)
    return max(offset, 0.0)


@lru_cache(maxsize=None)
def local_time_scale_for(epsilon: float, delta_x: float) -> float:
    """Frozen calibration when available, otherwise a fresh measurement."""
    key = _frozen_key(epsilon, delta_x)
    if key in FROZEN_LOCAL_TIME_SCALE:
        return FROZEN_LOCAL_TIME_SCALE[key]
    scale, _ = calibrate_local_time(epsilon, delta_x)
    return scale


# ---------------------------------------------------------------------------
# single-path interface


@nb.njit(cache=True)
def _advance_py(pos, st, eps, dx, shell, ac, ar, outer_dirichlet):
    return _advance(pos, st, eps, dx, shell, ac, ar, outer_dirichlet)


def wos_step(
    state: WalkState,
    domain: DomainSpec,
    params: WalkParams,
    rng: PathRNG,
    outer_dirichlet: bool = False,
) -> tuple[WalkState, BoundaryEvent | None]:
    """Advance ``state`` by one step in place.

    Returns the state and the boundary event emitted by a pull-back, if any.
    Absorption sets ``terminated`` and ``absorption_point``.
    """
    if state.terminated:
        raise ValueError("path already terminated")
    _, _, _, _, ac, ar = domain.kernel_arrays()
    pos = np.array(state.position, dtype=float)
    status, inc, _ = _advance_py(
        pos, rng.state, params.epsilon, params.delta_x, params.absorption_shell, ac, ar, outer_dirichlet
    )
    state.position = pos
    state.step_index += 1
    state.local_time_counter += inc
    event = None
    if status in (ABSORBED_ANOMALY, ABSORBED_OUTER):
        state.terminated = True
        state.absorption_point = pos.copy()
    elif status == EXITED:
        dn = state.local_time_counter - state.last_counter
        state.last_counter = state.local_time_counter
        event = BoundaryEvent(
            pos.copy(), domain.classify_boundary_point(pos, 1e-9), local_time_value(dn, params), state.step_index
        )
    return state, event


STATUS_NAMES = {
    DONE_NP: "max_events",
    DONE_ABSORBED: "absorbed",
    DONE_KILLED: "killed",
    DONE_CAP: "step_cap",
}


def run_path(x0, domain: DomainSpec, data: BoundaryData, params: WalkParams, rng: PathRNG | None = None):
    """Run one path and return ``(robin_sum, neumann_sum, dirichlet_value, diagnostics)``.

    ``rng`` only selects the stream: its ``(seed, key, index)`` are reused,
    so the result equals row ``index`` of a :func:`run_paths` call.
    """
    if rng is None:
        rng = PathRNG(params.seed)
    batch = run_paths(
        np.asarray(x0, dtype=float)[None, :],
        domain,
        data,
        params.with_(seed=rng.seed),
        key=rng.key,
        first_index=rng.index,
    )
    if batch.status[0] == DONE_CAP:
        raise NonTerminationError(f"path exceeded {params.step_cap} steps")
    diagnostics = {
        "steps": int(batch.steps[0]),
        "boundary_events": int(batch.events[0]),
        "robin_events": int(batch.robin_events[0]),
        "local_time": float(batch.local_time[0]),
        "status": STATUS_NAMES[int(batch.status[0])],
    }
    return float(batch.robin[0]), float(batch.neumann[0]), float(batch.dirichlet[0]), diagnostics
