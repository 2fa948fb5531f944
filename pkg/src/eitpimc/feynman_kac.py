"""Potential and current estimates from reflecting-path functionals.

The potential at a point is the mean of the per-path sums produced by
:func:`eitpimc.stochastic.run_paths`.  Electrode currents use the Robin
identity ``du/dn = (φ1 - u)/z`` averaged over the cap.
"""

from __future__ import annotations

import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .boundary_data import BoundaryData
from .geometry import DomainSpec, Electrode, GeometryError
from .stochastic import (
    NonTerminationError,
    PathBatch,
    WalkParams,
    _next_uniform,
    _seed_stream,
    run_paths,
)

__all__ = [
    "CurrentMap",
    "ElectrodeQuadrature",
    "EstimatorResult",
    "current_from_potentials",
    "electrode_potential_profile",
    "estimate_potential",
    "voltage_to_current_map",
]

BLOCK = 20_000

# tags that keep the streams of different tasks apart
_TAG_POINT = 1
_TAG_PROFILE = 2
_TAG_CELL_WALK = 3
_TAG_CELL_START = 4


def _task_key(tag: int, a: int = 0, b: int = 0) -> int:
    return (tag << 56) | ((a & 0xFFFFFF) << 32) | (b & 0xFFFFFFFF)


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    stderr: float
    n_paths: int
    n_absorbed: int = 0
    mean_boundary_events: float = 0.0
    mean_steps: float = 0.0
    n_capped: int = 0
    mean_robin_events: float = 0.0

    def z_score(self, exact: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == exact else math.inf
        return (self.mean - exact) / self.stderr


@dataclass(frozen=True)
class CurrentMap:
    """Per-electrode currents with standard errors."""

    electrode_ids: tuple[int, ...]
    currents: np.ndarray
    stderr: np.ndarray
    n_paths: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(np.sum(self.currents))

    @property
    def total_stderr(self) -> float:
        return float(np.sqrt(np.sum(self.stderr**2)))


def _summarize(batch: PathBatch) -> EstimatorResult:
    n = len(batch)
    v = batch.values
    if batch.n_capped == n:
        raise NonTerminationError("every path hit the step cap")
    return EstimatorResult(
        mean=float(np.mean(v)),
        stderr=float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        n_paths=n,
        n_absorbed=batch.n_absorbed,
        mean_boundary_events=float(np.mean(batch.events)),
        mean_steps=float(np.mean(batch.steps)),
        n_capped=batch.n_capped,
        mean_robin_events=float(np.mean(batch.robin_events)),
    )


def _concat(batches: list[PathBatch]) -> PathBatch:
    return PathBatch(*(np.concatenate([getattr(b, f) for b in batches]) for f in PathBatch.__dataclass_fields__))


# ---------------------------------------------------------------------------
# task execution


def _run_task(task):
    kind, payload, domain, data, params = task
    if kind == "point":
        x, key, first, n = payload
        return run_paths(np.broadcast_to(x, (n, 3)), domain, data, params, key, first)
    l_index, cell, key_walk, key_start, first, n = payload
    starts = sample_cell_points(domain.electrodes[l_index], cell, n, params.seed, key_start, first)
    batch = run_paths(starts, domain, data, params, key_walk, first)
    phi = data.phi1_at(domain, domain.electrodes[l_index].id, starts)
    return batch, phi


def _execute(tasks, workers: int):
    if workers <= 1 or len(tasks) == 1:
        return [_run_task(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_run_task, tasks, chunksize=1))


def _blocks(n: int, size: int = BLOCK):
    return [(s, min(size, n - s)) for s in range(0, n, size)]


def _check_start(x, domain: DomainSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("x must be a 3-vector")
    r = np.linalg.norm(x)
    if r > 1.0 + 1e-9:
        raise GeometryError(f"point {x.tolist()} lies outside the unit ball")
    if domain.has_anomaly:
        if np.linalg.norm(x - np.asarray(domain.anomaly_center)) <= domain.anomaly_radius:
            raise GeometryError(f"point {x.tolist()} lies inside the anomaly")
    return x / max(r, 1.0)


def estimate_potential(
    x,
    domain: DomainSpec,
    data: BoundaryData,
    params: WalkParams,
    workers: int = 1,
    key: int = 0,
) -> EstimatorResult:
    """Monte Carlo estimate of ``u(x)`` from ``params.n_paths`` paths.

    Points on the outer sphere are used as they are: the first step is then a
    shell step.  ``key`` selects an independent family of path streams.
    """
    x = _check_start(x, domain)
    if data.is_zero:
        return EstimatorResult(0.0, 0.0, params.n_paths)
    tasks = [
        ("point", (x, _task_key(_TAG_POINT, 0, key), first, n), domain, data, params)
        for first, n in _blocks(params.n_paths)
    ]
    return _summarize(_concat(_execute(tasks, workers)))


def electrode_potential_profile(
    electrode_id: int,
    points,
    domain: DomainSpec,
    data: BoundaryData,
    params: WalkParams,
    workers: int = 1,
) -> list[EstimatorResult]:
    """Independent potential estimates at points of one electrode."""
    e = domain.electrode(electrode_id)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = np.asarray(e.center)
    pts_n = pts / np.linalg.norm(pts, axis=1)[:, None]
    ang = np.arctan2(np.linalg.norm(np.cross(pts_n, c), axis=1), pts_n @ c)
    if np.any(np.abs(np.linalg.norm(pts, axis=1) - 1.0) > 1e-9) or np.any(ang > e.cap_radius + 1e-12):
        raise GeometryError(f"profile points must lie on electrode {electrode_id}")
    tasks = []
    for i, p in enumerate(pts):
        for first, n in _blocks(params.n_paths):
            key = _task_key(_TAG_PROFILE, electrode_id, i)
            tasks.append(("point", (p, key, first, n), domain, data, params))
    results = _execute(tasks, workers)
    per_point = len(_blocks(params.n_paths))
    out = []
    for i in range(len(pts)):
        if data.is_zero:
            out.append(EstimatorResult(0.0, 0.0, params.n_paths))
        else:
            out.append(_summarize(_concat(results[i * per_point : (i + 1) * per_point])))
    return out


# ---------------------------------------------------------------------------
# electrode quadrature


@dataclass(frozen=True)
class ElectrodeQuadrature:
    """Equal-area polar cells on a cap: ``rings`` annuli times ``sectors`` wedges."""

    rings: int = 6
    sectors: int = 12

    def __post_init__(self):
        if self.rings < 1 or self.sectors < 1:
            raise ValueError("rings and sectors must be >= 1")

    @property
    def n_cells(self) -> int:
        return self.rings * self.sectors

    def cells(self, electrode: Electrode):
        """``(cos_outer, cos_inner, phi_start, phi_end)`` for every cell."""
        c_rim = math.cos(electrode.cap_radius)
        out = []
        for i in range(self.rings):
            cos_in = 1.0 - i / self.rings * (1.0 - c_rim)
            cos_out = 1.0 - (i + 1) / self.rings * (1.0 - c_rim)
            for j in range(self.sectors):
                p0 = 2.0 * math.pi * j / self.sectors
                p1 = 2.0 * math.pi * (j + 1) / self.sectors
                out.append((cos_out, cos_in, p0, p1))
        return out

    def nodes(self, electrode: Electrode):
        """Cell centres (in ``cos ρ`` and azimuth) and cell areas."""
        pts, w = [], []
        frame = electrode_frame(electrode)
        for cos_out, cos_in, p0, p1 in self.cells(electrode):
            ct = 0.5 * (cos_out + cos_in)
            pts.append(_cap_point(frame, ct, 0.5 * (p0 + p1)))
            w.append((cos_in - cos_out) * (p1 - p0))
        return np.array(pts), np.array(w)


def electrode_frame(e: Electrode) -> np.ndarray:
    """Rows: centre, and two unit tangents completing a right-handed frame."""
    c = np.asarray(e.center, dtype=float)
    a = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = a - (a @ c) * c
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(c, t1)
    return np.array([c, t1, t2])


def _cap_point(frame, cos_rho, phi):
    s = math.sqrt(max(0.0, 1.0 - cos_rho * cos_rho))
    return cos_rho * frame[0] + s * (math.cos(phi) * frame[1] + math.sin(phi) * frame[2])


@nb.njit(cache=True)
def _cell_points(n, seed, key, first, cos_out, cos_in, p0, p1, frame, out):
    st = np.empty(4, dtype=np.uint64)
    for i in range(n):
        _seed_stream(seed, key, first + i, st)
        ct = cos_out + (cos_in - cos_out) * _next_uniform(st)
        ph = p0 + (p1 - p0) * _next_uniform(st)
        s = math.sqrt(max(0.0, 1.0 - ct * ct))
        cp = math.cos(ph)
        sp = math.sin(ph)
        for k in range(3):
            out[i, k] = ct * frame[0, k] + s * (cp * frame[1, k] + sp * frame[2, k])
        r = math.sqrt(out[i, 0] ** 2 + out[i, 1] ** 2 + out[i, 2] ** 2)
        for k in range(3):
            out[i, k] /= r


def sample_cell_points(electrode: Electrode, cell, n: int, seed: int, key: int, first: int = 0) -> np.ndarray:
    """Area-uniform points in one quadrature cell."""
    out = np.empty((n, 3))
    cos_out, cos_in, p0, p1 = cell
    _cell_points(
        n, np.uint64(seed), np.uint64(key), np.uint64(first), cos_out, cos_in, p0, p1,
        electrode_frame(electrode), out,
    )
    return out


# ---------------------------------------------------------------------------
# currents


def current_from_potentials(
    electrode_id: int,
    potentials,
    data: BoundaryData,
    domain: DomainSpec,
    points,
    weights,
) -> tuple[float, float]:
    """Electrode current from potentials at quadrature nodes.

    ``J = (1/|E|) Σ w_i (φ1(x_i) - u_i)/z``.  ``potentials`` holds
    :class:`EstimatorResult` objects or plain numbers (zero error).  Nodes
    are treated as independent when propagating the error.
    """
    if len(potentials) == 0:
        raise ValueError("empty quadrature")
    e = domain.electrode(electrode_id)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    if not (len(pts) == len(w) == len(potentials)):
        raise ValueError("points, weights and potentials must have equal length")
    u = np.array([p.mean if isinstance(p, EstimatorResult) else float(p) for p in potentials])
    se = np.array([p.stderr if isinstance(p, EstimatorResult) else 0.0 for p in potentials])
    phi = data.phi1_at(domain, electrode_id, pts)
    z = e.contact_impedance
    J = float(np.sum(w * (phi - u)) / z / e.area)
    err = float(np.sqrt(np.sum((w * se) ** 2)) / z / e.area)
    return J, err


def voltage_to_current_map(
    domain: DomainSpec,
    data: BoundaryData,
    params: WalkParams,
    quadrature: ElectrodeQuadrature = ElectrodeQuadrature(),
    workers: int = 1,
) -> CurrentMap:
    """Currents on every electrode.

    Each electrode gets ``params.n_paths`` paths, split evenly over the
    equal-area cells of ``quadrature``.  Every path starts at an area-uniform
    point of its cell, so ``(φ1 - u)`` is averaged over the cap without
    node-placement error.  Results do not depend on ``workers``.
    """
    if not domain.electrodes:
        raise ValueError("the domain has no electrodes")
    ncell = quadrature.n_cells
    per_cell = [params.n_paths // ncell + (1 if c < params.n_paths % ncell else 0) for c in range(ncell)]
    if min(per_cell) < 2:
        raise ValueError(f"n_paths must be at least {2 * ncell} for {ncell} cells")
    tasks, layout = [], []
    for li, e in enumerate(domain.electrodes):
        for ci, cell in enumerate(quadrature.cells(e)):
            kw = _task_key(_TAG_CELL_WALK, e.id, ci)
            ks = _task_key(_TAG_CELL_START, e.id, ci)
            for first, n in _blocks(per_cell[ci]):
                tasks.append(("cell", (li, cell, kw, ks, first, n), domain, data, params))
                layout.append((li, ci))
    results = _execute(tasks, workers)

    L = len(domain.electrodes)
    J = np.zeros(L)
    var = np.zeros(L)
    steps = np.zeros(L)
    robin_events = np.zeros(L)
    capped = np.zeros(L, dtype=np.int64)
    absorbed = np.zeros(L, dtype=np.int64)
    grouped: dict[tuple[int, int], list] = {}
    for (li, ci), res in zip(layout, results):
        grouped.setdefault((li, ci), []).append(res)
    for (li, ci), parts in grouped.items():
        batch = _concat([b for b, _ in parts])
        phi = np.concatenate([p for _, p in parts])
        e = domain.electrodes[li]
        flux = (phi - batch.values) / e.contact_impedance
        frac = 1.0 / ncell  # equal-area cells
        J[li] += frac * np.mean(flux)
        var[li] += frac**2 * np.var(flux, ddof=1) / len(flux)
        steps[li] += np.sum(batch.steps)
        robin_events[li] += np.sum(batch.robin_events)
        capped[li] += batch.n_capped
        absorbed[li] += batch.n_absorbed
    n_per = np.full(L, params.n_paths)
    diagnostics = {
        "mean_steps": (steps / n_per).tolist(),
        "mean_robin_events": (robin_events / n_per).tolist(),
        "n_capped": capped.tolist(),
        "n_absorbed": absorbed.tolist(),
    }
    return CurrentMap(
        tuple(e.id for e in domain.electrodes), J, np.sqrt(var), n_per, diagnostics
    )
