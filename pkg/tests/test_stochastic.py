import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from eitpimc.boundary_data import BoundaryData, Field
from eitpimc.geometry import GeometryError, default_domain
from eitpimc.oracle import annulus_radial_case, dirichlet_polynomial_case, robin_sphere_case
from eitpimc.stochastic import (
    FROZEN_END_OFFSET,
    FROZEN_LOCAL_TIME_SCALE,
    FROZEN_START_OFFSET,
    NonTerminationError,
    PathRNG,
    WalkParams,
    WalkState,
    calibrate_end_offset,
    calibrate_local_time,
    calibrate_start_offset,
    check_compatible,
    local_time_increment,
    local_time_value,
    run_path,
    run_paths,
    sample_uniform_direction,
    wos_step,
)


def test_local_time_increment_values():
    p = WalkParams()
    assert local_time_increment(0.3, False, p) == 0
    assert local_time_increment(p.delta_x, True, p) == 1
    assert local_time_increment(2 * p.delta_x, True, p) == 4
    with pytest.raises(ValueError):
        local_time_increment(0.3, True, p)


def test_local_time_value():
    p = WalkParams(epsilon=0.01, delta_x=0.005)
    assert_allclose(local_time_value(3, p), 3 * 0.005**2 / 0.03)
    with pytest.raises(ValueError):
        local_time_value(-1, p)


@pytest.mark.parametrize(
    "kw",
    [dict(epsilon=0.01, delta_x=0.02), dict(n_paths=0), dict(seed=-1), dict(robin_mode="bogus"), dict(step_cap=0),
     dict(start_local_time=-1.0), dict(end_local_time=-1.0)],
)
def test_walk_params_validation(kw):
    with pytest.raises(ValueError):
        WalkParams(**kw)


def test_rng_is_reproducible_and_stream_specific():
    a = [PathRNG(1, 2, 3).uniform() for _ in range(3)]
    b = [PathRNG(1, 2, 3).uniform() for _ in range(3)]
    assert a == b
    r = PathRNG(1, 2, 3)
    seq = [r.uniform() for _ in range(5)]
    assert len(set(seq)) == 5 and all(0 <= u < 1 for u in seq)
    assert PathRNG(1, 2, 4).uniform() != PathRNG(1, 2, 3).uniform()
    assert PathRNG(1, 3, 3).uniform() != PathRNG(1, 2, 3).uniform()


def test_uniform_directions():
    r = PathRNG(5)
    d = np.array([sample_uniform_direction(r) for _ in range(20000)])
    assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    assert_allclose(d.mean(axis=0), 0.0, atol=0.03)
    assert_allclose(d.T @ d / len(d), np.eye(3) / 3, atol=0.02)


def _walk(x0, domain, params, rng, n_steps, outer_dirichlet=False):
    state = WalkState(np.asarray(x0, float))
    events, counters, positions = [], [0], [state.position.copy()]
    for _ in range(n_steps):
        if state.terminated:
            break
        prev = state.position.copy()
        state, ev = wos_step(state, domain, params, rng, outer_dirichlet)
        counters.append(state.local_time_counter)
        positions.append(state.position.copy())
        if ev is not None:
            events.append((prev, ev))
    return state, events, np.array(counters)


def test_wos_step_invariants():
    dom = default_domain()
    p = WalkParams()
    state, events, counters = _walk((0, 0, 0.98), dom, p, PathRNG(11), 20000)
    assert len(events) > 10
    inc = np.diff(counters)
    assert set(np.unique(inc)) <= {0, 1, 4}
    for prev, ev in events:
        assert abs(np.linalg.norm(ev.point) - 1.0) <= 1e-12
        assert np.linalg.norm(ev.point - prev) <= 4 * p.delta_x + 1e-12
        assert ev.local_time_increment >= 0
    kinds = {ev.region.kind for _, ev in events}
    assert kinds <= {"robin", "neumann"}


def test_pull_back_lands_where_the_jump_crosses_the_sphere():
    dom = default_domain()
    p = WalkParams()
    n_exits = 0
    for index in range(40):
        state = WalkState(np.array([0.0, 0.0, 1.0 - 0.2 * p.delta_x]))
        v = sample_uniform_direction(PathRNG(4, 0, index))
        prev = state.position.copy()
        state, ev = wos_step(state, dom, p, PathRNG(4, 0, index))
        if ev is None:
            assert_allclose(state.position, prev + 2 * p.delta_x * v, atol=1e-14)
            continue
        n_exits += 1
        t = float(np.dot(ev.point - prev, v))
        assert 0 < t <= 2 * p.delta_x
        assert_allclose(ev.point, prev + t * v, atol=1e-12)
    assert n_exits > 5


def test_wos_step_loop_matches_compiled_kernel():
    # Neumann-only problem: the path functional is the plain sum of g/2 dL
    case = annulus_radial_case(0.5, 1.0)
    p = WalkParams(n_paths=1, seed=3)
    beta = p.resolved_scale()
    for index in range(5):
        rng = PathRNG(3, 0, index)
        state, events, _ = _walk((0.75, 0, 0), case.domain, p, rng, 10**6)
        assert state.terminated
        # every counted step is charged, including those after the last pull-back
        manual = 0.5 * 1.0 * local_time_value(state.local_time_counter, p) / beta
        assert sum(ev.local_time_increment for _, ev in events) <= local_time_value(state.local_time_counter, p)
        robin, neumann, dirichlet, diag = run_path((0.75, 0, 0), case.domain, case.data, p, PathRNG(3, 0, index))
        assert diag["status"] == "absorbed"
        assert diag["steps"] == state.step_index
        assert_allclose(neumann, manual, rtol=1e-12)
        assert robin == 0.0 and dirichlet == 0.0


def test_zero_data_gives_zero(domain):
    r, n, d, diag = run_path((0, 0, 0.5), domain, BoundaryData(phi1=Field.zero()), WalkParams(seed=1))
    assert (r, n, d) == (0.0, 0.0, 0.0)
    assert diag["steps"] > 0


def test_run_paths_blocks_are_independent(domain):
    p = WalkParams(seed=21)
    rng = np.random.default_rng(0)
    starts = rng.uniform(-0.5, 0.5, size=(12, 3))
    full = run_paths(starts, domain, BoundaryData(), p, key=9)
    a = run_paths(starts[:5], domain, BoundaryData(), p, key=9, first_index=0)
    b = run_paths(starts[5:], domain, BoundaryData(), p, key=9, first_index=5)
    assert_array_equal(full.values, np.concatenate([a.values, b.values]))
    assert_array_equal(full.steps, np.concatenate([a.steps, b.steps]))
    again = run_paths(starts, domain, BoundaryData(), p, key=9)
    assert_array_equal(full.values, again.values)


def test_step_cap_signals_non_termination(domain):
    with pytest.raises(NonTerminationError):
        run_path((0, 0, 0.5), domain, BoundaryData(), WalkParams(step_cap=5))


def test_anomaly_must_clear_the_shell():
    p = WalkParams(epsilon=0.01, delta_x=0.005)
    check_compatible(default_domain(0.5), p)
    with pytest.raises(GeometryError):
        check_compatible(default_domain(0.985), p)


def test_starts_are_validated(domain):
    with pytest.raises(GeometryError):
        run_paths([[0, 0, 1.5]], domain, BoundaryData(), WalkParams())
    with pytest.raises(GeometryError):
        run_paths([[0, 0, 0.2]], default_domain(0.5), BoundaryData(), WalkParams())


def test_dirichlet_wos_from_origin():
    # pure Dirichlet: classic first-hit WOS, harmonic extension is 0 at the centre
    case = dirichlet_polynomial_case("x2-y2")
    b = run_paths(np.zeros((200_000, 3)), case.domain, case.data, WalkParams(seed=5))
    v = b.values
    z = v.mean() / (v.std(ddof=1) / math.sqrt(len(v)))
    assert abs(z) <= 3
    assert b.n_absorbed == len(v)


@settings(max_examples=10, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))
def test_dirichlet_wos_any_point(x, y, z):
    case = dirichlet_polynomial_case("xy")
    b = run_paths(np.tile([x, y, z], (20_000, 1)), case.domain, case.data, WalkParams(seed=8))
    v = b.values
    zs = (v.mean() - x * y) / (v.std(ddof=1) / math.sqrt(len(v)) + 1e-15)
    assert abs(zs) <= 4.5


def test_calibration_is_consistent_with_frozen_value():
    ratio, err = calibrate_local_time(0.02, 0.01, n_paths=200, steps_per_path=20_000, seed=99)
    assert abs(ratio - FROZEN_LOCAL_TIME_SCALE[(0.02, 0.01)]) <= 5 * err
    assert 0 < err < 0.01


def test_survival_and_weighted_modes_agree():
    case = robin_sphere_case(1, 2.0)
    x = np.tile([0, 0, 0.9], (1, 1))
    base = WalkParams(epsilon=0.02, delta_x=0.01, max_boundary_events=10**6, seed=4)
    w = run_paths(np.repeat(x, 1500, axis=0), case.domain, case.data, base.with_(robin_mode="weighted", weight_floor=1e-7))
    s = run_paths(np.repeat(x, 15000, axis=0), case.domain, case.data, base.with_(robin_mode="survival"))
    mw, sw = w.values.mean(), w.values.std(ddof=1) / math.sqrt(len(w))
    ms, ss = s.values.mean(), s.values.std(ddof=1) / math.sqrt(len(s))
    assert abs(mw - ms) <= 4 * math.hypot(sw, ss)
    assert sw * math.sqrt(len(w)) < ss * math.sqrt(len(s))


def test_start_offset_is_consistent_with_frozen_value():
    off, err = calibrate_start_offset(0.02, 0.01, n_paths=50_000, seed=17)
    assert abs(off - FROZEN_START_OFFSET[(0.02, 0.01)]) <= 5 * err
    # about 0.63 epsilon
    assert 0.5 < off / 0.02 < 0.75


def test_start_offset_resolution():
    assert WalkParams().resolved_start_offset() == FROZEN_START_OFFSET[(0.01, 0.005)]
    assert WalkParams(local_time_scale=1.3).resolved_start_offset() == 0.0
    assert WalkParams(local_time_scale=1.3, start_local_time=0.1).resolved_start_offset() == 0.1
    assert WalkParams().resolved_end_offset() == FROZEN_END_OFFSET[(0.01, 0.005)]
    assert WalkParams(local_time_scale=1.3).resolved_end_offset() == 0.0
    assert WalkParams(local_time_scale=1.3, end_local_time=0.1).resolved_end_offset() == 0.1


def test_boundary_starts_are_charged_the_offset():
    # Neumann-only annulus: no draws at charges, so the streams stay aligned
    case = annulus_radial_case(0.5, 1.0)
    p = WalkParams(seed=6)
    l0 = p.resolved_start_offset()
    for x, extra in (((1.0, 0.0, 0.0), l0), ((0.9, 0.0, 0.0), 0.0)):
        a = run_paths([x] * 20, case.domain, case.data, p)
        b = run_paths([x] * 20, case.domain, case.data, p.with_(start_local_time=0.0))
        assert_array_equal(a.steps, b.steps)
        assert_allclose(a.local_time - b.local_time, extra, atol=1e-12)
        assert_allclose(a.neumann - b.neumann, 0.5 * extra, atol=1e-12)


def test_end_offset_is_consistent_with_frozen_value():
    off, err = calibrate_end_offset(0.02, 0.01, n_paths=300, seed=18)
    assert abs(off - FROZEN_END_OFFSET[(0.02, 0.01)]) <= 5 * err
    # about half of epsilon
    assert 0.4 < off / 0.02 < 0.6


def test_end_offset_leaves_neumann_problems_alone():
    case = annulus_radial_case(0.5, 1.0)
    p = WalkParams(seed=6)
    a = run_paths([(0.9, 0.0, 0.0)] * 20, case.domain, case.data, p)
    b = run_paths([(0.9, 0.0, 0.0)] * 20, case.domain, case.data, p.with_(end_local_time=0.3))
    assert_array_equal(a.values, b.values)


def test_robin_hazard_correction_is_clipped_at_zero():
    # kappa (depth + end offset / 2) >= 1 switches the killing off entirely
    case = robin_sphere_case(1, 2.0)
    p = WalkParams(seed=2, robin_mode="weighted", max_boundary_events=50, end_local_time=1.0)
    b = run_paths([(0.0, 0.0, 0.9)] * 10, case.domain, case.data, p)
    assert_array_equal(b.robin, 0.0)
    assert np.all(b.robin_events == 50)
