import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from eitpimc.geometry import (
    DIRICHLET_ANOMALY,
    NEUMANN_OFF,
    BoundaryRegion,
    DomainSpec,
    Electrode,
    GeometryError,
    cap_area,
    default_domain,
    default_electrodes,
    geodesic_distance,
)

from conftest import random_unit


@pytest.mark.parametrize(
    "x, r0, expected",
    [((0, 0, 0), 0.0, 1.0), ((0.75, 0, 0), 0.5, 0.25), ((0, 0.9, 0), 0.5, 0.1)],
)
def test_distance_to_boundary_examples(x, r0, expected):
    assert_allclose(default_domain(r0).distance_to_boundary(x), expected, atol=1e-15)


@pytest.mark.parametrize("x", [(0, 0, 1.2), (0.1, 0.1, 0.1), (1, 0, 0)])
def test_distance_to_boundary_rejects_outside(x):
    with pytest.raises(GeometryError):
        default_domain(0.5).distance_to_boundary(x)


def test_classify_examples(domain):
    assert domain.classify_boundary_point((0, 0, 1)) == BoundaryRegion.robin(1)
    assert domain.classify_boundary_point((1, 0, 0)) == NEUMANN_OFF
    assert default_domain(0.5).classify_boundary_point((0, 0.5, 0)) == DIRICHLET_ANOMALY
    with pytest.raises(GeometryError):
        domain.classify_boundary_point((0, 0, 0.5))


def test_projection_examples(domain):
    p, n = domain.project_to_outer_boundary((0, 0, 1.01))
    assert_allclose(p, (0, 0, 1))
    assert_allclose(n, (0, 0, 1))
    p, n = domain.project_to_outer_boundary(1.01 * np.array([0.6, 0.8, 0]))
    assert_allclose(p, (0.6, 0.8, 0))
    assert_allclose(n, (0.6, 0.8, 0))
    p, _ = domain.project_to_outer_boundary((0, 0, 0.999))
    assert_allclose(p, (0, 0, 1))
    with pytest.raises(GeometryError):
        domain.project_to_outer_boundary((0, 0, 0))


def test_default_layout():
    es = default_electrodes()
    assert [e.id for e in es] == list(range(1, 9))
    for k, e in enumerate(es):
        a = math.radians(45 * k)
        assert_allclose(e.center, (0, math.sin(a), math.cos(a)), atol=1e-15)
        assert e.cap_radius == 0.2 and e.contact_impedance == 0.5
    # a quarter turn about x maps the layout to itself
    R = np.array([[1, 0, 0], [0, 0, 1], [0, -1, 0]])
    C = np.array([e.center for e in es])
    D = geodesic_distance(C[:, None, :] @ R.T, C[None, :, :])
    assert_allclose(D.min(axis=1), 0, atol=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(center=(0, 0, 2)),
        dict(center=(0, 0, 1), cap_radius=0.0),
        dict(center=(0, 0, 1), contact_impedance=-1.0),
    ],
)
def test_electrode_validation(kwargs):
    with pytest.raises(GeometryError):
        Electrode(1, **kwargs)


def test_domain_validation():
    with pytest.raises(GeometryError):
        default_domain(0.6, (0.5, 0, 0))
    with pytest.raises(GeometryError):
        DomainSpec((Electrode(1, (0, 0, 1)), Electrode(2, (0, math.sin(0.3), math.cos(0.3)))))
    with pytest.raises(GeometryError):
        DomainSpec((Electrode(1, (0, 0, 1)), Electrode(1, (0, 0, -1))))


def test_cap_area():
    assert_allclose(cap_area(math.pi), 4 * math.pi)
    assert_allclose(cap_area(0.2), 2 * math.pi * (1 - math.cos(0.2)))
    assert_allclose(default_electrodes()[0].area, cap_area(0.2))


def test_classification_partition(domain):
    rng = np.random.default_rng(0)
    y = random_unit(rng, 10_000)
    idx = domain.electrode_index(y)
    C = np.array([e.center for e in domain.electrodes])
    brute = geodesic_distance(y[:, None, :], C[None, :, :]) <= 0.2
    assert np.all(brute.sum(axis=1) <= 1)
    expected = np.where(brute.any(axis=1), brute.argmax(axis=1), -1)
    assert np.array_equal(idx, expected)
    for k in rng.choice(len(y), 300, replace=False):
        tag = domain.classify_boundary_point(y[k])
        assert (tag.kind == "robin") == (idx[k] >= 0)
        if idx[k] >= 0:
            assert tag.electrode == idx[k] + 1


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.0, 0.99),
    st.floats(-1, 1),
    st.floats(0, 2 * math.pi),
    st.floats(0.05, 0.45),
)
def test_inscribed_ball_inside_domain(r, cos_t, phi, r0):
    dom = default_domain(r0)
    s = math.sqrt(1 - cos_t**2)
    x = r * np.array([s * math.cos(phi), s * math.sin(phi), cos_t])
    if not dom.contains(x):
        return
    d = dom.distance_to_boundary(x)
    pts = x + d * random_unit(np.random.default_rng(1), 64) * (1 - 1e-9)
    assert np.all(np.linalg.norm(pts, axis=1) <= 1.0 + 1e-12)
    assert np.all(np.linalg.norm(pts, axis=1) >= r0 - 1e-12)
