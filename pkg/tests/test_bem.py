import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from eitpimc.bem import (
    DenseSystem,
    MeshParams,
    ReferenceSolution,
    SingularSystemError,
    SurfaceMesh,
    assemble,
    build_global_mesh,
    build_graded_electrode_mesh,
    double_layer_row_sums,
    greens_function,
    icosphere,
    interior_potential,
    solve,
    solve_reference,
)
from eitpimc.bem.mesh import cap_ring_edges, layer_widths
from eitpimc.boundary_data import BoundaryData, Field
from eitpimc.geometry import ROBIN, GeometryError, cap_area, default_domain, geodesic_distance
from eitpimc.oracle import annulus_radial_case, dirichlet_polynomial_case

SMALL = MeshParams(depth=3, rings=(4, 3, 3, 2), sectors=24)


@pytest.fixture(scope="module")
def small_mesh():
    return build_global_mesh(default_domain(), SMALL)


@pytest.fixture(scope="module")
def sphere_mesh():
    # no electrodes: a plain projected icosphere
    return build_global_mesh(default_domain().__class__(()), MeshParams(depth=3))


# -- mesh -----------------------------------------------------------------


@pytest.mark.parametrize("depth", [0, 1, 3])
def test_icosphere_counts(depth):
    V, F = icosphere(depth)
    assert len(F) == 20 * 4**depth
    assert len(V) == 10 * 4**depth + 2
    assert_allclose(np.linalg.norm(V, axis=1), 1.0, atol=1e-15)


def test_layer_widths():
    w = layer_widths(0.1, 5, 0.75, toward_end=True)
    assert_allclose(w.sum(), 0.1)
    assert np.all(np.diff(w) < 0)
    assert np.all(np.diff(layer_widths(0.1, 5, 0.75, toward_end=False)) > 0)


def test_ring_edges_are_graded_towards_the_rim():
    p = MeshParams()
    e = cap_ring_edges(0.2, p)
    assert len(e) == sum(p.rings) + 1
    assert np.all(np.diff(e) > 0)
    m1, m2, m3, _ = p.rings
    assert e[m1] == p.r1 and e[m1 + m2] == 0.2 and e[m1 + m2 + m3] == p.r2 and e[-1] == p.r_ext
    w = np.diff(e)
    k = m1 + m2
    # the two rings touching the electrode rim are the narrowest of layers 2 and 3
    assert w[k - 1] == w[m1:k].min() and w[k] == w[k : k + m3].min()
    with pytest.raises(GeometryError):
        cap_ring_edges(0.3, p)


def test_cap_mesh_regions():
    e = default_domain().electrode(2)
    geo, region, ids = build_graded_electrode_mesh(e, SMALL)
    area = ((np.cos(geo[:, 9]) - np.cos(geo[:, 10])) * (geo[:, 12] - geo[:, 11]))
    assert_allclose(area[region == ROBIN].sum(), cap_area(0.2), rtol=1e-12)
    assert_allclose(area.sum(), cap_area(SMALL.r_ext), rtol=1e-12)
    assert set(ids[region == ROBIN]) == {2}


def test_global_mesh_tiles_the_sphere(small_mesh):
    assert_allclose(small_mesh.area_sum, 4 * math.pi, rtol=1e-12)
    assert set(np.unique(small_mesh.kind)) == {0, 1, 2}
    dom = default_domain()
    for e in dom.electrodes:
        m = small_mesh.electrode_mask(e.id)
        assert_allclose(small_mesh.area[m].sum(), e.area, rtol=1e-12)
        assert np.all(geodesic_distance(small_mesh.centroid[m], np.asarray(e.center)[None]) < 0.2)


def test_rim_edges_follow_the_circle(small_mesh):
    rim = np.nonzero(small_mesh.kind == 2)[0]
    assert len(rim) > 0
    g = small_mesh.geo[rim]
    from eitpimc.bem.mesh import _rim_points

    for s in np.linspace(0, 1, 7):
        y, _ = _rim_points(g, s, 0.0)
        assert_allclose(geodesic_distance(y, g[:, 0:3]), SMALL.r_ext, atol=1e-12)


def test_default_mesh_size_at_depth_5():
    m = build_global_mesh(default_domain(), MeshParams(depth=5))
    assert 2e4 <= len(m) <= 1e5
    assert m.area_defect < 1e-12


def test_mesh_dump_round_trip(small_mesh, tmp_path):
    path = tmp_path / "mesh.txt"
    small_mesh.dump(path)
    back = SurfaceMesh.load(path)
    assert back.params == small_mesh.params
    assert np.array_equal(back.kind, small_mesh.kind)
    assert_allclose(back.geo, small_mesh.geo, rtol=0, atol=0)
    assert_allclose(back.area, small_mesh.area, rtol=1e-15)
    assert np.array_equal(back.region, small_mesh.region)
    assert np.array_equal(back.electrode, small_mesh.electrode)


def test_mesh_rejects_offset_anomaly():
    with pytest.raises(GeometryError):
        build_global_mesh(default_domain(0.3, (0.1, 0, 0)), SMALL)


# -- kernels and quadrature ----------------------------------------------


def test_image_kernel_vanishes_on_the_anomaly():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(20, 3))
    y = (0.5 + 1e-15) * v / np.linalg.norm(v, axis=1)[:, None]
    x = np.array([0.1, 0.7, 0.2])
    G, _ = greens_function(x, y, 0.5)
    assert_allclose(G, 0.0, atol=1e-13)
    G0, _ = greens_function(x, y, 0.0)
    assert np.all(G0 > 0)


def test_double_layer_row_sums_on_sphere(sphere_mesh):
    rs = double_layer_row_sums(sphere_mesh)
    assert_allclose(rs, -0.5, atol=1e-4)


def test_double_layer_row_sums_with_caps(small_mesh):
    rows = np.arange(0, len(small_mesh), 7)
    assert_allclose(double_layer_row_sums(small_mesh, rows), -0.5, atol=2e-4)


def test_layer_potentials_of_constants(small_mesh):
    # inside the unit sphere the single layer of 1 is 1 and the double layer of 1 is -1
    n = len(small_mesh)
    x = np.array([[0.0, 0.0, 0.0], [0.3, -0.4, 0.5], [0.0, 0.0, 0.9]])
    sol = ReferenceSolution(small_mesh, np.zeros(n), np.ones(n), (), np.zeros(0), 0, 1, n, 1)
    assert_allclose(interior_potential(x, sol), 1.0, atol=2e-4)
    sol = ReferenceSolution(small_mesh, np.ones(n), np.zeros(n), (), np.zeros(0), 0, 1, n, 1)
    assert_allclose(interior_potential(x, sol), 1.0, atol=2e-4)


# -- systems ---------------------------------------------------------------


def test_identity_like_system():
    b = np.array([1.0, -2.0, 3.0])
    sys_ = DenseSystem(0.5 * np.eye(3), b, np.arange(3), np.arange(3))
    rep = solve(sys_)
    assert_allclose(rep.unknowns, 2 * b)
    assert rep.residual < 1e-15


def test_singular_system_is_signalled():
    with pytest.raises(SingularSystemError):
        solve(DenseSystem(np.zeros((2, 2)), np.ones(2), np.arange(2), np.arange(2)))


def test_zero_data_gives_zero_solution(small_mesh):
    dom = default_domain()
    s = assemble(small_mesh, BoundaryData(phi1=Field.zero()), dom)
    assert not np.any(s.rhs)
    assert not np.any(solve(s).unknowns)


def test_symmetry_reduction_matches_full_system():
    mesh = build_global_mesh(default_domain(), SMALL)
    dom = default_domain()
    full = solve_reference(dom, BoundaryData(), mesh=mesh, symmetric=False)
    red = solve_reference(dom, BoundaryData(), mesh=mesh, symmetric=True)
    assert full.n_unknowns == len(mesh)
    assert red.n_symmetries == 8 and red.n_unknowns < len(mesh) / 7
    assert_allclose(red.currents, full.currents, rtol=1e-7)
    assert_allclose(red.potential, full.potential, atol=1e-7)


def test_constant_solution_on_small_mesh(small_mesh):
    sol = solve_reference(default_domain(), BoundaryData(phi1=Field.constant(2.0)), mesh=small_mesh)
    assert_allclose(sol.potential, 2.0, atol=2e-3)
    assert_allclose(sol.currents, 0.0, atol=2e-3)


def test_default_problem_on_small_mesh(small_mesh):
    sol = solve_reference(default_domain(), BoundaryData(), mesh=small_mesh)
    J = sol.currents
    assert np.all(np.sign(J) == [1, -1, 1, -1, 1, -1, 1, -1])
    assert abs(sol.total) / np.abs(J).max() < 1e-3
    assert_allclose(J, [1.3388, -1.3969, 1.4549, -1.3969] * 2, rtol=3e-3)


def test_dirichlet_problem_interior_values():
    case = dirichlet_polynomial_case("x2-y2")
    sol = solve_reference(case.domain, case.data, MeshParams(depth=3))
    x = np.array([[0.5, 0, 0], [0.2, -0.3, 0.1]])
    assert_allclose(interior_potential(x, sol), case.exact(x), atol=1e-3)
    # the computed normal derivative is that of the polynomial
    assert_allclose(sol.flux, case.flux(sol.mesh.centroid), atol=2e-2)


def test_annulus_with_image_kernel():
    case = annulus_radial_case(0.5, 1.0)
    sol = solve_reference(case.domain, case.data, MeshParams(depth=3))
    assert_allclose(interior_potential([0.75, 0, 0], sol), 2 - 1 / 0.75, atol=1e-3)
    assert_allclose(sol.potential, 1.0, atol=2e-3)


def test_reference_solver_refuses_offset_anomaly():
    with pytest.raises(GeometryError):
        solve_reference(default_domain(0.3, (0.1, 0, 0)), BoundaryData(), SMALL)
