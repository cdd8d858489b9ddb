import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semilin.mesh import (
    SHEAR_2D_POOR,
    SHEAR_3D_POOR,
    MeshFormatError,
    bisect_shortest_edge,
    build_structured_mesh,
    cell_diameters,
    cell_volumes,
    check_conformity,
    knupp_quality,
    mesh_stats,
    read_mesh,
    uniform_refine,
    write_mesh,
)


def test_minimal_square_split():
    mesh = build_structured_mesh("unit-square", 1)
    assert mesh.n_cells == 2
    assert mesh.n_vertices == 4
    assert np.all(mesh.boundary_vertex)


def test_minimal_kuhn_cube():
    mesh = build_structured_mesh("unit-cube", 1)
    assert mesh.n_cells == 6
    assert mesh.n_vertices == 8


def test_structured_counts_2d():
    mesh = build_structured_mesh("unit-square", 4)
    assert mesh.n_cells == 32
    assert mesh.n_vertices == 25
    assert mesh_stats(mesh).n_interior_dofs == 9


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_structured_mesh("unit-square", 0)
    with pytest.raises(ValueError):
        build_structured_mesh("unit-square", 2, shear=float("inf"))
    with pytest.raises(ValueError):
        build_structured_mesh("disk", 2)


@pytest.mark.parametrize("domain,n", [("unit-square", 3), ("unit-cube", 2)])
def test_volume_sums_to_domain_volume(domain, n):
    mesh = build_structured_mesh(domain, n)
    assert abs(cell_volumes(mesh).sum() - 1.0) < 1e-12
    # shear maps have unit determinant, so the image keeps volume 1
    sheared = build_structured_mesh(domain, n, shear=1.3)
    assert abs(cell_volumes(sheared).sum() - 1.0) < 1e-12


def test_poor_mesh_shear_hits_angle_target():
    mesh = build_structured_mesh("unit-square", 4, shear=SHEAR_2D_POOR)
    stats = mesh_stats(mesh)
    assert 6.0 <= stats.min_angle_deg <= 10.0


def test_poor_mesh_shear_hits_dihedral_target_3d():
    mesh = build_structured_mesh("unit-cube", 2, shear=SHEAR_3D_POOR)
    stats = mesh_stats(mesh)
    assert 6.0 <= stats.min_angle_deg <= 10.0


def test_refine_counts_2d():
    mesh = uniform_refine(build_structured_mesh("unit-square", 1))
    assert mesh.n_cells == 8
    assert mesh.n_vertices == 9


def test_refine_counts_3d():
    mesh = uniform_refine(build_structured_mesh("unit-cube", 1))
    assert mesh.n_cells == 48


def test_refine_halves_h_max():
    mesh = build_structured_mesh("unit-square", 2)
    before = cell_diameters(mesh).max()
    after = cell_diameters(uniform_refine(mesh)).max()
    assert abs(after - 0.5 * before) < 1e-14


def test_refine_preserves_quality_2d():
    mesh = build_structured_mesh("unit-square", 2, shear=0.7)
    s0 = mesh_stats(mesh)
    s1 = mesh_stats(uniform_refine(mesh))
    assert abs(s0.min_quality - s1.min_quality) < 1e-12
    assert abs(s0.max_quality - s1.max_quality) < 1e-12


@pytest.mark.parametrize("shear", [0.0, SHEAR_3D_POOR])
def test_refine_shape_regularity_proxy_3d(shear):
    mesh = build_structured_mesh("unit-cube", 1, shear=shear)
    q0 = mesh_stats(mesh).min_quality
    for _ in range(3):
        mesh = uniform_refine(mesh)
        assert mesh_stats(mesh).min_quality >= 0.5 * q0


def test_bisect_minimal_square():
    mesh = bisect_shortest_edge(build_structured_mesh("unit-square", 1), steps=1)
    assert mesh.n_cells == 3


def test_bisect_cell_growth_per_step():
    mesh = build_structured_mesh("unit-square", 2)
    for _ in range(10):
        before = mesh.n_cells
        mesh = bisect_shortest_edge(mesh, steps=1)
        assert mesh.n_cells - before in (1, 2)


def test_bisect_degrades_min_angle():
    mesh = build_structured_mesh("unit-square", 4)
    assert abs(mesh_stats(mesh).min_angle_deg - 45.0) < 1e-12
    degraded = bisect_shortest_edge(mesh, steps=30)
    assert mesh_stats(degraded).min_angle_deg < 45.0


def test_bisect_rejects_3d():
    with pytest.raises(ValueError):
        bisect_shortest_edge(build_structured_mesh("unit-cube", 1))


def test_stats_unit_square():
    stats = mesh_stats(build_structured_mesh("unit-square", 1))
    assert abs(stats.h_max - math.sqrt(2.0)) < 1e-15
    assert abs(stats.min_angle_deg - 45.0) < 1e-12
    assert abs(stats.max_angle_deg - 90.0) < 1e-12


def test_stats_h_scaling():
    stats = mesh_stats(build_structured_mesh("unit-square", 2))
    assert abs(stats.h_max - math.sqrt(2.0) / 2) < 1e-15


def test_regular_tet_dihedral_angle():
    # regular tetrahedron: all dihedral angles arccos(1/3)
    verts = np.array(
        [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
    )
    from semilin.mesh import SimplexMesh, _boundary_flags

    mesh = SimplexMesh(3, verts, np.array([[0, 1, 2, 3]]), _boundary_flags(verts, np.array([[0, 1, 2, 3]]), 3))
    stats = mesh_stats(mesh)
    expected = math.degrees(math.acos(1.0 / 3.0))
    assert abs(stats.min_angle_deg - expected) < 1e-10
    assert abs(stats.max_angle_deg - expected) < 1e-10


def test_knupp_examples():
    equilateral = [(0.0, 0.0), (1.0, 0.0), (0.5, math.sqrt(3.0) / 2.0)]
    assert abs(knupp_quality(equilateral) - 1.0) < 1e-12
    right = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
    assert abs(knupp_quality(right) - math.sqrt(3.0) / 2.0) < 1e-12
    collinear = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]
    assert knupp_quality(collinear) == 0.0
    regular_tet = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
    ) / (2.0 * math.sqrt(2.0))
    assert abs(knupp_quality(regular_tet) - 1.0) < 1e-12


@settings(deadline=None, max_examples=40)
@given(
    st.lists(
        st.floats(min_value=-5.0, max_value=5.0, allow_nan=False),
        min_size=6,
        max_size=6,
    )
)
def test_knupp_scale_invariance(coords):
    pts = np.asarray(coords).reshape(3, 2)
    q = knupp_quality(pts)
    for lam in (0.5, 2.0, 10.0):
        assert abs(knupp_quality(lam * pts) - q) < 1e-12


def test_conformity_after_operations():
    mesh = build_structured_mesh("unit-square", 3, shear=0.5)
    check_conformity(mesh)
    check_conformity(uniform_refine(mesh))
    check_conformity(bisect_shortest_edge(mesh, steps=5))
    cube = build_structured_mesh("unit-cube", 2)
    check_conformity(uniform_refine(cube))


def test_mesh_io_round_trip(tmp_path):
    mesh = build_structured_mesh("unit-square", 1)
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert back.dim == mesh.dim
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.cells, mesh.cells)
    assert np.array_equal(back.boundary_vertex, mesh.boundary_vertex)


def test_mesh_io_round_trip_3d(tmp_path):
    mesh = build_structured_mesh("unit-cube", 2, shear=0.4)
    path = tmp_path / "mesh3.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.cells, mesh.cells)


def test_mesh_io_rejects_out_of_range_index(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 3 1\n0 0\n1 0\n0 1\n0 1 7\n1 1 1\n")
    with pytest.raises(MeshFormatError, match="line 5"):
        read_mesh(path)


def test_mesh_io_rejects_inconsistent_counts(tmp_path):
    path = tmp_path / "short.txt"
    path.write_text("2 4 2\n0 0\n1 0\n0 1\n")
    with pytest.raises(MeshFormatError):
        read_mesh(path)


def test_mesh_io_repairs_flipped_cell(tmp_path):
    # cell (0, 2, 1) has negative signed area; reader must reorient it
    path = tmp_path / "flipped.txt"
    path.write_text("2 4 2\n0 0\n1 0\n1 1\n0 1\n0 2 1\n0 2 3\n1 1 1 1\n")
    mesh = read_mesh(path)
    assert np.all(cell_volumes(mesh) > 0)
    assert mesh.n_cells == 2
