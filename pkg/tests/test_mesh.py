import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haptofem.mesh import (
    MeshError,
    MeshLoadError,
    TriMesh,
    element_geometry,
    generate_unit_square_mesh,
    read_mesh,
    write_mesh,
)


def test_smallest_mesh():
    m = generate_unit_square_mesh(1)
    assert m.n_vertices == 4 and m.n_triangles == 2
    assert m.area == pytest.approx(1.0, rel=1e-12)


def test_n2_counts_and_h():
    m = generate_unit_square_mesh(2)
    assert (m.n_vertices, m.n_triangles) == (9, 8)
    assert m.h == pytest.approx(math.sqrt(2) / 2, rel=1e-14)


def test_n50_counts():
    m = generate_unit_square_mesh(50)
    assert (m.n_vertices, m.n_triangles) == (2601, 5000)
    assert m.h == pytest.approx(math.sqrt(2) / 50, rel=1e-14)


@pytest.mark.parametrize("bad", [0, -3])
def test_generator_rejects_nonpositive_n(bad):
    with pytest.raises(ValueError):
        generate_unit_square_mesh(bad)


@given(st.integers(min_value=1, max_value=24))
@settings(max_examples=15, deadline=None)
def test_generated_mesh_invariants(n):
    m = generate_unit_square_mesh(n)
    assert abs(m.area - 1.0) <= 1e-12
    assert np.all(m.areas > 0)
    assert np.abs(m.grads.sum(axis=1)).max() <= 1e-14 * n
    assert m.max_angle() <= math.pi / 2 + 1e-12
    assert m.nonobtuse
    # h is the longest edge
    p = m.vertices[m.triangles]
    edges = np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)
    assert m.h == edges.max()


def test_reference_triangle_geometry(unit_triangle):
    area, g = element_geometry(unit_triangle, 0)
    assert area == 0.5
    np.testing.assert_array_equal(g, [[-1, -1], [1, 0], [0, 1]])


def test_scaled_triangle_geometry():
    m = TriMesh([[0, 0], [2, 0], [0, 2]], [[0, 1, 2]])
    area, g = m.element_geometry(0)
    assert area == 4 * 0.5
    np.testing.assert_allclose(g, 0.5 * np.array([[-1, -1], [1, 0], [0, 1]]), atol=1e-15)


@given(
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=6, max_size=6),
)
@settings(max_examples=50)
def test_gradients_sum_to_zero_and_reproduce_linears(c):
    p = np.array(c).reshape(3, 2)
    signed = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
    if abs(signed) < 1e-3:
        return
    m = TriMesh(p, [[0, 1, 2]])
    _, g = m.element_geometry(0)
    assert np.abs(g.sum(0)).max() <= 1e-12 * max(1.0, np.abs(g).max())
    # sum_i x_i grad(lambda_i) = grad(x) = (1, 0)
    verts = m.vertices[m.triangles[0]]
    np.testing.assert_allclose(verts[:, 0] @ g, [1, 0], atol=1e-9)
    np.testing.assert_allclose(verts[:, 1] @ g, [0, 1], atol=1e-9)


def test_element_index_out_of_range(mesh2):
    with pytest.raises(IndexError):
        mesh2.element_geometry(8)


def test_clockwise_triangles_are_normalized():
    m = TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert m.areas[0] == 0.5
    p = m.vertices[m.triangles[0]]
    signed = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
    assert signed > 0


def test_obtuse_mesh_is_flagged():
    m = TriMesh([[0, 0], [2, 0], [1, 0.2]], [[0, 1, 2]])
    assert not m.nonobtuse


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshError, match="zero area"):
        TriMesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_mesh_file_round_trip(tmp_path):
    m = generate_unit_square_mesh(3)
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    m2 = read_mesh(path)
    np.testing.assert_array_equal(m2.vertices, m.vertices)
    np.testing.assert_array_equal(m2.triangles, m.triangles)


def test_n1_mesh_file_line_count(tmp_path):
    path = tmp_path / "m.txt"
    write_mesh(generate_unit_square_mesh(1), path)
    assert len(path.read_text().splitlines()) == 1 + 4 + 2
    assert read_mesh(path).same_as(generate_unit_square_mesh(1))


def test_read_repeated_vertex_index(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 1\n0 0\n1 0\n0 1\n0 1 1\n")
    with pytest.raises(MeshLoadError, match=r":5: triangle has zero area"):
        read_mesh(path)


def test_read_out_of_range_index(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 1\n0 0\n1 0\n0 1\n0 1 3\n")
    with pytest.raises(MeshLoadError, match=r":5: vertex index out of range"):
        read_mesh(path)


def test_read_parse_failure_names_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 1\n0 0\n1 zero\n0 1\n0 1 2\n")
    with pytest.raises(MeshLoadError, match=r":3:"):
        read_mesh(path)


def test_read_clockwise_file(tmp_path):
    path = tmp_path / "cw.txt"
    path.write_text("4 2\n0 0\n1 0\n0 1\n1 1\n0 3 1\n0 2 3\n")
    m = read_mesh(path)
    assert np.all(m.areas > 0) and m.area == pytest.approx(1.0)
