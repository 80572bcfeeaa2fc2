import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fscm import mesh as M
from fscm.geometry import MeridianPolygon
from fscm.mesh import MeshError, NodeTag, read_mesh_text, triangulate

SQUARE = MeridianPolygon(((0, 0), (1, 0), (1, 1), (0, 1)))
L = MeridianPolygon(((0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)))
L_SHARP = MeridianPolygon(((0.0, -1.5), (2.0, -1.5), (2.0, -0.5), (1.0, -0.5), (1.0, 0.5),
                           (0.5, math.sqrt(3.0) / 2.0), (0.0, 0.0)))


def shoelace(poly):
    p = poly.points
    return 0.5 * abs(np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1]))


def test_unit_square_half():
    m = triangulate(SQUARE, 0.5)
    assert m.n_triangles >= 8
    assert m.areas.sum() == pytest.approx(1.0, rel=1e-12)
    assert m.h <= 0.5 * 1.5
    assert m.shape_reg >= 20.0


@pytest.mark.parametrize("poly", [SQUARE, L, L_SHARP])
@pytest.mark.parametrize("h", [0.2, 0.1])
def test_mesh_invariants(poly, h):
    m = triangulate(poly, h)
    assert np.all(m.areas > 0)
    assert m.areas.sum() == pytest.approx(shoelace(poly), rel=1e-10)
    assert m.h <= 1.5 * h
    assert m.shape_reg >= 20.0
    lengths = m.edge_lengths()
    assert lengths.max() / lengths.min() <= 4.0
    for v in poly.points:
        m.find_node(v)
    # axis nodes sit on r = 0, Dirichlet nodes on a non-axis side
    axis = (m.node_tags == NodeTag.ON_AXIS) | (m.node_tags == NodeTag.ON_AXIS_END)
    assert np.all(m.r[axis] == 0.0)
    dirichlet = m.node_tags == NodeTag.ON_DIRICHLET
    p = poly.points
    sides = [poly.sides()[s] for s in poly.dirichlet_sides]
    for x in m.nodes[dirichlet]:
        d = min(M._point_segment_distance(x[None, :], p[i], p[j])[0] for i, j in sides)
        assert d <= 1e-12


@pytest.mark.parametrize("poly", [SQUARE, L, L_SHARP])
def test_boundary_edges_tagged_consistently(poly):
    m = triangulate(poly, 0.1)
    on_axis = lambda i: m.node_tags[i] in (NodeTag.ON_AXIS, NodeTag.ON_AXIS_END)
    for i, j in m.boundary_edges():
        if on_axis(i) and on_axis(j):
            assert m.r[i] == 0.0 and m.r[j] == 0.0
        else:
            assert m.node_tags[i] != NodeTag.INTERIOR and m.node_tags[j] != NodeTag.INTERIOR


def test_axis_ends_tagged():
    m = triangulate(L, 0.2)
    ends = np.flatnonzero(m.node_tags == NodeTag.ON_AXIS_END)
    assert sorted(map(tuple, m.nodes[ends])) == [(0.0, 0.0), (0.0, 2.0)]


@pytest.mark.parametrize("poly", [SQUARE, L, L_SHARP])
def test_refinement_halves_h(poly):
    fam = M.refine_family(poly, [0.2, 0.1, 0.05])
    assert len(fam) == 3
    hs = [m.h for m in fam]
    assert hs[0] > hs[1] > hs[2]
    for a, b in zip(hs, hs[1:]):
        assert 1.7 <= a / b <= 2.3
    assert min(m.shape_reg for m in fam) >= 20.0


def test_nested_prolongation_is_exact_for_linears():
    coarse = triangulate(L, 0.2)
    fine = triangulate(L, 0.05)
    P = fine.prolongation_from(coarse)
    u = 2.0 * coarse.r - 3.0 * coarse.z + 0.5
    assert np.allclose(P @ u, 2.0 * fine.r - 3.0 * fine.z + 0.5, atol=1e-13)
    assert np.all(fine.coarse_triangle_of(coarse) < coarse.n_triangles)


def test_unnested_meshes_rejected():
    a = M.base_mesh(L, 0.3)
    b = M.base_mesh(L, 0.25)
    with pytest.raises(MeshError):
        b.prolongation_from(a)


def test_target_larger_than_side_rejected():
    with pytest.raises(ValueError):
        triangulate(L, 1.5)
    with pytest.raises(ValueError):
        triangulate(L, 0.0)


def test_text_export_round_trip(tmp_path):
    m = triangulate(L_SHARP, 0.2)
    path = tmp_path / "m.txt"
    m.write_text(path)
    first = path.read_text(encoding="utf-8").splitlines()[0]
    assert first == f"nodes {m.n_nodes} triangles {m.n_triangles}"
    nodes, tags, tris = read_mesh_text(path)
    assert np.array_equal(nodes, m.nodes)
    assert np.array_equal(tags, m.node_tags)
    assert np.array_equal(tris, m.triangles)
    assert b"\r" not in path.read_bytes()


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1.99), st.floats(0.01, 1.99)), min_size=1, max_size=20))
def test_locate_recovers_points(pts):
    m = triangulate(L, 0.2)
    pts = np.array([p for p in pts if L.contains(*p)] or [(0.5, 0.5)])
    tri, bary = m.locate(pts)
    assert np.all(tri >= 0)
    back = np.einsum("qi,qij->qj", bary, m.vertex_coords()[tri])
    assert np.allclose(back, pts, atol=1e-12)


def test_locate_outside():
    m = triangulate(L, 0.2)
    tri, _ = m.locate([(1.5, 1.5)])
    assert tri[0] == -1
