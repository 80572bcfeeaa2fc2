"""Quasi-uniform P1 triangulations of the meridian polygon.

A coarse base mesh is built by a conforming Delaunay triangulation of boundary
points and an equilateral interior lattice, then smoothed.  Finer meshes are
obtained by uniform red refinement, so that a family of mesh sizes
h, h/2, h/4, ... is nested and P1 functions transfer exactly to finer levels.
There is no grading towards the corners.
"""
from __future__ import annotations

import enum
import math
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.spatial import Delaunay, cKDTree

from .geometry import MeridianPolygon

MIN_ANGLE_DEG = 20.0
SPACING_FACTOR = 0.85


class MeshError(RuntimeError):
    pass


class NodeTag(enum.IntEnum):
    INTERIOR = 0
    ON_AXIS = 1
    ON_DIRICHLET = 2
    ON_AXIS_END = 3


class TriMesh:
    """Conforming triangulation with node tags and a link to its parent level."""

    def __init__(self, poly: MeridianPolygon, nodes, triangles, level=0, parent=None,
                 prolong=None, tri_parent=None):
        self.poly = poly
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.level = level
        self.parent = parent
        self.prolong = prolong
        self.tri_parent = tri_parent
        self.node_tags = _tag_nodes(poly, self.nodes, self.triangles)
        self._tree = None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def r(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def z(self) -> np.ndarray:
        return self.nodes[:, 1]

    def vertex_coords(self) -> np.ndarray:
        """Array (m, 3, 2) of triangle vertex coordinates."""
        return self.nodes[self.triangles]

    @property
    def areas(self) -> np.ndarray:
        v = self.vertex_coords()
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def h(self) -> float:
        """Mesh size: largest circumscribed-circle diameter."""
        v = self.vertex_coords()
        a = np.linalg.norm(v[:, 1] - v[:, 2], axis=1)
        b = np.linalg.norm(v[:, 2] - v[:, 0], axis=1)
        c = np.linalg.norm(v[:, 0] - v[:, 1], axis=1)
        return float(np.max(a * b * c / (2.0 * self.areas)))

    @property
    def shape_reg(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        return float(np.min(_angles_deg(self.vertex_coords())))

    def edge_lengths(self) -> np.ndarray:
        v = self.vertex_coords()
        return np.stack([np.linalg.norm(v[:, (i + 1) % 3] - v[:, i], axis=1) for i in range(3)], axis=1)

    def boundary_edges(self) -> np.ndarray:
        edges = np.sort(self.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        return uniq[counts == 1]

    def find_node(self, point, tol=1e-12) -> int:
        d = np.linalg.norm(self.nodes - np.asarray(point, dtype=float), axis=1)
        i = int(np.argmin(d))
        if d[i] > tol:
            raise MeshError(f"no mesh node at {point}")
        return i

    def ancestors(self):
        m = self
        while m is not None:
            yield m
            m = m.parent

    def prolongation_from(self, coarse: "TriMesh"):
        """Sparse matrix mapping nodal values on an ancestor mesh to this mesh."""
        if coarse is self:
            return sparse.identity(self.n_nodes, format="csr")
        mat = None
        m = self
        while m is not coarse:
            if m.parent is None:
                raise MeshError("meshes are not nested")
            mat = m.prolong if mat is None else mat @ m.prolong
            m = m.parent
        return mat.tocsr()

    def coarse_triangle_of(self, coarse: "TriMesh") -> np.ndarray:
        """Index of the ancestor triangle containing each triangle of this mesh."""
        idx = np.arange(self.n_triangles)
        m = self
        while m is not coarse:
            if m.parent is None:
                raise MeshError("meshes are not nested")
            idx = m.tri_parent[idx]
            m = m.parent
        return idx

    def locate(self, points):
        """Triangle index and barycentric coordinates of each point (-1 if outside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._tree is None:
            self._tree = cKDTree(self.vertex_coords().mean(axis=1))
        k = min(12, self.n_triangles)
        _, cand = self._tree.query(pts, k=k)
        cand = cand.reshape(len(pts), k)
        tri = np.full(len(pts), -1, dtype=np.int64)
        bary = np.zeros((len(pts), 3))
        for j in range(len(pts)):
            found = self._search(pts[j], cand[j])
            if found is None:
                found = self._search(pts[j], np.arange(self.n_triangles))
            if found is not None:
                tri[j], bary[j] = found
        return tri, bary

    def _search(self, p, cand):
        lam = barycentric(self.vertex_coords()[cand], p[None, :])
        worst = lam.min(axis=1)
        i = int(np.argmax(worst))
        if worst[i] < -1e-10:
            return None
        return cand[i], lam[i]

    def write_text(self, path) -> None:
        lines = [f"nodes {self.n_nodes} triangles {self.n_triangles}"]
        lines += [f"{float(r)!r} {float(z)!r} {int(t)}" for (r, z), t in zip(self.nodes, self.node_tags)]
        lines += [f"{i} {j} {k}" for i, j, k in self.triangles]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_mesh_text(path):
    """Read the plain-text export back as (nodes, tags, triangles)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split()
    n, m = int(head[1]), int(head[3])
    node_rows = [ln.split() for ln in lines[1:1 + n]]
    nodes = np.array([[float(a), float(b)] for a, b, _ in node_rows])
    tags = np.array([int(t) for _, _, t in node_rows])
    tris = np.array([[int(x) for x in ln.split()] for ln in lines[1 + n:1 + n + m]], dtype=np.int64)
    return nodes, tags, tris


def barycentric(tri_xy: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of pts (k, 2) in triangles tri_xy (k, 3, 2)."""
    a, b, c = tri_xy[:, 0], tri_xy[:, 1], tri_xy[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    l1 = ((pts[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (pts[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
    l2 = ((b[:, 0] - a[:, 0]) * (pts[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (pts[:, 0] - a[:, 0])) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


def _angles_deg(v: np.ndarray) -> np.ndarray:
    out = []
    for i in range(3):
        p, q, s = v[:, i], v[:, (i + 1) % 3], v[:, (i + 2) % 3]
        u, w = q - p, s - p
        cosang = np.sum(u * w, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
        out.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return np.stack(out, axis=1)


def _point_segment_distance(pts, p, q):
    d = q - p
    t = np.clip(((pts - p) @ d) / (d @ d), 0.0, 1.0)
    return np.linalg.norm(pts - (p + t[:, None] * d), axis=1)


def _distance_to_boundary(poly: MeridianPolygon, pts: np.ndarray) -> np.ndarray:
    p = poly.points
    return np.min([_point_segment_distance(pts, p[i], p[(i + 1) % poly.n]) for i in range(poly.n)], axis=0)


def _tag_nodes(poly: MeridianPolygon, nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    tags = np.full(len(nodes), NodeTag.INTERIOR, dtype=np.int8)
    edges = np.sort(tris[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    bnd = uniq[counts == 1]
    on_axis_edge = (nodes[bnd[:, 0], 0] == 0.0) & (nodes[bnd[:, 1], 0] == 0.0)
    tags[bnd[~on_axis_edge].ravel()] = NodeTag.ON_DIRICHLET
    axis_nodes = np.unique(bnd[on_axis_edge].ravel())
    tags[axis_nodes] = NodeTag.ON_AXIS
    for i in poly.axis_endpoints:
        d = np.linalg.norm(nodes - poly.points[i], axis=1)
        j = int(np.argmin(d))
        if d[j] < 1e-12:
            tags[j] = NodeTag.ON_AXIS_END
    return tags


def _boundary_points(poly: MeridianPolygon, s: float):
    """Points along the polygon boundary and the list of boundary segments."""
    p = poly.points
    pts, corner_ids = [], []
    for i in range(poly.n):
        a, b = p[i], p[(i + 1) % poly.n]
        n = max(1, int(round(np.linalg.norm(b - a) / s)))
        corner_ids.append(len(pts))
        for j in range(n):
            pts.append(a + (b - a) * (j / n))
    pts = np.array(pts)
    segs = [(i, (i + 1) % len(pts)) for i in range(len(pts))]
    return pts, segs, corner_ids


def _lattice(poly: MeridianPolygon, s: float) -> np.ndarray:
    p = poly.points
    (rmin, zmin), (rmax, zmax) = p.min(axis=0), p.max(axis=0)
    dz = s * math.sqrt(3.0) / 2.0
    rows = []
    for j, z in enumerate(np.arange(zmin + dz / 2, zmax, dz)):
        r = np.arange(rmin + (0.25 if j % 2 else 0.75) * s, rmax, s)
        rows.append(np.column_stack([r, np.full_like(r, z)]))
    pts = np.vstack(rows) if rows else np.zeros((0, 2))
    inside = poly.contains(pts[:, 0], pts[:, 1])
    pts = pts[inside]
    return pts[_distance_to_boundary(poly, pts) >= 0.55 * s]


def _conforming_delaunay(bpts: np.ndarray, segs: list, interior: np.ndarray, max_iter=50):
    """Delaunay triangulation in which every boundary segment is an edge.

    Encroached segments (another point inside their diametral circle) are
    split at their midpoint until none remain.
    """
    bpts = [tuple(x) for x in bpts]
    segs = list(segs)
    for _ in range(max_iter):
        pts = np.vstack([np.array(bpts), interior]) if len(interior) else np.array(bpts)
        tree = cKDTree(pts)
        new_segs, changed = [], False
        for i, j in segs:
            a, b = np.array(bpts[i]), np.array(bpts[j])
            mid, rad = 0.5 * (a + b), 0.5 * np.linalg.norm(b - a)
            near = [k for k in tree.query_ball_point(mid, rad * (1 - 1e-9)) if k not in (i, j)]
            if near:
                bpts.append(tuple(mid))
                m = len(bpts) - 1
                new_segs += [(i, m), (m, j)]
                changed = True
            else:
                new_segs.append((i, j))
        segs = new_segs
        if not changed:
            nb = len(bpts)
            # interior points were appended after boundary ones: renumbering is the identity
            return pts, Delaunay(pts), segs, nb
        # drop interior points sitting too close to the new boundary points
        if len(interior):
            d = cKDTree(np.array(bpts)).query(interior)[0]
            interior = interior[d > 1e-9]
    raise MeshError("boundary recovery did not converge")


def _clip_to_polygon(poly, pts, simplices):
    cent = pts[simplices].mean(axis=1)
    keep = poly.contains(cent[:, 0], cent[:, 1])
    tris = simplices[keep]
    v = pts[tris]
    area = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0])
    tris[area < 0] = tris[area < 0][:, [0, 2, 1]]
    return tris


def _compact(pts, tris):
    used = np.unique(tris)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return pts[used], remap[tris]


def _has_segments(tris, segs) -> bool:
    edges = set(map(tuple, np.sort(tris[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1).tolist()))
    return all(tuple(sorted(s)) in edges for s in segs)


def base_mesh(poly: MeridianPolygon, s: float, smoothing_passes: int = 8) -> TriMesh:
    """Coarse quasi-uniform mesh with node spacing about ``s``."""
    bpts, segs, _ = _boundary_points(poly, s)
    interior = _lattice(poly, s)
    pts, tri, segs, nb = _conforming_delaunay(bpts, segs, interior)
    tris = _clip_to_polygon(poly, pts, tri.simplices)
    if not _has_segments(tris, segs):
        raise MeshError("boundary segments missing after recovery")
    for _ in range(smoothing_passes):
        moved = pts.copy()
        nbrs = [[] for _ in range(len(pts))]
        for a, b in tris[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2):
            nbrs[a].append(b)
            nbrs[b].append(a)
        for i in range(nb, len(pts)):
            if nbrs[i]:
                moved[i] = 0.5 * pts[i] + 0.5 * pts[np.unique(nbrs[i])].mean(axis=0)
        cand = _clip_to_polygon(poly, moved, Delaunay(moved).simplices)
        if not _has_segments(cand, segs) or np.min(_angles_deg(moved[cand])) < np.min(_angles_deg(pts[tris])):
            break
        pts, tris = moved, cand
    pts, tris = _compact(pts, tris)
    mesh = TriMesh(poly, pts, tris)
    _validate(mesh)
    return mesh


def _validate(mesh: TriMesh) -> None:
    areas = mesh.areas
    if np.any(areas <= 0):
        bad = mesh.vertex_coords()[np.argmin(areas)].mean(axis=0)
        raise MeshError(f"non-positive triangle near {tuple(bad)}")
    total = float(np.sum(areas))
    if abs(total - mesh.poly.area) > 1e-10 * mesh.poly.area:
        raise MeshError(f"triangles cover area {total}, polygon has {mesh.poly.area}")
    ang = _angles_deg(mesh.vertex_coords()).min(axis=1)
    if ang.min() < MIN_ANGLE_DEG:
        bad = mesh.vertex_coords()[np.argmin(ang)].mean(axis=0)
        raise MeshError(f"sliver with angle {ang.min():.2f} deg near {tuple(bad)}")


def red_refine(mesh: TriMesh) -> TriMesh:
    """Split every triangle into four similar ones via edge midpoints."""
    tris = mesh.triangles
    m = len(tris)
    edges = np.sort(tris[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.reshape(m, 3)
    n0 = mesh.n_nodes
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, bc, ca = n0 + inv[:, 0], n0 + inv[:, 1], n0 + inv[:, 2]
    children = np.concatenate([
        np.stack([a, ab, ca], axis=1), np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1), np.stack([ab, bc, ca], axis=1)])
    tri_parent = np.tile(np.arange(m), 4)
    ne = len(uniq)
    rows = np.concatenate([np.arange(n0), n0 + np.arange(ne), n0 + np.arange(ne)])
    cols = np.concatenate([np.arange(n0), uniq[:, 0], uniq[:, 1]])
    vals = np.concatenate([np.ones(n0), np.full(2 * ne, 0.5)])
    prolong = sparse.csr_matrix((vals, (rows, cols)), shape=(n0 + ne, n0))
    return TriMesh(mesh.poly, nodes, children, mesh.level + 1, mesh, prolong, tri_parent)


def levels_for(poly: MeridianPolygon, target_h: float) -> tuple[float, int]:
    """Base spacing and number of red refinements for a target size.

    The base spacing depends on target_h only through target_h * 2**levels, so
    targets differing by powers of two share the same base mesh.
    """
    cap = poly.shortest_side() / 1.5
    levels = max(0, int(math.floor(math.log2(cap / (SPACING_FACTOR * target_h)) + 1e-9)))
    return SPACING_FACTOR * target_h * 2**levels, levels


@lru_cache(maxsize=8)
def _chain(poly: MeridianPolygon, base_key: float):
    return [base_mesh(poly, base_key)]


def triangulate(poly: MeridianPolygon, target_h: float) -> TriMesh:
    if not target_h > 0:
        raise ValueError("target_h must be positive")
    if target_h >= poly.shortest_side():
        raise ValueError("target_h must be smaller than the shortest polygon side")
    s, levels = levels_for(poly, target_h)
    chain = _chain(poly, round(s, 12))
    while len(chain) <= levels:
        chain.append(red_refine(chain[-1]))
    return chain[levels]


def refine_family(poly: MeridianPolygon, h_list) -> list[TriMesh]:
    return [triangulate(poly, h) for h in h_list]


def clear_cache() -> None:
    _chain.cache_clear()
