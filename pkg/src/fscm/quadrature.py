"""Triangle quadrature rules and per-mesh quadrature point sets.

All rules use strictly interior points, so integrands with 1/r factors or
corner singularities are never evaluated on the axis or at a corner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .mesh import TriMesh


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle (0,0), (1,0), (0,1).

    ``points`` are barycentric triples, ``weights`` sum to 1/2.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _seven_point() -> QuadratureRule:
    s = math.sqrt(15.0)
    a1, b1 = (6.0 - s) / 21.0, (9.0 + 2.0 * s) / 21.0
    a2, b2 = (6.0 + s) / 21.0, (9.0 - 2.0 * s) / 21.0
    w1, w2 = (155.0 - s) / 1200.0, (155.0 + s) / 1200.0
    pts = [(1 / 3, 1 / 3, 1 / 3),
           (b1, a1, a1), (a1, b1, a1), (a1, a1, b1),
           (b2, a2, a2), (a2, b2, a2), (a2, a2, b2)]
    w = [9.0 / 40.0, w1, w1, w1, w2, w2, w2]
    return QuadratureRule(np.array(pts), 0.5 * np.array(w), 5)


def conical_product(n: int) -> QuadratureRule:
    """n*n point collapsed Gauss rule, exact through degree 2n - 1."""
    xj, wj = roots_jacobi(n, 1.0, 0.0)  # weight (1 - x) on [-1, 1]
    xl, wl = roots_legendre(n)
    u = 0.5 * (xj + 1.0)
    wu = wj / 4.0
    v = 0.5 * (xl + 1.0)
    wv = wl / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    x = U.ravel()
    y = ((1.0 - U) * V).ravel()
    pts = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(pts, W.ravel(), 2 * n - 1)


def quad_rule(degree: int = 6) -> QuadratureRule:
    """Interior rules: 6 gives the seven-point rule (exact through degree 5)."""
    if degree == 6:
        return _seven_point()
    if degree == 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([0.5]), 1)
    if degree >= 7 and degree % 2 == 1:
        return conical_product((degree + 1) // 2)
    raise ValueError(f"unsupported quadrature degree {degree}")


def _graded_rule(depth: int, inner: QuadratureRule) -> QuadratureRule:
    """Composite rule refined geometrically towards barycentric vertex 0."""
    pts, wts = [], []
    A, B, C = np.eye(3)
    scale = 1.0
    for _ in range(depth):
        ab, ac, bc = 0.5 * (A + B), 0.5 * (A + C), 0.5 * (B + C)
        for tri in ((ab, B, bc), (ac, bc, C), (ab, bc, ac)):
            pts.append(inner.points @ np.array(tri))
            wts.append(inner.weights * scale / 4.0)
        A, B, C = A, ab, ac
        scale /= 4.0
    last = _seven_point()
    pts.append(last.points @ np.array((A, B, C)))
    wts.append(last.weights * scale)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), inner.degree)


@dataclass
class QuadratureSet:
    """Physical quadrature points of a mesh.

    ``elem[q]`` is the triangle holding point q, ``bary[q]`` its barycentric
    coordinates there, ``w[q]`` the physical weight and ``r``/``z`` its location.
    """

    mesh: TriMesh
    elem: np.ndarray
    bary: np.ndarray
    w: np.ndarray
    r: np.ndarray
    z: np.ndarray

    @property
    def size(self) -> int:
        return len(self.w)

    def integrate(self, values) -> complex | float:
        return np.sum(self.w * values)


def _place(mesh: TriMesh, elems: np.ndarray, rule: QuadratureRule, rotate: np.ndarray | None = None):
    nq = len(rule.weights)
    bary = np.tile(rule.points, (len(elems), 1))
    if rotate is not None:
        # rotate[i] = local index of the singular vertex; the rule is graded towards slot 0
        perm = np.stack([(rotate + j) % 3 for j in range(3)], axis=1)
        perm_rep = np.repeat(perm, nq, axis=0)
        out = np.empty_like(bary)
        for j in range(3):
            out[np.arange(len(out)), perm_rep[:, j]] = bary[:, j]
        bary = out
    e = np.repeat(elems, nq)
    w = np.tile(rule.weights, len(elems)) * 2.0 * np.repeat(mesh.areas[elems], nq)
    return e, bary, w


def grading_depth(point, size: float, max_depth: int = 160) -> int:
    """Number of geometric levels before quadrature offsets drown in round-off.

    Points are stored in absolute coordinates, so a corner away from the
    origin limits how close to it a point can be resolved.
    """
    scale = float(np.max(np.abs(point)))
    if scale == 0.0:
        return max_depth
    levels = math.log2(size) - math.log2(1e3 * np.finfo(float).eps) - math.log2(scale)
    return int(max(4, min(max_depth, math.floor(levels))))


def build_quadrature(mesh: TriMesh, singular_points=(), depth: int | None = None, near_factor: float = 3.0,
                     inner_order: int = 8, rule: QuadratureRule | None = None) -> QuadratureSet:
    """Quadrature set with extra resolution around the given singular points.

    Triangles with a vertex at a singular point get a rule graded towards it;
    triangles within ``near_factor * h`` of one get a collapsed Gauss rule;
    everything else uses the seven-point rule.  The grading depth defaults to
    :func:`grading_depth`.
    """
    base = rule or _seven_point()
    m = mesh.n_triangles
    kind = np.zeros(m, dtype=np.int8)
    rot = np.zeros(m, dtype=np.int64)
    levels = np.zeros(m, dtype=np.int64)
    cent = mesh.vertex_coords().mean(axis=1)
    h = mesh.h
    for sp in singular_points:
        sp = np.asarray(sp, dtype=float)
        near = np.linalg.norm(cent - sp, axis=1) < near_factor * h
        kind[near & (kind == 0)] = 1
        d = np.linalg.norm(mesh.vertex_coords() - sp, axis=2)
        touch = d.min(axis=1) < 1e-12
        kind[touch] = 2
        rot[touch] = np.argmin(d[touch], axis=1)
        levels[touch] = depth if depth is not None else grading_depth(sp, h)
    parts = []
    plain = np.flatnonzero(kind == 0)
    parts.append(_place(mesh, plain, base))
    near = np.flatnonzero(kind == 1)
    if len(near):
        parts.append(_place(mesh, near, conical_product(inner_order)))
    inner = conical_product(inner_order)
    for lev in np.unique(levels[kind == 2]):
        touch = np.flatnonzero((kind == 2) & (levels == lev))
        parts.append(_place(mesh, touch, _graded_rule(int(lev), inner), rot[touch]))
    elem = np.concatenate([p[0] for p in parts])
    bary = np.vstack([p[1] for p in parts])
    w = np.concatenate([p[2] for p in parts])
    order = np.argsort(elem, kind="stable")
    elem, bary, w = elem[order], bary[order], w[order]
    xy = np.einsum("qi,qij->qj", bary, mesh.vertex_coords()[elem])
    return QuadratureSet(mesh, elem, bary, w, xy[:, 0], xy[:, 1])
