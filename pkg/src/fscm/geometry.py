"""Meridian polygon of an axisymmetric domain and its singular corners.

The domain is generated by rotating a polygon in the (r, z) half-plane about
the z axis.  One polygon side lies on the axis; the remaining sides carry the
homogeneous Dirichlet condition.  Off-axis corners with an interior angle
larger than pi generate reentrant circular edges; the two axis endpoints
generate conical vertices.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import specfun

ANGLE_TOL = 1e-9


class GeometryError(ValueError):
    pass


class CornerKind(enum.Enum):
    REENTRANT_EDGE = "reentrant_edge"
    CONICAL_VERTEX = "conical_vertex"
    REGULAR = "regular"


@dataclass(frozen=True)
class MeridianPolygon:
    """Positively oriented simple polygon with exactly one side on r = 0.

    ``vertices`` are (r, z) pairs in counter-clockwise order.  The axis side
    is detected automatically and is stored as the index ``i`` of the side
    ``(vertices[i], vertices[i+1])``.
    """

    vertices: tuple[tuple[float, float], ...]
    axis_side: int = field(init=False)

    def __post_init__(self):
        verts = tuple((float(r), float(z)) for r, z in self.vertices)
        object.__setattr__(self, "vertices", verts)
        n = len(verts)
        if n < 3:
            raise GeometryError("a polygon needs at least three vertices")
        pts = np.asarray(verts)
        if np.any(pts[:, 0] < 0.0):
            raise GeometryError("all vertices must satisfy r >= 0")
        on_axis = [i for i in range(n) if pts[i, 0] == 0.0]
        axis_sides = [i for i in range(n) if pts[i, 0] == 0.0 and pts[(i + 1) % n, 0] == 0.0]
        if len(axis_sides) != 1 or len(on_axis) != 2:
            raise GeometryError(
                "exactly one side must lie on the axis r = 0 and no other vertex may touch it"
            )
        if _signed_area(pts) <= 0.0:
            raise GeometryError("vertices must be listed counter-clockwise")
        for i in range(n):
            if np.allclose(pts[i], pts[(i + 1) % n], atol=1e-14, rtol=0.0):
                raise GeometryError(f"coincident vertices at index {i}")
        if not _is_simple(pts):
            raise GeometryError("polygon sides intersect")
        object.__setattr__(self, "axis_side", axis_sides[0])

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def sides(self) -> list[tuple[int, int]]:
        return [(i, (i + 1) % self.n) for i in range(self.n)]

    @property
    def dirichlet_sides(self) -> list[int]:
        return [i for i in range(self.n) if i != self.axis_side]

    @property
    def axis_endpoints(self) -> tuple[int, int]:
        return self.axis_side, (self.axis_side + 1) % self.n

    @property
    def r_max(self) -> float:
        return float(self.points[:, 0].max())

    @property
    def area(self) -> float:
        return _signed_area(self.points)

    @property
    def first_moment(self) -> float:
        """Integral of r over the polygon (shoelace form)."""
        p = self.points
        q = np.roll(p, -1, axis=0)
        cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
        return float(np.sum(cross * (p[:, 0] + q[:, 0])) / 6.0)

    def shortest_side(self) -> float:
        p = self.points
        return float(np.min(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)))

    def contains(self, r, z) -> np.ndarray:
        """Even-odd point-in-polygon test (boundary points are ambiguous)."""
        r = np.asarray(r, dtype=float)
        z = np.asarray(z, dtype=float)
        inside = np.zeros(np.broadcast(r, z).shape, dtype=bool)
        p = self.points
        for i in range(self.n):
            (r1, z1), (r2, z2) = p[i], p[(i + 1) % self.n]
            crosses = (z1 > z) != (z2 > z)
            with np.errstate(divide="ignore", invalid="ignore"):
                r_int = r1 + (z - z1) * (r2 - r1) / (z2 - z1)
            inside ^= crosses & (r < r_int)
        return inside

    def translated(self, dz: float) -> "MeridianPolygon":
        return MeridianPolygon(tuple((r, z + dz) for r, z in self.vertices))

    def rotated(self, shift: int) -> "MeridianPolygon":
        v = self.vertices
        shift %= self.n
        return MeridianPolygon(v[shift:] + v[:shift])


def _signed_area(p: np.ndarray) -> float:
    q = np.roll(p, -1, axis=0)
    return float(0.5 * np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _is_simple(p: np.ndarray) -> bool:
    n = len(p)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class CornerInfo:
    """A classified polygon corner.

    For a reentrant edge, ``phi0`` is the direction of the first side (the one
    leading to the next vertex) measured from the +r direction, so that the
    corner angle ``phi`` runs counter-clockwise from that side and
    ``phi + phi0`` is the angle to the +r direction.  For a conical vertex,
    ``axis_dir`` is +1 or -1 according to whether the axis side leaves the
    vertex towards +z or -z; ``phi`` is then measured from that direction.
    """

    index: int
    location: tuple[float, float]
    kind: CornerKind
    interior_angle: float
    alpha: float | None = None
    beta_aperture: float | None = None
    nu: float | None = None
    a: float | None = None
    phi0: float | None = None
    sharp: bool | None = None
    axis_dir: int | None = None


def interior_angle(poly: MeridianPolygon, i: int) -> float:
    p = poly.points
    v = p[i]
    nxt = p[(i + 1) % poly.n] - v
    prv = p[(i - 1) % poly.n] - v
    a1 = math.atan2(nxt[1], nxt[0])
    a2 = math.atan2(prv[1], prv[0])
    return (a2 - a1) % (2.0 * math.pi)


def classify_corners(poly: MeridianPolygon) -> list[CornerInfo]:
    corners = []
    axis_ends = poly.axis_endpoints
    p = poly.points
    for i in range(poly.n):
        ang = interior_angle(poly, i)
        loc = (float(p[i, 0]), float(p[i, 1]))
        if i in axis_ends:
            # the axis side leaves vertex i towards the other axis endpoint
            other = axis_ends[1] if i == axis_ends[0] else axis_ends[0]
            axis_dir = 1 if p[other, 1] > p[i, 1] else -1
            if not (ANGLE_TOL < ang < math.pi - ANGLE_TOL) and not (
                math.pi + ANGLE_TOL < ang < 2 * math.pi - ANGLE_TOL
            ):
                raise GeometryError(f"degenerate conical vertex at index {i}")
            nu = specfun.find_root_nu(ang)
            corners.append(
                CornerInfo(i, loc, CornerKind.CONICAL_VERTEX, ang, beta_aperture=ang,
                           nu=nu, sharp=nu < 0.5, axis_dir=axis_dir)
            )
            continue
        if abs(ang - math.pi) < ANGLE_TOL or ang < ANGLE_TOL or ang > 2 * math.pi - ANGLE_TOL:
            raise GeometryError(f"degenerate corner (angle {ang!r}) at index {i}")
        if ang > math.pi:
            nxt = p[(i + 1) % poly.n] - p[i]
            corners.append(
                CornerInfo(i, loc, CornerKind.REENTRANT_EDGE, ang, alpha=math.pi / ang,
                           a=loc[0], phi0=math.atan2(nxt[1], nxt[0]))
            )
        else:
            corners.append(CornerInfo(i, loc, CornerKind.REGULAR, ang))
    edges = [c.location for c in corners if c.kind is CornerKind.REENTRANT_EDGE]
    if len(set(edges)) != len(edges):
        raise GeometryError("coincident reentrant edges")
    return corners


def reentrant_edges(corners: list[CornerInfo]) -> list[CornerInfo]:
    return [c for c in corners if c.kind is CornerKind.REENTRANT_EDGE]


def sharp_vertices(corners: list[CornerInfo]) -> list[CornerInfo]:
    return [c for c in corners if c.kind is CornerKind.CONICAL_VERTEX and c.sharp]


def local_coords(r, z, corner: CornerInfo) -> tuple[np.ndarray, np.ndarray]:
    """Distance ``rho`` to the corner and the corner angle ``phi``.

    Edges: ``phi`` in [0, interior_angle] inside the polygon, with the branch
    cut placed in the middle of the exterior wedge.  Vertices: ``phi`` in
    [0, pi] measured from the axis ray that enters the polygon.
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    dr = r - corner.location[0]
    dz = z - corner.location[1]
    rho = np.hypot(dr, dz)
    if corner.kind is CornerKind.REENTRANT_EDGE:
        gap = 0.5 * (2.0 * math.pi - corner.interior_angle)
        theta = np.arctan2(dz, dr)
        phi = np.mod(theta - corner.phi0 + gap, 2.0 * math.pi) - gap
        return rho, phi
    if corner.kind is CornerKind.CONICAL_VERTEX:
        return rho, np.arctan2(r, corner.axis_dir * dz)
    raise GeometryError("local coordinates are only defined at singular corners")


@dataclass(frozen=True)
class ExponentChoice:
    alpha0: float
    alpha1: float


def choose_exponents(edge: CornerInfo, vertex: CornerInfo | None = None,
                     margin: float = 0.05) -> ExponentChoice:
    """Pick 1/2 < alpha0 < alpha and 1/2 < alpha1 < min(alpha, nu + 1/2)."""
    alpha = edge.alpha
    if alpha is None:
        raise GeometryError("exponents need a reentrant edge")
    if not 0.0 < margin < (alpha - 0.5) / 2.0:
        raise GeometryError(f"margin {margin} outside (0, {(alpha - 0.5) / 2.0})")
    cap = alpha if vertex is None or vertex.nu is None else min(alpha, vertex.nu + 0.5)
    alpha0 = alpha - margin
    alpha1 = cap - margin
    if alpha0 <= 0.5 or alpha1 <= 0.5:
        raise GeometryError("margin too large: exponents fall below 1/2")
    return ExponentChoice(alpha0, alpha1)
