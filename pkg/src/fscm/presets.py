"""Named meridian geometries and right-hand sides for studies."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fourier import SQRT_2PI, FourierData, analyze
from .geometry import CornerKind, MeridianPolygon, classify_corners

GEOMETRIES = {
    "square": (((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)),
               "unit square, convex, no singularity"),
    "L": (((0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)),
          "L-shape, reentrant edge of angle 3pi/2 at radius a = 1"),
    # the conical vertex sits at the origin so that graded quadrature can resolve it fully
    "L-sharp": (((0.0, -1.5), (2.0, -1.5), (2.0, -0.5), (1.0, -0.5), (1.0, 0.5),
                 (0.5, math.sqrt(3.0) / 2.0), (0.0, 0.0)),
                "L-shape with a reentrant edge at a = 1 and a sharp 150 degree conical vertex"),
}


def geometry(shape) -> MeridianPolygon:
    """A preset name or an explicit list of (r, z) vertices."""
    if isinstance(shape, str):
        if shape not in GEOMETRIES:
            raise KeyError(f"unknown geometry preset {shape!r}; known: {sorted(GEOMETRIES)}")
        return MeridianPolygon(GEOMETRIES[shape][0])
    return MeridianPolygon(tuple(tuple(float(c) for c in v) for v in shape))


@dataclass(frozen=True)
class RHS:
    """A real source f(r, theta, z) with an optional closed form for its modes."""

    name: str
    field: Callable
    closed_modes: Callable | None = None     # k -> callable (r, z), exact f^k
    band: int | None = None                  # largest |k| with f^k != 0, None if unbounded

    def fourier(self, N: int) -> FourierData:
        if self.closed_modes is not None:
            return FourierData.from_modes(self.closed_modes, N, real=True)
        return analyze(self.field, N)


def _zero(r, z):
    return np.zeros(np.broadcast(np.asarray(r), np.asarray(z)).shape)


def _const() -> RHS:
    def modes(k):
        if k == 0:
            return lambda r, z: SQRT_2PI + _zero(r, z)
        return _zero
    return RHS("const", lambda r, t, z: 1.0 + _zero(r, z) + 0.0 * t, modes, 0)


def _smooth3d() -> RHS:
    # 1 + z + x + (x^2 - y^2) + (3 x^2 y - y^3), a polynomial in Cartesian coordinates
    def f(r, t, z):
        return 1.0 + z + r * np.cos(t) + r**2 * np.cos(2 * t) + r**3 * np.sin(3 * t)

    c = math.sqrt(math.pi / 2.0)

    def modes(k):
        table = {0: lambda r, z: SQRT_2PI * (1.0 + z + 0.0 * r),
                 1: lambda r, z: c * r + 0.0 * z, -1: lambda r, z: c * r + 0.0 * z,
                 2: lambda r, z: c * r**2 + 0.0 * z, -2: lambda r, z: c * r**2 + 0.0 * z,
                 3: lambda r, z: -1j * c * r**3 + 0.0 * z, -3: lambda r, z: 1j * c * r**3 + 0.0 * z}
        return table.get(k, _zero)

    return RHS("smooth3d", f, modes, 3)


def tail_series(theta):
    """sum_{k>=1} cos(k theta) / k^2 = pi^2/6 - pi t/2 + t^2/4 with t = theta mod 2 pi."""
    t = np.mod(theta, 2.0 * np.pi)
    return np.pi**2 / 6.0 - np.pi * t / 2.0 + t * t / 4.0


def _tail2() -> RHS:
    # f^0 = sqrt(2 pi), f^k = sqrt(2 pi) / k^2
    def f(r, t, z):
        return 1.0 + 2.0 * tail_series(t) + _zero(r, z)

    def modes(k):
        s = SQRT_2PI / (k * k) if k else SQRT_2PI
        return lambda r, z: s + _zero(r, z)

    return RHS("tail2", f, modes, None)


def corner_bump(center, width: float = 0.1) -> RHS:
    """Axisymmetric Gaussian exp(-|x - center|^2 / width) in the meridian plane."""
    rc, zc = center

    def g(r, z):
        return np.exp(-((np.asarray(r) - rc) ** 2 + (np.asarray(z) - zc) ** 2) / width)

    def modes(k):
        return (lambda r, z: SQRT_2PI * g(r, z)) if k == 0 else _zero

    return RHS("bump", lambda r, t, z: g(r, z) + 0.0 * t, modes, 0)


RHS_PRESETS = {
    "const": "f = 1",
    "smooth3d": "polynomial in (x, y, z), Fourier modes |k| <= 3",
    "tail2": "f^k = sqrt(2 pi) / k^2, a slowly decaying Fourier tail",
    "bump": "Gaussian of width 0.1 centred at the reentrant corner (or the polygon centroid)",
}


def rhs(name: str, poly: MeridianPolygon | None = None) -> RHS:
    if name == "const":
        return _const()
    if name == "smooth3d":
        return _smooth3d()
    if name == "tail2":
        return _tail2()
    if name == "bump":
        if poly is None:
            raise ValueError("the bump source needs the geometry")
        edges = [c for c in classify_corners(poly) if c.kind is CornerKind.REENTRANT_EDGE]
        center = edges[0].location if edges else tuple(poly.points.mean(axis=0))
        return corner_bump(center)
    raise KeyError(f"unknown rhs preset {name!r}; known: {sorted(RHS_PRESETS)}")
