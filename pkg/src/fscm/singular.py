"""Singular functions for the reentrant edge and the sharp conical vertex.

Four families are supported:

* ``EDGE2``, ``EDGE1``, ``EDGE0``: the edge singularity for the operators
  Delta_2, Delta_1 and Delta_0 (the mode 2 pair serves every |k| >= 2);
* ``CONE0``: the conical vertex singularity for Delta_0.

Each family has closed-form principal parts of the dual function p_p (with its
Laplacian theta_p = Delta_k p_p) and of the primal function phi_P (with
psi_P = Delta_k phi_P).  The discrete dual is p_p plus a P1 correction, the
discrete primal is a P1 function plus delta_h * phi_P.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import specfun
from .femcore import (Assembler, Composite, Space, fe_values, hat_gradients, load_from_values)
from .geometry import CornerInfo, CornerKind, local_coords
from .mesh import TriMesh
from .quadrature import QuadratureSet


class FamilyId(enum.Enum):
    EDGE2 = "edge2"
    EDGE1 = "edge1"
    EDGE0 = "edge0"
    CONE0 = "cone0"

    @property
    def k(self) -> int:
        return {"edge2": 2, "edge1": 1, "edge0": 0, "cone0": 0}[self.value]

    @property
    def space(self) -> Space:
        return Space.VANISH_ALL if self.k else Space.VANISH_DIRICHLET


def _edge_frame(r, z, corner):
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    rho, phi = local_coords(r, z, corner)
    if np.any(rho == 0.0):
        raise ValueError("closed forms are singular at the corner itself")
    return r, rho, phi


def _power_sine_grad(rho, phi, s, phi0):
    """Gradient of rho^s sin(s phi) in (r, z)."""
    f = s * rho ** (s - 1.0)
    arg = (s - 1.0) * phi - phi0
    return f * np.sin(arg), f * np.cos(arg)


@dataclass(frozen=True)
class EdgeDual:
    """p_p = (r/a)^k (1 - c (r - a)/a) rho^-alpha sin(alpha phi), c = k + 1/2."""

    corner: CornerInfo
    k: int

    @property
    def c(self) -> float:
        return self.k + 0.5

    def _m(self, r):
        a = self.corner.a
        return (r / a) ** self.k * (1.0 - self.c * (r - a) / a)

    def _dm(self, r):
        a, k = self.corner.a, self.k
        d = (k * r ** (k - 1) / a**k if k else 0.0) * (1.0 - self.c * (r - a) / a)
        return d - (r / a) ** k * self.c / a

    def value(self, r, z):
        r, rho, phi = _edge_frame(r, z, self.corner)
        al = self.corner.alpha
        return self._m(r) * rho ** (-al) * np.sin(al * phi)

    def grad(self, r, z):
        r, rho, phi = _edge_frame(r, z, self.corner)
        al = self.corner.alpha
        g = rho ** (-al) * np.sin(al * phi)
        # rho^-alpha sin(alpha phi) = -rho^s sin(s phi) with s = -alpha
        gr, gz = _power_sine_grad(rho, phi, -al, self.corner.phi0)
        m = self._m(r)
        return self._dm(r) * g - m * gr, -m * gz

    def lap(self, r, z):
        """theta_p = Delta_k p_p."""
        r, rho, phi = _edge_frame(r, z, self.corner)
        a, al, k, c = self.corner.a, self.corner.alpha, self.k, self.c
        phip = phi + self.corner.phi0
        bracket = -2.0 * c * c * np.sin(al * phi) + (2 * k + 3) * c * al * np.cos(phip) * np.sin(al * phi + phip)
        return r ** (k - 1) / a ** (k + 1) * rho ** (-al) * bracket


@dataclass(frozen=True)
class EdgePrimal:
    """phi_P = (r/a)^k rho^alpha sin(alpha phi)."""

    corner: CornerInfo
    k: int

    def value(self, r, z):
        r, rho, phi = _edge_frame(r, z, self.corner)
        al = self.corner.alpha
        return (r / self.corner.a) ** self.k * rho**al * np.sin(al * phi)

    def grad(self, r, z):
        r, rho, phi = _edge_frame(r, z, self.corner)
        a, al, k = self.corner.a, self.corner.alpha, self.k
        g = rho**al * np.sin(al * phi)
        gr, gz = _power_sine_grad(rho, phi, al, self.corner.phi0)
        m = (r / a) ** k
        dm = k * r ** (k - 1) / a**k if k else 0.0
        return dm * g + m * gr, m * gz

    def lap(self, r, z):
        """psi_P = (2k + 1) r^(k-1) / a^k * alpha rho^(alpha-1) sin((alpha-1) phi - phi0)."""
        r, rho, phi = _edge_frame(r, z, self.corner)
        a, al, k = self.corner.a, self.corner.alpha, self.k
        return (2 * k + 1) * r ** (k - 1) / a**k * al * rho ** (al - 1.0) * np.sin((al - 1.0) * phi - self.corner.phi0)


@dataclass(frozen=True)
class ConeField:
    """rho^s P_nu(cos phi) around a conical vertex, harmonic for Delta_0."""

    corner: CornerInfo
    s: float

    def _frame(self, r, z):
        r = np.asarray(r, dtype=float)
        z = np.asarray(z, dtype=float)
        dz = self.corner.axis_dir * (z - self.corner.location[1])
        rho = np.hypot(r, dz)
        if np.any(rho == 0.0):
            raise ValueError("closed forms are singular at the vertex itself")
        x = np.clip(dz / rho, -1.0, 1.0)
        return r, rho, x

    def value(self, r, z):
        _, rho, x = self._frame(r, z)
        return rho**self.s * specfun.legendre_p(self.corner.nu, x)

    def grad(self, r, z):
        r, rho, x = self._frame(r, z)
        nu, s, d = self.corner.nu, self.s, self.corner.axis_dir
        p = specfun.legendre_p(nu, x)
        dp = specfun.legendre_p_dx(nu, x)
        ps = rho**s
        # d rho/dr = r/rho, d rho/dz = d x, dx/dr = -x r/rho^2, dx/dz = d (1 - x^2)/rho
        gr = s * ps / rho * (r / rho) * p + ps * dp * (-x * r / rho**2)
        gz = s * ps / rho * d * x * p + ps * dp * d * (1.0 - x * x) / rho
        return gr, gz

    def lap(self, r, z):
        return np.zeros(np.broadcast(np.asarray(r), np.asarray(z)).shape)


@dataclass(frozen=True)
class SingularFamily:
    id: FamilyId
    corner: CornerInfo
    dual_pp: object
    primal_phiP: object

    @property
    def k(self) -> int:
        return self.id.k

    @property
    def space(self) -> Space:
        return self.id.space

    def normalizer(self) -> float:
        """delta = ||p_s||^2_{0,1} / normalizer."""
        if self.id is FamilyId.CONE0:
            return specfun.delta0c_normalizer(self.corner.nu, self.corner.beta_aperture)
        return self.corner.a * math.pi


def make_family(fid: FamilyId, corner: CornerInfo) -> SingularFamily:
    if fid is FamilyId.CONE0:
        if corner.kind is not CornerKind.CONICAL_VERTEX or not corner.sharp:
            raise ValueError("the conical family needs a sharp conical vertex")
        return SingularFamily(fid, corner, ConeField(corner, -corner.nu - 1.0), ConeField(corner, corner.nu))
    if corner.kind is not CornerKind.REENTRANT_EDGE:
        raise ValueError("edge families need a reentrant edge")
    return SingularFamily(fid, corner, EdgeDual(corner, fid.k), EdgePrimal(corner, fid.k))


def principal_eval(family: SingularFamily, r, z) -> dict:
    """All closed-form quantities of a family at the given points."""
    r = np.asarray(r, dtype=float)
    if family.id is FamilyId.EDGE0 and np.any(r == 0.0):
        raise ValueError("theta_p and psi_P of the mode 0 edge family have a 1/r factor")
    pp, ph = family.dual_pp, family.primal_phiP
    return {"p_p": pp.value(r, z), "grad_p_p": pp.grad(r, z), "theta_p": pp.lap(r, z),
            "phi_P": ph.value(r, z), "grad_phi_P": ph.grad(r, z), "psi_P": ph.lap(r, z)}


def _safe_nodal(cf, mesh: TriMesh, nodes: np.ndarray, corner: CornerInfo) -> np.ndarray:
    """Nodal values of a closed form on the given nodes; zero at the corner node."""
    pts = mesh.nodes[nodes]
    at_corner = np.linalg.norm(pts - np.asarray(corner.location), axis=1) < 1e-14
    out = np.zeros(len(nodes))
    ok = ~at_corner
    if np.any(ok):
        out[ok] = cf.value(pts[ok, 0], pts[ok, 1])
    return out


def closed_form_ak(qs: QuadratureSet, cf, k: int, grads=None) -> np.ndarray:
    """Full-node vector a_k(cf, phi_i) by quadrature."""
    mesh = qs.mesh
    g = hat_gradients(mesh) if grads is None else grads
    gr, gz = cf.grad(qs.r, qs.z)
    n = mesh.n_nodes
    t = mesh.triangles[qs.elem]
    out = np.zeros(n)
    ge = g[qs.elem]
    for i in range(3):
        stiff = qs.r * (gr * ge[:, i, 0] + gz * ge[:, i, 1])
        w = qs.w * stiff
        if k:
            w = w + qs.w * (k * k) / qs.r * cf.value(qs.r, qs.z) * qs.bary[:, i]
        out += np.bincount(t[:, i], weights=w, minlength=n)
    return out


@dataclass
class DiscreteSingularPair:
    family: SingularFamily
    mesh: TriMesh
    dual: Composite
    dual_norm_sq: float
    delta_h: float
    primal: Composite
    dual_residual: float
    primal_residual: float

    @property
    def dual_norm(self) -> float:
        return math.sqrt(self.dual_norm_sq)

    def dual_values(self, qs: QuadratureSet) -> np.ndarray:
        return self.dual.values(qs)


def compute_dual(family: SingularFamily, asm: Assembler):
    """p_s^h = p_p + lifting + interior correction, and its L^2_1 norm squared."""
    mesh, qs = asm.mesh, asm.qs
    op = asm.operator(family.k, family.space)
    dofs = op.dofs
    lift = np.zeros(mesh.n_nodes)
    con = dofs.constrained
    lift[con] = -_safe_nodal(family.dual_pp, mesh, con, family.corner)
    rhs_full = load_from_values(qs, family.dual_pp.lap(qs.r, qs.z) * qs.r) - op.apply(lift)
    rhs = rhs_full[dofs.free]
    p0 = op.solve(rhs)
    residual = _rel_residual(op.free_block, p0, rhs)
    nodal = lift + dofs.extend(p0)
    dual = Composite(mesh, nodal, [(1.0, family.dual_pp)])
    vals = dual.values(qs)
    norm_sq = float(np.sum(qs.w * qs.r * vals**2))
    return dual, norm_sq, residual


def compute_delta(family: SingularFamily, dual_norm_sq: float) -> float:
    return dual_norm_sq / family.normalizer()


def compute_primal(family: SingularFamily, asm: Assembler, dual: Composite, delta_h: float):
    """phi_s^h = phi~_h + delta_h phi_P, phi~_h = -delta_h phi_P on the constrained nodes."""
    mesh, qs = asm.mesh, asm.qs
    op = asm.operator(family.k, family.space)
    dofs = op.dofs
    con = dofs.constrained
    lift = np.zeros(mesh.n_nodes)
    lift[con] = -delta_h * _safe_nodal(family.primal_phiP, mesh, con, family.corner)
    src = dual.values(qs) + delta_h * family.primal_phiP.lap(qs.r, qs.z)
    rhs_full = load_from_values(qs, src * qs.r) - op.apply(lift)
    rhs = rhs_full[dofs.free]
    x = op.solve(rhs)
    residual = _rel_residual(op.free_block, x, rhs)
    nodal = lift + dofs.extend(x)
    return Composite(mesh, nodal, [(delta_h, family.primal_phiP)]), residual


def _rel_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(A @ x - b) / nb) if nb else 0.0


def build_pair(family: SingularFamily, asm: Assembler) -> DiscreteSingularPair:
    dual, norm_sq, res_d = compute_dual(family, asm)
    delta = compute_delta(family, norm_sq)
    primal, res_p = compute_primal(family, asm, dual, delta)
    return DiscreteSingularPair(family, asm.mesh, dual, norm_sq, delta, primal, res_d, res_p)


def pairing(qs: QuadratureSet, values_a, values_b) -> complex:
    """(a | b) = int r a b (no conjugation)."""
    return np.sum(qs.w * qs.r * values_a * values_b)


__all__ = [
    "FamilyId", "SingularFamily", "DiscreteSingularPair", "EdgeDual", "EdgePrimal", "ConeField",
    "make_family", "principal_eval", "compute_dual", "compute_delta", "compute_primal", "build_pair",
    "closed_form_ak", "pairing", "fe_values",
]
