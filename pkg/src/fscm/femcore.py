"""P1 assembly of the weighted forms, discrete spaces and sparse SPD solves.

Forms live on the meridian section with measure dr dz:

    a_k(u, v) = int r grad u . grad v + (k^2 / r) u v,
    (u | v)   = int r u v            (the L^2_1 product).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .mesh import NodeTag, TriMesh
from .quadrature import QuadratureSet

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-12


class Space(enum.Enum):
    FULL = "full"
    VANISH_ALL = "vanish_all"              # zero on the whole boundary
    VANISH_DIRICHLET = "vanish_dirichlet"  # zero on the Dirichlet part only


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeIndex:
    k: int

    @property
    def mu(self) -> int:
        return self.k * self.k - 4


def space_for_mode(k: int) -> Space:
    return Space.VANISH_DIRICHLET if k == 0 else Space.VANISH_ALL


@dataclass
class DofMap:
    mesh: TriMesh
    space: Space
    free: np.ndarray = field(init=False)
    node_to_dof: np.ndarray = field(init=False)

    def __post_init__(self):
        tags = self.mesh.node_tags
        if self.space is Space.FULL:
            mask = np.ones(len(tags), dtype=bool)
        elif self.space is Space.VANISH_ALL:
            mask = tags == NodeTag.INTERIOR
        else:
            mask = (tags == NodeTag.INTERIOR) | (tags == NodeTag.ON_AXIS)
        self.free = np.flatnonzero(mask)
        self.node_to_dof = np.full(len(tags), -1, dtype=np.int64)
        self.node_to_dof[self.free] = np.arange(len(self.free))

    @property
    def n(self) -> int:
        return len(self.free)

    @property
    def constrained(self) -> np.ndarray:
        return np.flatnonzero(self.node_to_dof < 0)

    def extend(self, x, dtype=None) -> np.ndarray:
        """Nodal vector that is x on free nodes and zero elsewhere."""
        x = np.asarray(x)
        out = np.zeros(self.mesh.n_nodes, dtype=dtype or x.dtype)
        out[self.free] = x
        return out


def hat_gradients(mesh: TriMesh) -> np.ndarray:
    """Constant gradients (m, 3, 2) of the three barycentric functions per triangle."""
    v = mesh.vertex_coords()
    area2 = 2.0 * mesh.areas
    g = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        p, q = v[:, (i + 1) % 3], v[:, (i + 2) % 3]
        g[:, i, 0] = (p[:, 1] - q[:, 1]) / area2
        g[:, i, 1] = (q[:, 0] - p[:, 0]) / area2
    return g


def _element_to_global(mesh: TriMesh, local: np.ndarray):
    """Sparse matrix from per-element 3x3 blocks (m, 3, 3)."""
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def weighted_stiffness(mesh: TriMesh) -> sparse.csr_matrix:
    """int r grad phi_i . grad phi_j, exact since r is affine."""
    g = hat_gradients(mesh)
    rc = mesh.vertex_coords()[:, :, 0].mean(axis=1)
    local = np.einsum("eid,ejd->eij", g, g) * (mesh.areas * rc)[:, None, None]
    return _element_to_global(mesh, local)


def quad_mass(qs: QuadratureSet, weight: np.ndarray) -> sparse.csr_matrix:
    """int weight phi_i phi_j evaluated with the quadrature set."""
    mesh = qs.mesh
    m = mesh.n_triangles
    local = np.empty((m, 3, 3))
    wq = qs.w * weight
    for i in range(3):
        for j in range(i, 3):
            s = np.bincount(qs.elem, weights=wq * qs.bary[:, i] * qs.bary[:, j], minlength=m)
            local[:, i, j] = s
            local[:, j, i] = s
    return _element_to_global(mesh, local)


def assemble_mass_w(mesh: TriMesh, tau: int, space: Space, qs: QuadratureSet) -> sparse.csr_matrix:
    """Matrix of the weighted product int r^tau phi_i phi_j over the free nodes."""
    if tau not in (1, -1, -3):
        raise ValueError("tau must be 1, -1 or -3")
    if tau < 0 and space is not Space.VANISH_ALL:
        raise ValueError("negative weights need a space without axis nodes")
    dm = DofMap(mesh, space)
    full = quad_mass(qs, qs.r ** float(tau))
    return full[dm.free][:, dm.free].tocsr()


@dataclass
class ModeOperator:
    """Full-node matrix of a_k for one mode plus its factorized free block."""

    mesh: TriMesh
    k: int
    full: sparse.csr_matrix
    dofs: DofMap
    _lu: object = None

    @property
    def free_block(self) -> sparse.csc_matrix:
        f = self.dofs.free
        return self.full[f][:, f].tocsc()

    def apply(self, u_nodal: np.ndarray) -> np.ndarray:
        """Full-node vector a_k(u, phi_i)."""
        return self.full @ u_nodal

    def solve(self, rhs_free: np.ndarray) -> np.ndarray:
        if self._lu is None:
            self._lu = SPDSolver(self.free_block)
        return self._lu.solve(rhs_free)


class Assembler:
    """Caches mode-independent pieces of a_k on one mesh."""

    def __init__(self, mesh: TriMesh, qs: QuadratureSet):
        self.mesh = mesh
        self.qs = qs
        self.stiff = weighted_stiffness(mesh)
        self.mass_m1 = quad_mass(qs, 1.0 / qs.r)
        self._ops: dict[int, ModeOperator] = {}

    def operator(self, k: int, space: Space | None = None) -> ModeOperator:
        k = abs(int(k))
        space = space or space_for_mode(k)
        if k != 0 and space is not Space.VANISH_ALL:
            raise ValueError("modes with k != 0 live in the space vanishing on the whole boundary")
        key = (k, space)
        if key not in self._ops:
            full = (self.stiff + (k * k) * self.mass_m1).tocsr() if k else self.stiff
            self._ops[key] = ModeOperator(self.mesh, k, full, DofMap(self.mesh, space))
        return self._ops[key]

    def release(self, k: int) -> None:
        for key in [key for key in self._ops if key[0] == abs(k)]:
            del self._ops[key]


def assemble_ak(mesh: TriMesh, k: int, space: Space, qs: QuadratureSet) -> sparse.csr_matrix:
    if space is not space_for_mode(k):
        raise ValueError(f"mode {k} is posed on {space_for_mode(k).value}, not {space.value}")
    full = weighted_stiffness(mesh)
    if k:
        full = full + (k * k) * quad_mass(qs, 1.0 / qs.r)
    dm = DofMap(mesh, space)
    return full[dm.free][:, dm.free].tocsr()


def load_from_values(qs: QuadratureSet, values: np.ndarray) -> np.ndarray:
    """Full-node vector int values * phi_i (values already include any weight)."""
    n = qs.mesh.n_nodes
    t = qs.mesh.triangles[qs.elem]
    wv = qs.w * values
    if np.iscomplexobj(wv):
        out = np.zeros(n, dtype=complex)
        for i in range(3):
            out += np.bincount(t[:, i], weights=wv.real * qs.bary[:, i], minlength=n)
            out += 1j * np.bincount(t[:, i], weights=wv.imag * qs.bary[:, i], minlength=n)
        return out
    out = np.zeros(n)
    for i in range(3):
        out += np.bincount(t[:, i], weights=wv * qs.bary[:, i], minlength=n)
    return out


def assemble_load(fk, mesh: TriMesh, space: Space, qs: QuadratureSet) -> np.ndarray:
    """Free-node vector (f^k | phi_i) = int f^k phi_i r."""
    vals = np.asarray(fk(qs.r, qs.z)) if callable(fk) else np.asarray(fk)
    full = load_from_values(qs, vals * qs.r)
    return full[DofMap(mesh, space).free]


class SPDSolver:
    """Sparse LU of a real symmetric positive definite matrix."""

    def __init__(self, A):
        self.A = sparse.csc_matrix(A)
        if self.A.shape[0] == 0:
            self._lu = None
            return
        if self.A.diagonal().min() <= 0:
            raise SolverError("matrix has a non-positive diagonal entry")
        try:
            self._lu = splu(self.A, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    def _solve_real(self, b):
        x = self._lu.solve(b)
        nb = np.linalg.norm(b)
        for _ in range(3):
            res = b - self.A @ x
            if np.linalg.norm(res) <= RESIDUAL_TOL * nb:
                return x
            x = x + self._lu.solve(res)
        rel = np.linalg.norm(b - self.A @ x) / nb
        if rel > RESIDUAL_TOL:
            raise SolverError(f"relative residual {rel:.3e} above {RESIDUAL_TOL}")
        return x

    def solve(self, b):
        b = np.asarray(b)
        if self._lu is None:
            return np.zeros_like(b)
        if not np.any(b):
            return np.zeros_like(b, dtype=b.dtype if np.iscomplexobj(b) else float)
        if np.iscomplexobj(b):
            re = self._solve_real(b.real.copy()) if np.any(b.real) else np.zeros(len(b))
            im = self._solve_real(b.imag.copy()) if np.any(b.imag) else np.zeros(len(b))
            return re + 1j * im
        return self._solve_real(b.astype(float))


def solve_spd(A, b) -> np.ndarray:
    return SPDSolver(A).solve(b)


def fe_values(qs: QuadratureSet, u_nodal: np.ndarray) -> np.ndarray:
    t = qs.mesh.triangles[qs.elem]
    return np.einsum("qi,qi->q", qs.bary, u_nodal[t])


def fe_gradients(mesh: TriMesh, u_nodal: np.ndarray, grads: np.ndarray | None = None) -> np.ndarray:
    """Per-element constant gradient (m, 2)."""
    g = hat_gradients(mesh) if grads is None else grads
    return np.einsum("eid,ei->ed", g, u_nodal[mesh.triangles])


@dataclass
class Norms:
    seminorm_1_1: float
    norm_0_1: float
    norm_0_m1: float
    norm_k: float

    @property
    def triple_1_1(self) -> float:
        """Canonical norm of H^1_1 intersected with L^2_{-1}."""
        return float(np.sqrt(self.seminorm_1_1**2 + self.norm_0_1**2 + self.norm_0_m1**2))


def norms_from_samples(qs: QuadratureSet, values, grads, k: int) -> Norms:
    """Weighted norms of a field sampled at the quadrature points.

    ``grads`` has shape (nq, 2).
    """
    r, w = qs.r, qs.w
    semi = float(np.sum(w * r * (np.abs(grads[:, 0]) ** 2 + np.abs(grads[:, 1]) ** 2)))
    l2 = float(np.sum(w * r * np.abs(values) ** 2))
    lm1 = float(np.sum(w * np.abs(values) ** 2 / r))
    return Norms(np.sqrt(semi), np.sqrt(l2), np.sqrt(lm1), np.sqrt(semi + k * k * lm1))


def weighted_norms(u_nodal: np.ndarray, mesh: TriMesh, k: int, qs: QuadratureSet,
                   augmentation=None) -> Norms:
    """Norms of a P1 function plus an optional closed-form augmentation.

    ``augmentation`` is any object with ``value(r, z)`` and ``grad(r, z)``.
    """
    u_nodal = np.asarray(u_nodal)
    if k != 0:
        axis = (mesh.node_tags == NodeTag.ON_AXIS) | (mesh.node_tags == NodeTag.ON_AXIS_END)
        if np.any(np.abs(u_nodal[axis]) > 0):
            raise ValueError("the r^-1 norm needs a function vanishing on the axis")
    vals = fe_values(qs, u_nodal)
    g = fe_gradients(mesh, u_nodal)[qs.elem]
    if augmentation is not None:
        vals = vals + augmentation.value(qs.r, qs.z)
        gr, gz = augmentation.grad(qs.r, qs.z)
        g = g + np.column_stack([gr, gz])
    return norms_from_samples(qs, vals, g, k)


class Composite:
    """P1 function plus a linear combination of closed-form fields.

    Closed forms provide ``value(r, z)`` and ``grad(r, z) -> (dr, dz)`` and are
    compared by equality, so terms built from equal closed forms merge.
    """

    def __init__(self, mesh: TriMesh, nodal, terms=()):
        self.mesh = mesh
        self.nodal = np.asarray(nodal)
        merged: dict = {}
        for coef, cf in terms:
            merged[cf] = merged.get(cf, 0.0) + coef
        self.terms = [(c, cf) for cf, c in merged.items()]

    def _combine(self, other: "Composite", sign: float) -> "Composite":
        a, b = self, other
        if a.mesh is not b.mesh:
            if b.mesh.n_nodes >= a.mesh.n_nodes:
                a = a.prolongate(b.mesh)
            else:
                b = b.prolongate(a.mesh)
        return Composite(a.mesh, a.nodal + sign * b.nodal,
                         list(a.terms) + [(sign * c, cf) for c, cf in b.terms])

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def scaled(self, s) -> "Composite":
        return Composite(self.mesh, s * self.nodal, [(s * c, cf) for c, cf in self.terms])

    def conj(self) -> "Composite":
        return Composite(self.mesh, np.conj(self.nodal), [(np.conj(c), cf) for c, cf in self.terms])

    def prolongate(self, fine: TriMesh) -> "Composite":
        if fine is self.mesh:
            return self
        nodal = fine.prolongation_from(self.mesh) @ self.nodal
        return Composite(fine, nodal, self.terms)

    def values(self, qs: QuadratureSet) -> np.ndarray:
        out = fe_values(qs, self.nodal)
        for c, cf in self.terms:
            if c != 0:
                out = out + c * cf.value(qs.r, qs.z)
        return out

    def gradients(self, qs: QuadratureSet) -> np.ndarray:
        g = fe_gradients(qs.mesh, self.nodal)[qs.elem]
        for c, cf in self.terms:
            if c != 0:
                gr, gz = cf.grad(qs.r, qs.z)
                g = g + c * np.column_stack([gr, gz])
        return g

    def norms(self, qs: QuadratureSet, k: int) -> Norms:
        if qs.mesh is not self.mesh:
            return self.prolongate(qs.mesh).norms(qs, k)
        return norms_from_samples(qs, self.values(qs), self.gradients(qs), k)

    def __call__(self, r, z):
        """Point evaluation (NaN outside the mesh)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        tri, bary = self.mesh.locate(np.column_stack([r, z]))
        nodal = self.nodal[self.mesh.triangles[np.maximum(tri, 0)]]
        out = np.einsum("qi,qi->q", bary, nodal)
        for c, cf in self.terms:
            if c != 0:
                out = out + c * cf.value(r, z)
        return np.where(tri >= 0, out, np.nan)
