"""Per-mode singular complement solves.

For each Fourier index k the regular part is a plain P1 Galerkin solution and
the singular part is a multiple of a discrete primal singular function:

* |k| >= 2 uses the mode 2 edge pair, a first Galerkin solve z_h, the
  coefficient c = [(f|p_s) - mu (z_h|p_s/r^2)] / ||p_s||^2 (mu = k^2 - 4) below
  the cutoff k < C* h^(-1/(2 - alpha0)), and a second solve for the regular part;
* |k| = 1 uses the mode 1 edge pair and c = (f|p_s) / ||p_s||^2;
* k = 0 uses the mode 0 edge pair and, if present, the sharp-vertex pair.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .femcore import Assembler, Composite, fe_values, load_from_values, space_for_mode
from .geometry import CornerKind, ExponentChoice, MeridianPolygon, choose_exponents, classify_corners
from .mesh import TriMesh
from .quadrature import QuadratureSet, build_quadrature
from .singular import DiscreteSingularPair, FamilyId, build_pair, closed_form_ak, make_family


@dataclass(frozen=True)
class SCMConfig:
    alpha0: float
    c_star: float = 1.0
    enable_scm: bool = True

    def __post_init__(self):
        if not self.c_star > 0:
            raise ValueError("c_star must be positive")

    def k_max(self, h: float) -> float:
        return self.c_star * h ** (-1.0 / (2.0 - self.alpha0))


@dataclass
class PairData:
    """A discrete singular pair with quantities reused by every mode."""

    pair: DiscreteSingularPair
    dual_q: np.ndarray       # p_s^h at the quadrature points
    ak_stiff: np.ndarray     # full-node vector of the r grad . grad part of a_k(phi_s^h, .)
    ak_mass: np.ndarray      # full-node vector of the (1/r) part, multiplied by k^2

    def ak_vector(self, k: int) -> np.ndarray:
        return self.ak_stiff + (k * k) * self.ak_mass


class Discretization:
    """Mesh, quadrature, assembler and singular pairs for one mesh."""

    def __init__(self, poly: MeridianPolygon, mesh: TriMesh, margin: float = 0.05,
                 c_star: float = 1.0, enable_scm: bool = True, depth: int | None = None):
        self.poly = poly
        self.mesh = mesh
        corners = classify_corners(poly)
        edges = [c for c in corners if c.kind is CornerKind.REENTRANT_EDGE]
        sharp = [c for c in corners if c.kind is CornerKind.CONICAL_VERTEX and c.sharp]
        if enable_scm and (len(edges) > 1 or len(sharp) > 1):
            raise ValueError("the solver supports one reentrant edge and at most one sharp vertex")
        self.edge = edges[0] if edges else None
        self.vertex = sharp[0] if sharp else None
        if self.edge is not None:
            self.exponents = choose_exponents(self.edge, self.vertex, margin)
        else:
            self.exponents = ExponentChoice(1.0, 1.0)
        self.cfg = SCMConfig(self.exponents.alpha0, c_star, enable_scm)
        singular_points = [c.location for c in edges + sharp]
        self.qs: QuadratureSet = build_quadrature(mesh, singular_points, depth=depth)
        self.asm = Assembler(mesh, self.qs)
        self.pairs: dict[FamilyId, PairData] = {}
        if enable_scm:
            if self.edge is not None:
                for fid in (FamilyId.EDGE2, FamilyId.EDGE1, FamilyId.EDGE0):
                    self.pairs[fid] = self._pair_data(build_pair(make_family(fid, self.edge), self.asm))
            if self.vertex is not None:
                self.pairs[FamilyId.CONE0] = self._pair_data(
                    build_pair(make_family(FamilyId.CONE0, self.vertex), self.asm))

    @property
    def h(self) -> float:
        return self.mesh.h

    def _pair_data(self, pair: DiscreteSingularPair) -> PairData:
        qs, asm = self.qs, self.asm
        tilde = pair.primal.nodal
        coef, phiP = pair.primal.terms[0]
        cf_stiff = closed_form_ak(qs, phiP, 0)
        cf_full1 = closed_form_ak(qs, phiP, 1)
        stiff = asm.stiff @ tilde + coef * cf_stiff
        mass = asm.mass_m1 @ tilde + coef * (cf_full1 - cf_stiff)
        return PairData(pair, pair.dual.values(qs), stiff, mass)


@dataclass
class ModeSolution:
    k: int
    u_tilde: np.ndarray                      # nodal values of the regular part
    coeffs: dict = field(default_factory=dict)
    evaluator: Composite | None = None
    z: np.ndarray | None = None              # first Galerkin solve (|k| >= 2)

    def conj(self) -> "ModeSolution":
        return ModeSolution(-self.k, np.conj(self.u_tilde), {f: np.conj(c) for f, c in self.coeffs.items()},
                            self.evaluator.conj(), None if self.z is None else np.conj(self.z))


def _fvalues(fk, qs: QuadratureSet) -> np.ndarray:
    return np.asarray(fk(qs.r, qs.z)) if callable(fk) else np.asarray(fk)


def _reconstruct(disc: Discretization, k: int, ut_nodal, coeffs: dict) -> Composite:
    nodal = np.array(ut_nodal, dtype=complex if np.iscomplexobj(ut_nodal) or
                     any(np.iscomplexobj(c) for c in coeffs.values()) else float)
    terms = []
    for fid, c in coeffs.items():
        if c == 0:
            continue
        primal = disc.pairs[fid].pair.primal
        nodal = nodal + c * primal.nodal
        terms += [(c * coef, cf) for coef, cf in primal.terms]
    return Composite(disc.mesh, nodal, terms)


def _galerkin(disc: Discretization, k: int, fq: np.ndarray):
    op = disc.asm.operator(k, space_for_mode(k))
    b = load_from_values(disc.qs, fq * disc.qs.r)[op.dofs.free]
    return op, b, op.solve(b)


def solve_mode_high(k: int, fk, disc: Discretization) -> ModeSolution:
    if abs(k) < 2:
        raise ValueError("high-mode solver needs |k| >= 2")
    qs = disc.qs
    fq = _fvalues(fk, qs)
    op, b, z = _galerkin(disc, k, fq)
    pd = disc.pairs.get(FamilyId.EDGE2)
    coeffs = {}
    ut = z
    if pd is not None:
        c = 0.0
        if disc.cfg.enable_scm and abs(k) < disc.cfg.k_max(disc.h):
            mu = k * k - 4
            z_q = fe_values(qs, op.dofs.extend(z))
            f_p = np.sum(qs.w * qs.r * fq * pd.dual_q)
            z_q_s = np.sum(qs.w * z_q * pd.dual_q / qs.r)
            c = (f_p - mu * z_q_s) / pd.pair.dual_norm_sq
            ut = op.solve(b - c * pd.ak_vector(k)[op.dofs.free])
        coeffs[FamilyId.EDGE2] = c
    ut_nodal = op.dofs.extend(ut)
    sol = ModeSolution(k, ut_nodal, coeffs, None, op.dofs.extend(z))
    sol.evaluator = _reconstruct(disc, k, ut_nodal, coeffs)
    return sol


def solve_mode_one(k: int, fk, disc: Discretization) -> ModeSolution:
    if abs(k) != 1:
        raise ValueError("mode-one solver needs |k| = 1")
    return _solve_with_formula(k, fk, disc, [FamilyId.EDGE1])


def solve_mode_zero(f0, disc: Discretization, coupled: bool = True) -> ModeSolution:
    """Mode 0 with the edge and (if sharp) vertex singularities.

    The two discrete duals are not orthogonal in general, so by default the
    coefficients solve the 2x2 Gram system; ``coupled=False`` uses the
    decoupled quotients (f|p_j)/||p_j||^2 instead.
    """
    return _solve_with_formula(0, f0, disc, [FamilyId.EDGE0, FamilyId.CONE0], coupled)


def coefficient_gram(disc: Discretization, fids) -> np.ndarray:
    """Gram matrix (p_i | p_j) of the discrete duals."""
    qs = disc.qs
    duals = [disc.pairs[f].dual_q for f in fids]
    return np.array([[np.sum(qs.w * qs.r * a * b) for b in duals] for a in duals])


def _solve_with_formula(k: int, fk, disc: Discretization, candidates, coupled: bool = True) -> ModeSolution:
    qs = disc.qs
    fq = _fvalues(fk, qs)
    op = disc.asm.operator(k, space_for_mode(k))
    b = load_from_values(qs, fq * qs.r)[op.dofs.free]
    fids = [f for f in candidates if f in disc.pairs]
    coeffs = {}
    rhs = b
    if fids:
        # with u = u~ + sum c_j phi_j and u~ regular, (f | p_i) = sum_j c_j (p_j | p_i)
        gram = coefficient_gram(disc, fids)
        proj = np.array([np.sum(qs.w * qs.r * fq * disc.pairs[f].dual_q) for f in fids])
        cvec = np.linalg.solve(gram, proj) if coupled else proj / np.diag(gram)
        for f, c in zip(fids, cvec):
            coeffs[f] = c
            rhs = rhs - c * disc.pairs[f].ak_vector(k)[op.dofs.free]
    ut = op.solve(rhs)
    ut_nodal = op.dofs.extend(ut)
    return ModeSolution(k, ut_nodal, coeffs, _reconstruct(disc, k, ut_nodal, coeffs))


def solve_mode(k: int, fk, disc: Discretization) -> ModeSolution:
    if k == 0:
        return solve_mode_zero(fk, disc)
    if abs(k) == 1:
        return solve_mode_one(k, fk, disc)
    return solve_mode_high(k, fk, disc)


def mode_error(sol: ModeSolution, reference: Composite, qs_fine: QuadratureSet) -> float:
    """||u_ref - u_h||_(k) on the (finer) mesh of the reference."""
    diff = reference - sol.evaluator
    return diff.norms(qs_fine, sol.k).norm_k


