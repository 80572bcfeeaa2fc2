import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fscm import mesh as M
from fscm.femcore import Assembler
from fscm.geometry import MeridianPolygon, classify_corners, reentrant_edges, sharp_vertices
from fscm.mesh import NodeTag
from fscm.quadrature import build_quadrature
from fscm.singular import (FamilyId, SingularFamily, build_pair, compute_delta, make_family,
                           principal_eval)

L_SHARP = MeridianPolygon(((0.0, -1.5), (2.0, -1.5), (2.0, -0.5), (1.0, -0.5), (1.0, 0.5),
                           (0.5, math.sqrt(3.0) / 2.0), (0.0, 0.0)))
CORNERS = classify_corners(L_SHARP)
EDGE = reentrant_edges(CORNERS)[0]
CONE = sharp_vertices(CORNERS)[0]


def family(fid):
    return make_family(fid, CONE if fid is FamilyId.CONE0 else EDGE)


def lap_k(f, r, z, k, h):
    """Five-point Delta_k = d_rr + d_r / r + d_zz - k^2 / r^2."""
    return ((f(r + h, z) - 2 * f(r, z) + f(r - h, z)) / h**2
            + (f(r, z + h) - 2 * f(r, z) + f(r, z - h)) / h**2
            + (f(r + h, z) - f(r - h, z)) / (2 * h * r) - k * k / r**2 * f(r, z))


def sample_points(fam, n=200, seed=0):
    rng = np.random.default_rng(seed)
    c = np.asarray(fam.corner.location)
    pts = rng.uniform((0.0, -1.5), (2.0, 0.9), (20 * n, 2))
    pts = pts[L_SHARP.contains(pts[:, 0], pts[:, 1])]
    rho = np.linalg.norm(pts - c, axis=1)
    # the fields cross zero on the polygon sides, where relative FD errors are meaningless
    away = M._distance_to_boundary(L_SHARP, pts) > 0.02
    pts = pts[(rho > 0.05) & (pts[:, 0] > 0.05) & away]
    return pts[:n, 0], pts[:n, 1]


def fd_relative_error(fam, cf, r, z):
    c = fam.corner.location
    rho = np.hypot(r - c[0], z - c[1])
    # the step resolves both the corner scale rho and the axis scale r
    fd = lap_k(cf.value, r, z, fam.k, 1e-4 * np.minimum(rho, r))
    exact = cf.lap(r, z)
    # harmonic fields have a zero exact Laplacian, so measure against |f| / rho^2
    scale = np.maximum(np.abs(exact), np.abs(cf.value(r, z)) / rho**2)
    return np.max(np.abs(fd - exact) / scale)


@pytest.mark.parametrize("fid", list(FamilyId))
def test_principal_parts_fd_laplacian(fid):
    fam = family(fid)
    r, z = sample_points(fam)
    assert len(r) == 200
    assert fd_relative_error(fam, fam.dual_pp, r, z) <= 1e-4
    assert fd_relative_error(fam, fam.primal_phiP, r, z) <= 1e-4


def test_edge2_fd_at_tenth_of_radius():
    fam = family(FamilyId.EDGE2)
    a = fam.corner.a
    phis = np.linspace(0.2, 1.4, 7) * math.pi
    theta = fam.corner.phi0 + phis
    r = 1.0 + a / 10 * np.cos(theta)
    z = -0.5 + a / 10 * np.sin(theta)
    assert fd_relative_error(fam, fam.dual_pp, r, z) <= 1e-5


def test_cone_primal_is_harmonic():
    fam = family(FamilyId.CONE0)
    r, z = sample_points(fam, seed=3)
    rho = np.hypot(r, z)
    fd = lap_k(fam.primal_phiP.value, r, z, 0, 1e-4 * rho)
    assert np.all(np.abs(fd) <= 1e-5 * np.abs(fam.primal_phiP.value(r, z)) / rho**2 + 1e-12)
    assert not np.any(fam.primal_phiP.lap(r, z))


@pytest.mark.parametrize("fid", [FamilyId.EDGE2, FamilyId.EDGE1, FamilyId.EDGE0])
def test_edge_families_vanish_on_first_side(fid):
    fam = family(fid)
    rho = np.array([0.05, 0.3, 0.9])
    r = 1.0 + rho * math.cos(fam.corner.phi0)
    z = -0.5 + rho * math.sin(fam.corner.phi0)
    vals = principal_eval(fam, r, z)
    assert np.allclose(vals["p_p"], 0.0, atol=1e-14)
    assert np.allclose(vals["phi_P"], 0.0, atol=1e-14)


@pytest.mark.parametrize("fid", list(FamilyId))
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gradients_match_finite_differences(fid, seed):
    fam = family(fid)
    r, z = sample_points(fam, n=5, seed=seed)
    e = 1e-6
    for cf in (fam.dual_pp, fam.primal_phiP):
        gr, gz = cf.grad(r, z)
        fr = (cf.value(r + e, z) - cf.value(r - e, z)) / (2 * e)
        fz = (cf.value(r, z + e) - cf.value(r, z - e)) / (2 * e)
        scale = np.abs(fr) + np.abs(fz) + 1.0
        assert np.all(np.abs(gr - fr) + np.abs(gz - fz) <= 1e-6 * scale)


def test_principal_eval_errors():
    with pytest.raises(ValueError):
        principal_eval(family(FamilyId.EDGE2), [1.0], [-0.5])
    with pytest.raises(ValueError):
        principal_eval(family(FamilyId.CONE0), [0.0], [0.0])
    with pytest.raises(ValueError):
        principal_eval(family(FamilyId.EDGE0), [0.0], [-1.0])
    with pytest.raises(ValueError):
        make_family(FamilyId.CONE0, EDGE)
    with pytest.raises(ValueError):
        make_family(FamilyId.EDGE1, CONE)


def test_delta_formulas():
    fam = family(FamilyId.EDGE2)
    assert compute_delta(fam, fam.corner.a * math.pi) == pytest.approx(1.0, abs=1e-15)
    # a nu = 1 vertex of aperture pi/2 has normalizer 1
    right = dataclasses.replace(CONE, nu=1.0, beta_aperture=math.pi / 2)
    fam1 = SingularFamily(FamilyId.CONE0, right, None, None)
    assert compute_delta(fam1, 0.37) == pytest.approx(0.37, rel=1e-10)


@pytest.fixture(scope="module")
def pairs():
    mesh = M.triangulate(L_SHARP, 0.2)
    qs = build_quadrature(mesh, [EDGE.location, CONE.location])
    asm = Assembler(mesh, qs)
    return mesh, {fid: build_pair(family(fid), asm) for fid in FamilyId}


@pytest.mark.parametrize("fid", list(FamilyId))
def test_discrete_pair_contracts(pairs, fid):
    mesh, ps = pairs
    p = ps[fid]
    assert p.dual_residual <= 1e-12
    assert p.primal_residual <= 1e-12
    assert p.delta_h > 0
    assert p.dual_norm_sq > 0
    # both composites vanish on every Dirichlet node (and on the axis for k != 0)
    tags = mesh.node_tags
    fixed = (tags == NodeTag.ON_DIRICHLET) | (tags == NodeTag.ON_AXIS_END)
    if fid.k:
        fixed |= tags == NodeTag.ON_AXIS
    nodes = mesh.nodes[fixed]
    far = np.linalg.norm(nodes - np.asarray(p.family.corner.location), axis=1) > 1e-12
    nodes = nodes[far]
    assert np.abs(p.dual(nodes[:, 0], nodes[:, 1])).max() <= 1e-12
    assert np.abs(p.primal(nodes[:, 0], nodes[:, 1])).max() <= 1e-12
