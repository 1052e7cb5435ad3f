"""Schwarz preconditioners against dense materializations of their formulas."""

import numpy as np
import pytest
import scipy.sparse as sp

from maxwelldd.assembly import (BC, ProblemConfig, assemble_parts,
                                local_matrix_impedance, local_matrix_pec)
from maxwelldd.decomposition import (build_coarse_restriction, build_cover,
                                     galerkin_coarse_matrix)
from maxwelldd.mesh import build_cube_mesh, build_nested_pair
from maxwelldd.precond import Kind, Levels, build

RNG = np.random.default_rng(11)
ALL_KINDS = [Kind.AS, Kind.RAS, Kind.HRAS, Kind.HAS, Kind.IMPRAS, Kind.IMPHRAS]


def small_problem(bc=BC.PEC, n=4, k=3.0, kappa=9.0):
    mesh = build_cube_mesh(n)
    parts = assemble_parts(mesh, bc)
    a = parts.operator(k, kappa)
    cover = build_cover(mesh, 2, 1, bc)
    pair = build_nested_pair(n, 2)
    cs = build_coarse_restriction(pair, bc)
    pec_mats = [local_matrix_pec(a, s.interior_dofs) for s in cover.subdomains]
    imp_mats = [local_matrix_impedance(
        mesh, s.elements, ProblemConfig(k=k, kappa=kappa, bc=bc))[0]
        for s in cover.subdomains]
    return mesh, a, cover, cs, pec_mats, imp_mats, kappa


def dense_reference(kind, levels, a, cover, cs, pec_mats, imp_mats):
    """Straight-line dense evaluation of the preconditioner formulas."""
    n = a.shape[0]
    ad = a.toarray()
    terms = []
    for l, sub in enumerate(cover.subdomains):
        if kind.impedance_locals:
            dofs = sub.closure_dofs
            local = imp_mats[l].toarray()
            w = np.zeros(dofs.shape[0])
            w[np.searchsorted(sub.closure_dofs, sub.interior_dofs)] = \
                sub.pou_weights
        else:
            dofs = sub.interior_dofs
            local = pec_mats[l].toarray()
            w = sub.pou_weights
        r = np.zeros((dofs.shape[0], n))
        r[np.arange(dofs.shape[0]), dofs] = 1.0
        d = np.diag(w) if kind.weighted else np.eye(dofs.shape[0])
        terms.append(r.T @ d @ np.linalg.inv(local) @ r)
    s = sum(terms)
    if levels == Levels.ONE:
        return s
    r0 = cs.r0.toarray()
    a0 = r0 @ ad @ r0.T
    xi = r0.T @ np.linalg.inv(a0) @ r0
    if kind.hybrid:
        eye = np.eye(n)
        return (eye - xi @ ad) @ s @ (eye - ad @ xi) + xi
    return s + xi


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("levels", [Levels.ONE, Levels.TWO])
def test_apply_matches_dense_formula(kind, levels):
    mesh, a, cover, cs, pec_mats, imp_mats, kappa = small_problem()
    assert a.shape[0] <= 500
    mats = imp_mats if kind.impedance_locals else pec_mats
    pc = build(kind, levels, cover, mats, a, kappa,
               coarse_space=cs if levels == Levels.TWO else None)
    ref = dense_reference(kind, levels, a, cover, cs, pec_mats, imp_mats)
    for _ in range(20):
        r = RNG.standard_normal(a.shape[0]) + 1j * RNG.standard_normal(a.shape[0])
        z = pc.apply(r)
        zref = ref @ r
        assert np.linalg.norm(z - zref) <= 1e-9 * np.linalg.norm(zref)


def test_single_subdomain_one_level_inverts_a():
    mesh = build_cube_mesh(2)
    parts = assemble_parts(mesh, BC.PEC)
    kappa = 4.0
    a = parts.operator(2.0, kappa)
    cover = build_cover(mesh, 1, 0, BC.PEC)
    mats = [local_matrix_pec(a, cover.subdomains[0].interior_dofs)]
    for kind in (Kind.AS, Kind.RAS):
        pc = build(kind, Levels.ONE, cover, mats, a, kappa)
        r = RNG.standard_normal(a.shape[0]) + 1j * RNG.standard_normal(a.shape[0])
        x = pc.apply(r)
        assert np.linalg.norm(a @ x - r) <= 1e-10 * np.linalg.norm(r)


def test_two_level_factor_count():
    mesh, a, cover, cs, pec_mats, _, kappa = small_problem()
    pc = build(Kind.AS, Levels.TWO, cover, pec_mats, a, kappa, coarse_space=cs)
    assert len(pc.local_factors) == 8
    assert pc.coarse_factor is not None


def test_zero_absorption_rejected_and_missing_coarse():
    mesh, a, cover, cs, pec_mats, _, kappa = small_problem()
    with pytest.raises(ValueError):
        build(Kind.AS, Levels.TWO, cover, pec_mats, a, 0.0, coarse_space=cs)
    with pytest.raises(ValueError):
        build(Kind.HRAS, Levels.TWO, cover, pec_mats, a, kappa)
    with pytest.raises(ValueError):
        build(Kind.RAS, Levels.ONE, cover, pec_mats, a, kappa, coarse_space=cs)


def test_apply_linearity():
    mesh, a, cover, cs, pec_mats, imp_mats, kappa = small_problem()
    pc = build(Kind.HRAS, Levels.TWO, cover, pec_mats, a, kappa, coarse_space=cs)
    r = RNG.standard_normal(a.shape[0]) + 1j * RNG.standard_normal(a.shape[0])
    s = RNG.standard_normal(a.shape[0]) + 1j * RNG.standard_normal(a.shape[0])
    al, be = 1.3 - 0.4j, -0.2 + 2.1j
    lhs = pc.apply(al * r + be * s)
    rhs = al * pc.apply(r) + be * pc.apply(s)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_hras_straight_line_expansion():
    """apply == z1 + Xi r - Xi A z1 where z1 = local_sum((I - A Xi) r)."""
    mesh, a, cover, cs, pec_mats, _, kappa = small_problem()
    pc = build(Kind.HRAS, Levels.TWO, cover, pec_mats, a, kappa, coarse_space=cs)
    r0 = cs.r0.toarray()
    xi = r0.T @ np.linalg.inv(r0 @ a.toarray() @ r0.T) @ r0
    one_level = build(Kind.RAS, Levels.ONE, cover, pec_mats, a, kappa)
    r = RNG.standard_normal(a.shape[0]) + 1j * RNG.standard_normal(a.shape[0])
    z1 = one_level.apply(r - a @ (xi @ r))
    expected = z1 + xi @ r - xi @ (a @ z1)
    assert np.linalg.norm(pc.apply(r) - expected) \
        <= 1e-9 * np.linalg.norm(expected)


def test_as_materialization_symmetric():
    mesh, a, cover, cs, pec_mats, imp_mats, kappa = small_problem()
    m = dense_reference(Kind.AS, Levels.TWO, a, cover, cs, pec_mats, imp_mats)
    assert np.abs(m - m.T).max() <= 1e-10 * np.abs(m).max()


def test_xi_is_a_projection_in_the_a_inner_product():
    mesh, a, cover, cs, pec_mats, imp_mats, kappa = small_problem()
    r0 = cs.r0.toarray()
    ad = a.toarray()
    xi = r0.T @ np.linalg.inv(r0 @ ad @ r0.T) @ r0
    lhs = xi @ ad @ xi
    assert np.abs(lhs - xi).max() <= 1e-9 * np.abs(xi).max()


def test_parallel_workers_reproduce_serial(monkeypatch):
    mesh, a, cover, cs, pec_mats, imp_mats, kappa = small_problem()
    r = RNG.standard_normal(a.shape[0]) + 1j * RNG.standard_normal(a.shape[0])
    serial = build(Kind.RAS, Levels.TWO, cover, pec_mats, a, kappa,
                   coarse_space=cs).apply(r)
    monkeypatch.setenv("MAXWELLDD_WORKERS", "4")
    parallel = build(Kind.RAS, Levels.TWO, cover, pec_mats, a, kappa,
                     coarse_space=cs).apply(r)
    assert np.linalg.norm(serial - parallel) <= 1e-13 * np.linalg.norm(serial)


def test_wrong_dimension_rejected():
    mesh, a, cover, cs, pec_mats, imp_mats, kappa = small_problem()
    pc = build(Kind.AS, Levels.ONE, cover, pec_mats, a, kappa)
    with pytest.raises(ValueError):
        pc.apply(np.ones(3, dtype=complex))
    with pytest.raises(ValueError):
        build(Kind.IMPRAS, Levels.ONE, cover, pec_mats, a, kappa)
