"""Assembly oracles: element integrals, global operators, sources."""

import numpy as np
import pytest
import scipy.sparse as sp

from maxwelldd.assembly import (BC, RHS, DegenerateElementError, ProblemConfig,
                                assemble_ck, assemble_global, assemble_parts,
                                assemble_rhs, element_matrices, hcurl_error,
                                local_matrix_impedance, local_matrix_pec,
                                manufactured_curl, manufactured_field,
                                manufactured_source, write_matrix_market)
from maxwelldd.mesh import build_cube_mesh, interior_edge_set

REF_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
RNG = np.random.default_rng(42)


def gauss_tet_points(m=6):
    """Independent Duffy-style quadrature used as an integration oracle."""
    g, w = np.polynomial.legendre.leggauss(m)
    g = 0.5 * (g + 1)
    w = 0.5 * w
    u, v, t = np.meshgrid(g, g, g, indexing="ij")
    wu, wv, wt = np.meshgrid(w, w, w, indexing="ij")
    x = u
    y = v * (1 - u)
    z = t * (1 - u) * (1 - v)
    jac = (1 - u) ** 2 * (1 - v)
    pts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    return pts, (wu * wv * wt * jac).ravel()


def basis_values(verts, pts):
    """Edge basis functions evaluated pointwise from scratch."""
    mat = np.ones((4, 4))
    mat[:, 1:] = verts
    coef = np.linalg.inv(mat)
    homo = np.concatenate([np.ones((pts.shape[0], 1)), pts], axis=1)
    lam = homo @ coef                       # (P, 4)
    grads = coef[1:, :].T                   # (4, 3)
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    vals = np.stack([lam[:, a, None] * grads[b] - lam[:, b, None] * grads[a]
                     for a, b in pairs], axis=1)           # (P, 6, 3)
    curls = np.stack([2 * np.cross(grads[a], grads[b]) for a, b in pairs])
    return vals, curls


def map_to_tet(verts, ref_pts):
    return verts[0] + ref_pts @ (verts[1:] - verts[0])


def test_reference_tet_curl_entry():
    em = element_matrices(REF_TET, np.ones(6))
    # curl of the (v0,v1) basis is (0,-2,2); |tau| * 8 = 4/3
    assert em.curl_curl[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-14)
    _, curls = basis_values(REF_TET, np.zeros((1, 3)))
    assert np.allclose(curls[0], [0.0, -2.0, 2.0])


def test_element_matrices_against_quadrature_oracle():
    verts = REF_TET + 0.1 * RNG.standard_normal((4, 3))
    em = element_matrices(verts, np.ones(6))
    ref_pts, w = gauss_tet_points()
    pts = map_to_tet(verts, ref_pts)
    vol = abs(np.linalg.det(verts[1:] - verts[0])) / 6.0
    vals, curls = basis_values(verts, pts)
    mass = np.einsum("p,ped,pfd->ef", w, vals, vals) * 6 * vol
    curl = np.einsum("ed,fd->ef", curls, curls) * vol
    assert np.allclose(em.mass, mass, atol=1e-13)
    assert np.allclose(em.curl_curl, curl, atol=1e-13)


def test_element_matrices_signs():
    signs = np.array([1, -1, 1, -1, 1, -1.0])
    em0 = element_matrices(REF_TET, np.ones(6))
    em1 = element_matrices(REF_TET, signs)
    assert np.allclose(em1.mass, em0.mass * np.outer(signs, signs))


def test_mass_positive_definite_curl_rank_three():
    verts = REF_TET + 0.05 * RNG.standard_normal((4, 3))
    em = element_matrices(verts, np.ones(6))
    for _ in range(100):
        v = RNG.standard_normal(6)
        assert v @ em.mass @ v > 0
    svals = np.linalg.svd(em.curl_curl, compute_uv=False)
    assert np.sum(svals > 1e-12 * svals[0]) == 3


def test_degenerate_tet_rejected():
    verts = REF_TET.copy()
    verts[3] = verts[0]
    with pytest.raises(DegenerateElementError):
        element_matrices(verts, np.ones(6))


def test_single_interior_edge_system_against_direct_integration():
    m = build_cube_mesh(1)
    cfg = ProblemConfig(k=1.0, kappa=0.0, bc=BC.PEC)
    a, dofs = assemble_global(m, cfg)
    assert a.shape == (1, 1)
    edge = m.edges[dofs[0]]

    ref_pts, w = gauss_tet_points()
    total = 0.0
    for t in range(m.n_tets):
        verts = m.vertices[m.tets[t]]
        local = np.flatnonzero(m.tet_edge_idx[t] == dofs[0])
        if local.size == 0:
            continue
        e = int(local[0])
        sign = m.tet_edge_sign[t, e]
        vol = abs(np.linalg.det(verts[1:] - verts[0])) / 6.0
        pts = map_to_tet(verts, ref_pts)
        vals, curls = basis_values(verts, pts)
        mass = 6 * vol * np.einsum("p,pd,pd->", w, vals[:, e], vals[:, e])
        curl = vol * curls[e] @ curls[e]
        total += sign * sign * (curl - cfg.k ** 2 * mass)
    assert a[0, 0] == pytest.approx(total, rel=1e-12)
    assert np.array_equal(edge, [0, 7])


@pytest.mark.parametrize("k,kappa", [(5.0, 25.0), (10.0, 100.0)])
def test_absorption_identity(k, kappa):
    m = build_cube_mesh(3)
    parts = assemble_parts(m, BC.PEC)
    a = parts.operator(k, kappa)
    mm = parts.mass
    for _ in range(100):
        v = RNG.standard_normal(a.shape[0]) + 1j * RNG.standard_normal(a.shape[0])
        lhs = np.imag(np.vdot(v, a @ v))
        rhs = -kappa * np.vdot(v, mm @ v).real
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_global_symmetry_both_bcs():
    m = build_cube_mesh(2)
    for bc in (BC.PEC, BC.IMPEDANCE):
        a, _ = assemble_global(m, ProblemConfig(k=2.0, kappa=3.0, bc=bc))
        assert abs(a - a.T).max() <= 1e-12 * abs(a).max()


def test_impedance_differs_from_padded_pec():
    m = build_cube_mesh(2)
    ai, dofs_i = assemble_global(m, ProblemConfig(k=2.0, kappa=0.0,
                                                  bc=BC.IMPEDANCE))
    ap, dofs_p = assemble_global(m, ProblemConfig(k=2.0, kappa=0.0, bc=BC.PEC))
    assert dofs_i.shape[0] == m.n_edges > dofs_p.shape[0]
    # interior block of the impedance matrix equals the PEC matrix ...
    inner = ai[dofs_p][:, dofs_p]
    assert abs(inner - ap).max() < 1e-12 * abs(ap).max()
    # ... but the boundary rows carry the surface term
    bnd = np.setdiff1d(np.arange(m.n_edges), dofs_p)
    assert abs(ai[bnd][:, bnd].imag).max() > 1e-3


def test_ck_spd_and_relation_to_operator():
    m = build_cube_mesh(2)
    k, kappa = 4.0, 7.0
    parts = assemble_parts(m, BC.PEC)
    ck = assemble_ck(m, k, parts.dof_map)
    assert abs(ck.imag).max() == 0.0
    for _ in range(100):
        v = RNG.standard_normal(ck.shape[0])
        assert v @ ck @ v > 0
    # C_k = Re(A_kappa) + 2 k^2 M for any kappa
    a = parts.operator(k, kappa)
    lhs = ck.toarray()
    rhs = a.toarray().real + 2 * k ** 2 * parts.mass.toarray()
    assert np.allclose(lhs, rhs, atol=1e-12 * abs(lhs).max())


def test_ck_single_edge_value():
    m = build_cube_mesh(1)
    dofs = interior_edge_set(m)
    ck = assemble_ck(m, 1.0, dofs)
    parts = assemble_parts(m, BC.PEC)
    expected = parts.stiffness[0, 0] + parts.mass[0, 0]
    assert ck[0, 0] == pytest.approx(expected, rel=1e-14)


def test_rhs_zero():
    m = build_cube_mesh(2)
    dofs = interior_edge_set(m)
    zero = assemble_rhs(m, ProblemConfig(k=1.0, rhs=RHS.ZERO), dofs)
    assert np.all(zero == 0)


def test_rhs_quadrature_stability_smooth_source():
    """Raising the default order by four leaves a smooth load unchanged."""
    m = build_cube_mesh(16)
    dofs = interior_edge_set(m)
    cfg = ProblemConfig(k=1.0, rhs=RHS.MANUFACTURED)
    f4 = assemble_rhs(m, cfg, dofs)
    f8 = assemble_rhs(m, cfg, dofs, quad_degree=8)
    assert np.abs(f4 - f8).max() <= 1e-6 * np.abs(f8).max()


def test_rhs_gaussian_refinement_convergence():
    """The sharp bump needs mesh resolution; the quadrature gap shrinks with h.

    (At a fixed coarse mesh no practical rule pins the bump down, so the
    check is convergence under refinement, with bounds frozen from a
    degree-8 reference.)
    """
    rel = {}
    cfg = ProblemConfig(k=1.0, rhs=RHS.GAUSSIAN_BUMP)
    for n in (8, 16):
        m = build_cube_mesh(n)
        dofs = interior_edge_set(m)
        f4 = assemble_rhs(m, cfg, dofs)
        f8 = assemble_rhs(m, cfg, dofs, quad_degree=8)
        rel[n] = np.abs(f4 - f8).max() / np.abs(f8).max()
    assert rel[16] < rel[8] / 4.0
    assert rel[16] < 1e-2


def test_manufactured_field_properties():
    pts = RNG.uniform(0, 1, (50, 3))
    j = manufactured_source(pts)
    assert np.allclose(j, (2 * np.pi ** 2 + 1) * manufactured_field(pts))
    # curl by finite differences
    h = 1e-6
    for d in range(3):
        e = np.zeros(3)
        e[d] = h
        dplus = manufactured_field(pts + e)
        dminus = manufactured_field(pts - e)
        grad_d = (dplus - dminus) / (2 * h)
        if d == 0:
            dx = grad_d
        elif d == 1:
            dy = grad_d
        else:
            dz = grad_d
    curl_fd = np.stack([dy[:, 2] - dz[:, 1], dz[:, 0] - dx[:, 2],
                        dx[:, 1] - dy[:, 0]], axis=1)
    assert np.allclose(curl_fd, manufactured_curl(pts), atol=1e-6)


def test_manufactured_rhs_is_galerkin_consistent():
    """The interpolant's Galerkin residual decays at first order.

    Measured in the discrete dual norm sqrt(r^H A^{-1} r), i.e. the energy
    distance between the interpolant and the Galerkin solution.
    """
    from maxwelldd.direct import factorize

    def dual_residual(n):
        m = build_cube_mesh(n)
        parts = assemble_parts(m, BC.PEC)
        a = (parts.stiffness + parts.mass).tocsc()
        f = assemble_rhs(m, ProblemConfig(k=1.0, rhs=RHS.MANUFACTURED),
                         parts.dof_map)
        # interpolant coefficients: tangential edge integrals by Gauss rule
        g, w = np.polynomial.legendre.leggauss(5)
        g = 0.5 * (g + 1)
        w = 0.5 * w
        edges = m.edges[parts.dof_map]
        pa, pb = m.vertices[edges[:, 0]], m.vertices[edges[:, 1]]
        pts = pa[:, None, :] + g[None, :, None] * (pb - pa)[:, None, :]
        tang = pb - pa
        coeff = np.einsum("q,eqd,ed->e", w, manufactured_field(pts), tang)
        r = f - a @ coeff
        return float(np.sqrt(np.vdot(r, factorize(a).solve(r)).real))

    r4, r8 = dual_residual(4), dual_residual(8)
    rate = np.log2(r4 / r8)
    assert 0.8 <= rate <= 1.2


def test_fem_convergence_rate_small():
    """Coercive manufactured problem converges at first order (n=4 vs 8)."""
    from maxwelldd.direct import factorize

    errs = {}
    for n in (4, 8):
        m = build_cube_mesh(n)
        parts = assemble_parts(m, BC.PEC)
        a = (parts.stiffness + parts.mass).tocsc()
        f = assemble_rhs(m, ProblemConfig(k=1.0, rhs=RHS.MANUFACTURED),
                         parts.dof_map)
        u = factorize(a).solve(f)
        errs[n] = hcurl_error(m, parts.dof_map, u)
    rate = np.log2(errs[4] / errs[8])
    assert 0.8 <= rate <= 1.2


def test_local_matrix_pec_examples():
    m = build_cube_mesh(2)
    a, dofs = assemble_global(m, ProblemConfig(k=2.0, kappa=4.0, bc=BC.PEC))
    n = a.shape[0]
    full = local_matrix_pec(a, np.arange(n))
    assert abs(full - a).max() == 0
    single = local_matrix_pec(a, np.array([3]))
    assert single.shape == (1, 1) and single[0, 0] == a[3, 3]
    with pytest.raises(IndexError):
        local_matrix_pec(a, np.array([n]))


def test_local_matrix_pec_equals_local_reassembly():
    """Minor on a subdomain's interior edges == assembling on the subdomain."""
    from maxwelldd.decomposition import build_cover

    m = build_cube_mesh(2)
    k, kappa = 2.0, 4.0
    a, dofs = assemble_global(m, ProblemConfig(k=k, kappa=kappa, bc=BC.PEC))
    cover = build_cover(m, 1, 0, BC.PEC)
    sub = cover.subdomains[0]
    minor = local_matrix_pec(a, sub.interior_dofs)

    from maxwelldd.assembly import _volume_matrices
    lookup = np.full(m.n_edges, -1, dtype=np.int64)
    lookup[sub.interior_edges] = np.arange(sub.interior_edges.shape[0])
    s, mm = _volume_matrices(m, sub.elements, lookup,
                             sub.interior_edges.shape[0])
    re = s - (k ** 2 + 1j * kappa) * mm
    assert abs(minor - re).max() <= 1e-12 * abs(re).max()


def test_local_impedance_whole_domain_equals_global():
    m = build_cube_mesh(2)
    cfg = ProblemConfig(k=3.0, kappa=9.0, bc=BC.IMPEDANCE)
    a, dofs = assemble_global(m, cfg)
    b, edges = local_matrix_impedance(m, np.arange(m.n_tets), cfg)
    assert np.array_equal(edges, dofs)
    assert abs(b - a).max() <= 1e-12 * abs(a).max()


def test_local_impedance_symmetry_and_empty_error():
    m = build_cube_mesh(2)
    cfg = ProblemConfig(k=3.0, kappa=9.0, bc=BC.PEC)
    half = np.arange(m.n_tets // 2)
    b, edges = local_matrix_impedance(m, half, cfg)
    assert abs(b - b.T).max() <= 1e-12 * abs(b).max()
    with pytest.raises(ValueError):
        local_matrix_impedance(m, np.array([], dtype=int), cfg)


def test_local_impedance_differs_from_minor_exactly_on_internal_boundary():
    """Surface rows/cols are the only difference from the PEC minor."""
    m = build_cube_mesh(2)
    k = 3.0
    kappa = k ** 2
    cfg = ProblemConfig(k=k, kappa=kappa, bc=BC.PEC)
    a, dofs = assemble_global(m, cfg)
    half = np.arange(m.n_tets // 2)            # half-cube slab
    b, edges = local_matrix_impedance(m, half, cfg)

    # PEC-style local matrix on the same edge set (no surface term)
    from maxwelldd.assembly import _volume_matrices
    lookup = np.full(m.n_edges, -1, dtype=np.int64)
    lookup[edges] = np.arange(edges.shape[0])
    s, mm = _volume_matrices(m, half, lookup, edges.shape[0])
    base = s - (k ** 2 + 1j * kappa) * mm

    diff = (b - base).tocoo()
    assert diff.nnz > 0
    from maxwelldd.assembly import subdomain_boundary_faces
    _, internal = subdomain_boundary_faces(m, half)
    internal_edges = set()
    for tri in internal:
        tri = sorted(tri)
        for pair in [(tri[0], tri[1]), (tri[0], tri[2]), (tri[1], tri[2])]:
            hit = np.flatnonzero((m.edges[:, 0] == pair[0])
                                 & (m.edges[:, 1] == pair[1]))
            internal_edges.add(int(hit[0]))
    internal_pos = {int(lookup[e]) for e in internal_edges if lookup[e] >= 0}
    for i, j in zip(diff.row, diff.col):
        assert int(i) in internal_pos and int(j) in internal_pos


def test_matrix_market_roundtrip(tmp_path):
    import scipy.io

    m = build_cube_mesh(1)
    a, _ = assemble_global(m, ProblemConfig(k=1.0, kappa=2.0, bc=BC.IMPEDANCE))
    path = tmp_path / "a.mtx"
    write_matrix_market(path, a)
    back = scipy.io.mmread(path)
    assert abs(sp.csr_matrix(back) - a).max() < 1e-15
