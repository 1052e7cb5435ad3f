"""Galerkin assembly for the curl-curl operator with absorption.

Discretisation is by lowest-order edge elements on the tetrahedral meshes of
:mod:`maxwelldd.mesh`: the basis function of edge (a, b) is
w = lam_a grad(lam_b) - lam_b grad(lam_a), oriented along the global edge
direction, and its degree of freedom is the tangential line integral along
the edge.

The assembled operator is A = S - (k^2 + i*kappa) M, where S is the
curl-curl stiffness matrix and M the mass matrix, plus (for the impedance
boundary condition) the surface term -i*k * integral of the tangential
traces over the cube surface.  Perfectly-conducting (PEC) boundaries are
enforced by eliminating the boundary-edge unknowns, so every reduced matrix
is a principal submatrix of the full one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import LOCAL_EDGES, LOCAL_FACES, TetMesh, interior_edge_set
from .quadrature import tet_rule, tri_rule


class BC(str, Enum):
    PEC = "pec"
    IMPEDANCE = "impedance"


class RHS(str, Enum):
    GAUSSIAN_BUMP = "gaussian_bump"
    MANUFACTURED = "manufactured"
    ZERO = "zero"


class DegenerateElementError(ValueError):
    """A tetrahedron has zero or negative volume."""


@dataclass(frozen=True)
class ProblemConfig:
    """Wavenumber, absorption and boundary/source selection for one problem."""

    k: float
    kappa: float = 0.0
    bc: BC = BC.PEC
    rhs: RHS = RHS.GAUSSIAN_BUMP

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError(f"wavenumber k must be positive, got {self.k}")


@dataclass(frozen=True)
class ElementMatrices:
    """6x6 curl-curl and mass matrices of one tet, signs applied."""

    curl_curl: np.ndarray
    mass: np.ndarray


# integral over a tet of lam_i * lam_j equals volume * _LAM2[i, j]
_LAM2_TET = (np.ones((4, 4)) + np.eye(4)) / 20.0
# triangle analogue, relative to the area
_LAM2_TRI = (np.ones((3, 3)) + np.eye(3)) / 12.0

_EA = LOCAL_EDGES[:, 0]
_EB = LOCAL_EDGES[:, 1]

DEFAULT_RHS_DEGREE = 4


def _tet_geometry(verts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Barycentric gradients and volumes for a (T, 4, 3) vertex batch.

    Returns (grads (T, 4, 3), vols (T,), coef (T, 4, 4)) where
    lam_i(x) = coef[t, 0, i] + coef[t, 1:, i] . x.
    """
    t = verts.shape[0]
    c = np.empty((t, 4, 4))
    c[:, :, 0] = 1.0
    c[:, :, 1:] = verts
    det = np.linalg.det(c)
    if np.any(det <= 1e-14):
        bad = int(np.argmin(det))
        raise DegenerateElementError(
            f"tet {bad} has non-positive volume {det[bad] / 6.0:.3e}")
    coef = np.linalg.inv(c)
    grads = coef[:, 1:4, :].transpose(0, 2, 1)
    return grads, det / 6.0, coef


def _batched_element_matrices(verts: np.ndarray, signs: np.ndarray
                              ) -> tuple[np.ndarray, np.ndarray]:
    """curl-curl and mass 6x6 blocks for a batch of tets."""
    grads, vols, _ = _tet_geometry(verts)
    curls = 2.0 * np.cross(grads[:, _EA], grads[:, _EB])   # (T, 6, 3)
    cc = np.einsum("tid,tjd->tij", curls, curls) * vols[:, None, None]

    g = np.einsum("tid,tjd->tij", grads, grads)            # (T, 4, 4)
    mm = (g[:, _EB[:, None], _EB[None, :]] * _LAM2_TET[_EA[:, None], _EA[None, :]]
          - g[:, _EB[:, None], _EA[None, :]] * _LAM2_TET[_EA[:, None], _EB[None, :]]
          - g[:, _EA[:, None], _EB[None, :]] * _LAM2_TET[_EB[:, None], _EA[None, :]]
          + g[:, _EA[:, None], _EA[None, :]] * _LAM2_TET[_EB[:, None], _EB[None, :]])
    mm *= vols[:, None, None]

    ss = signs[:, :, None] * signs[:, None, :]
    return cc * ss, mm * ss


def element_matrices(verts: np.ndarray, signs: np.ndarray) -> ElementMatrices:
    """Exact curl-curl and mass matrices of a single tetrahedron.

    verts is (4, 3); signs holds the +-1 orientation of the six local edges
    relative to the global edge direction.
    """
    verts = np.asarray(verts, dtype=float).reshape(1, 4, 3)
    signs = np.asarray(signs, dtype=float).reshape(1, 6)
    cc, mm = _batched_element_matrices(verts, signs)
    return ElementMatrices(curl_curl=cc[0], mass=mm[0])


@dataclass(frozen=True)
class AssemblyParts:
    """Stiffness/mass/surface matrices on the active unknowns of a mesh."""

    mesh: TetMesh
    bc: BC
    dof_map: np.ndarray        # active edge indices, ascending
    stiffness: sp.csr_matrix   # real
    mass: sp.csr_matrix        # real
    surface: sp.csr_matrix | None  # real; None for PEC

    @property
    def n_dofs(self) -> int:
        return self.dof_map.shape[0]

    def operator(self, k: float, kappa: float) -> sp.csr_matrix:
        """A = S - (k^2 + i kappa) M [- i k T on impedance boundaries]."""
        a = self.stiffness - (k ** 2 + 1j * kappa) * self.mass
        if self.surface is not None:
            a = a - 1j * k * self.surface
        return a.tocsr()


def active_dofs(mesh: TetMesh, bc: BC) -> np.ndarray:
    if bc == BC.PEC:
        return interior_edge_set(mesh)
    return np.arange(mesh.n_edges)


def _accumulate(rows, cols, vals, n) -> sp.csr_matrix:
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    return mat.tocsr()


def _volume_matrices(mesh: TetMesh, tet_ids: np.ndarray, edge_to_dof: np.ndarray,
                     n_dofs: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """S and M over the given tets, in the numbering edge_to_dof."""
    verts = mesh.vertices[mesh.tets[tet_ids]]
    signs = mesh.tet_edge_sign[tet_ids].astype(float)
    cc, mm = _batched_element_matrices(verts, signs)

    dofs = edge_to_dof[mesh.tet_edge_idx[tet_ids]]         # (T, 6)
    rows = np.broadcast_to(dofs[:, :, None], cc.shape).ravel()
    cols = np.broadcast_to(dofs[:, None, :], cc.shape).ravel()
    keep = (rows >= 0) & (cols >= 0)
    rows = rows[keep].astype(np.int64)
    cols = cols[keep].astype(np.int64)
    s = _accumulate(rows, cols, cc.ravel()[keep], n_dofs)
    m = _accumulate(rows, cols, mm.ravel()[keep], n_dofs)
    return s, m


def _edge_lookup(mesh: TetMesh) -> tuple[np.ndarray, int]:
    base = mesh.n_vertices
    keys = mesh.edges[:, 0].astype(np.int64) * base + mesh.edges[:, 1]
    return keys, base


def _surface_matrix(mesh: TetMesh, faces: np.ndarray, edge_to_dof: np.ndarray,
                    n_dofs: int) -> sp.csr_matrix:
    """Tangential-trace mass matrix over the given boundary triangles.

    Faces are (F, 3) vertex triples with ascending vertex indices, so their
    three edges (01, 02, 12) are already globally oriented.
    """
    if faces.shape[0] == 0:
        return sp.csr_matrix((n_dofs, n_dofs))
    q = mesh.vertices[faces]                               # (F, 3, 3)
    e1 = q[:, 1] - q[:, 0]
    e2 = q[:, 2] - q[:, 0]
    g11 = np.einsum("fd,fd->f", e1, e1)
    g12 = np.einsum("fd,fd->f", e1, e2)
    g22 = np.einsum("fd,fd->f", e2, e2)
    det = g11 * g22 - g12 ** 2
    area = 0.5 * np.sqrt(det)
    # in-plane gradients of the triangle barycentric functions
    t1 = (g22[:, None] * e1 - g12[:, None] * e2) / det[:, None]
    t2 = (g11[:, None] * e2 - g12[:, None] * e1) / det[:, None]
    grads = np.stack([-t1 - t2, t1, t2], axis=1)           # (F, 3, 3)

    fa = np.array([0, 0, 1])
    fb = np.array([1, 2, 2])
    g = np.einsum("fid,fjd->fij", grads, grads)
    tt = (g[:, fb[:, None], fb[None, :]] * _LAM2_TRI[fa[:, None], fa[None, :]]
          - g[:, fb[:, None], fa[None, :]] * _LAM2_TRI[fa[:, None], fb[None, :]]
          - g[:, fa[:, None], fb[None, :]] * _LAM2_TRI[fb[:, None], fa[None, :]]
          + g[:, fa[:, None], fa[None, :]] * _LAM2_TRI[fb[:, None], fb[None, :]])
    tt *= area[:, None, None]

    keys, base = _edge_lookup(mesh)
    pairs = np.stack([faces[:, [0, 0, 1]], faces[:, [1, 2, 2]]], axis=2)
    fkeys = pairs[..., 0].astype(np.int64) * base + pairs[..., 1]
    eidx = np.searchsorted(keys, fkeys)                    # (F, 3)
    dofs = edge_to_dof[eidx]
    rows = np.broadcast_to(dofs[:, :, None], tt.shape).ravel()
    cols = np.broadcast_to(dofs[:, None, :], tt.shape).ravel()
    keep = (rows >= 0) & (cols >= 0)
    return _accumulate(rows[keep].astype(np.int64), cols[keep].astype(np.int64),
                       tt.ravel()[keep], n_dofs)


def assemble_parts(mesh: TetMesh, bc: BC) -> AssemblyParts:
    """Assemble S, M (and the surface term for impedance) on active DOFs."""
    dof_map = active_dofs(mesh, bc)
    edge_to_dof = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_to_dof[dof_map] = np.arange(dof_map.shape[0])

    s, m = _volume_matrices(mesh, np.arange(mesh.n_tets), edge_to_dof,
                            dof_map.shape[0])
    surface = None
    if bc == BC.IMPEDANCE:
        surface = _surface_matrix(mesh, mesh.boundary_faces, edge_to_dof,
                                  dof_map.shape[0])
    return AssemblyParts(mesh=mesh, bc=bc, dof_map=dof_map, stiffness=s,
                         mass=m, surface=surface)


def assemble_global(mesh: TetMesh, config: ProblemConfig
                    ) -> tuple[sp.csr_matrix, np.ndarray]:
    """Assemble the global operator; returns (A, active edge indices)."""
    parts = assemble_parts(mesh, config.bc)
    return parts.operator(config.k, config.kappa), parts.dof_map


def assemble_ck(mesh: TetMesh, k: float, dof_map: np.ndarray) -> sp.csr_matrix:
    """Weighted-norm matrix S + k^2 M on the given active edges (real SPD)."""
    if k <= 0:
        raise ValueError("k must be positive")
    edge_to_dof = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_to_dof[dof_map] = np.arange(dof_map.shape[0])
    s, m = _volume_matrices(mesh, np.arange(mesh.n_tets), edge_to_dof,
                            dof_map.shape[0])
    return (s + k ** 2 * m).tocsr()


def gaussian_bump_source(x: np.ndarray) -> np.ndarray:
    """J = [f, f, f] with f = -exp(-400 |x - center|^2)."""
    r2 = np.sum((x - 0.5) ** 2, axis=-1)
    f = -np.exp(-400.0 * r2)
    return np.repeat(f[..., None], 3, axis=-1)


def manufactured_field(x: np.ndarray) -> np.ndarray:
    """Divergence-free smooth field with zero tangential trace on the cube."""
    sx, sy, sz = (np.sin(np.pi * x[..., d]) for d in range(3))
    return np.stack([sy * sz, sz * sx, sx * sy], axis=-1)


def manufactured_curl(x: np.ndarray) -> np.ndarray:
    sx, sy, sz = (np.sin(np.pi * x[..., d]) for d in range(3))
    cx, cy, cz = (np.cos(np.pi * x[..., d]) for d in range(3))
    return np.pi * np.stack([sx * (cy - cz), sy * (cz - cx), sz * (cx - cy)],
                            axis=-1)


def manufactured_source(x: np.ndarray) -> np.ndarray:
    """J = curl curl E* + E* for the coercive check; equals (2 pi^2 + 1) E*."""
    return (2.0 * np.pi ** 2 + 1.0) * manufactured_field(x)


_SOURCES = {
    RHS.GAUSSIAN_BUMP: gaussian_bump_source,
    RHS.MANUFACTURED: manufactured_source,
}


def assemble_rhs(mesh: TetMesh, config: ProblemConfig, dof_map: np.ndarray,
                 quad_degree: int = DEFAULT_RHS_DEGREE) -> np.ndarray:
    """Load vector F_i = integral of J . w_i, fixed-order quadrature."""
    n = dof_map.shape[0]
    if config.rhs == RHS.ZERO:
        return np.zeros(n, dtype=complex)
    source = _SOURCES[config.rhs]

    bary, wts = tet_rule(quad_degree)
    edge_to_dof = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_to_dof[dof_map] = np.arange(n)
    f = np.zeros(n)
    # chunked over tets: high quadrature orders on fine meshes would
    # otherwise materialize huge (T, Q, 3) point arrays
    chunk = max(1, 60_000_000 // (bary.shape[0] * 24))
    for lo in range(0, mesh.n_tets, chunk):
        sel = slice(lo, min(lo + chunk, mesh.n_tets))
        verts = mesh.vertices[mesh.tets[sel]]              # (T, 4, 3)
        grads, vols, _ = _tet_geometry(verts)
        pts = np.einsum("qi,tid->tqd", bary, verts)        # (T, Q, 3)
        jg = np.einsum("tqd,tid->tqi", source(pts), grads)  # J . grad(lam_i)
        for e in range(6):
            a, b = LOCAL_EDGES[e]
            # J . w_e at the quadrature points, then the weighted tet sum
            vals = bary[None, :, a] * jg[:, :, b] \
                - bary[None, :, b] * jg[:, :, a]
            contrib = vols * (vals * wts[None, :]).sum(axis=1)
            contrib = contrib * mesh.tet_edge_sign[sel, e]
            dofs = edge_to_dof[mesh.tet_edge_idx[sel, e]]
            keep = dofs >= 0
            f += np.bincount(dofs[keep], weights=contrib[keep], minlength=n)
    return f.astype(complex)


def local_matrix_pec(a_global: sp.spmatrix, edge_subset: np.ndarray
                     ) -> sp.csr_matrix:
    """Principal submatrix of the global operator (PEC subdomain problem)."""
    subset = np.asarray(edge_subset)
    n = a_global.shape[0]
    if subset.size and (subset.min() < 0 or subset.max() >= n):
        raise IndexError("edge subset out of range")
    return a_global.tocsr()[subset][:, subset].tocsr()


def subdomain_boundary_faces(mesh: TetMesh, elements: np.ndarray
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Boundary triangles of a tet set, split into (on-surface, internal)."""
    faces = np.sort(mesh.tets[elements][:, LOCAL_FACES], axis=2).reshape(-1, 3)
    base = mesh.n_vertices
    keys = (faces[:, 0].astype(np.int64) * base + faces[:, 1]) * base + faces[:, 2]
    uniq, first, counts = np.unique(keys, return_index=True, return_counts=True)
    bfaces = faces[first[counts == 1]]
    verts = mesh.vertices_int[bfaces]
    n = mesh.n_per_dir
    on_gamma = np.zeros(bfaces.shape[0], dtype=bool)
    for axis in range(3):
        on_gamma |= np.all(verts[:, :, axis] == 0, axis=1)
        on_gamma |= np.all(verts[:, :, axis] == n, axis=1)
    return bfaces[on_gamma], bfaces[~on_gamma]


def local_matrix_impedance(mesh: TetMesh, elements: np.ndarray,
                           config: ProblemConfig
                           ) -> tuple[sp.csr_matrix, np.ndarray]:
    """Subdomain operator with impedance conditions on internal boundaries.

    config carries the global boundary condition, the wavenumber and the
    preconditioner absorption.  Edges eliminated by a global PEC condition
    are dropped; with a global impedance condition the surface term is also
    applied on the parts of the subdomain boundary lying on the cube
    surface.  Returns (B, global edge indices of the local unknowns).
    """
    elements = np.asarray(elements)
    if elements.size == 0:
        raise ValueError("subdomain element set is empty")
    edges = np.unique(mesh.tet_edge_idx[elements])
    if config.bc == BC.PEC:
        bmask = np.zeros(mesh.n_edges, dtype=bool)
        bmask[mesh.boundary_edges] = True
        edges = edges[~bmask[edges]]
    edge_to_dof = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_to_dof[edges] = np.arange(edges.shape[0])

    s, m = _volume_matrices(mesh, elements, edge_to_dof, edges.shape[0])
    gamma_faces, internal_faces = subdomain_boundary_faces(mesh, elements)
    surf_faces = internal_faces
    if config.bc == BC.IMPEDANCE:
        surf_faces = np.concatenate([internal_faces, gamma_faces])
    t = _surface_matrix(mesh, surf_faces, edge_to_dof, edges.shape[0])
    b = s - (config.k ** 2 + 1j * config.kappa) * m - 1j * config.k * t
    return b.tocsr(), edges


def hcurl_error(mesh: TetMesh, dof_map: np.ndarray, coeffs: np.ndarray,
                quad_degree: int = 4) -> float:
    """H(curl) norm of (discrete field - manufactured field)."""
    bary, wts = tet_rule(quad_degree)
    verts = mesh.vertices[mesh.tets]
    grads, vols, _ = _tet_geometry(verts)
    pts = np.einsum("qi,tid->tqd", bary, verts)

    full = np.zeros(mesh.n_edges, dtype=complex)
    full[dof_map] = coeffs
    ce = full[mesh.tet_edge_idx] * mesh.tet_edge_sign      # (T, 6)

    curls = 2.0 * np.cross(grads[:, _EA], grads[:, _EB])   # (T, 6, 3)
    curl_h = np.einsum("te,ted->td", ce, curls)
    curl_err = curl_h[:, None, :] - manufactured_curl(pts)

    # field values: sum_e c_e (lam_a g_b - lam_b g_a)
    field_h = (np.einsum("te,qe,ted->tqd", ce, bary[:, _EA], grads[:, _EB])
               - np.einsum("te,qe,ted->tqd", ce, bary[:, _EB], grads[:, _EA]))
    field_err = field_h - manufactured_field(pts)

    dens = (np.abs(field_err) ** 2).sum(axis=2) + (np.abs(curl_err) ** 2).sum(axis=2)
    return float(np.sqrt(np.sum(vols * (dens * wts[None, :]).sum(axis=1))))


def write_matrix_market(path, matrix: sp.spmatrix) -> None:
    """Dump a matrix in MatrixMarket coordinate format for external checks."""
    scipy.io.mmwrite(path, sp.coo_matrix(matrix))
