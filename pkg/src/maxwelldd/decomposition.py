"""Overlapping box covers, partition of unity, and the coarse restriction.

Subdomains are boxes of mesh cells extended by whole cell layers; their
edge-DOF sets come in two flavours: interior edges (strictly inside the
subdomain, used by the PEC-type local solves) and closure edges (all edges
of the subdomain's elements that are global unknowns, used by the
impedance-type local solves).

The partition of unity uses multiplicity weights 1/m per DOF, which makes
sum_l R_l^T D_l R_l reproduce the identity exactly.  The coarse restriction
evaluates the coarse edge basis at fine edge midpoints; because no fine
edge crosses a coarse element boundary, the midpoint rule integrates the
(piecewise linear) tangential component exactly.
"""

from __future__ import annotations

import io
import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import BC, active_dofs, _tet_geometry
from .mesh import (LOCAL_EDGES, NestedMeshPair, TetMesh, locate_in_kuhn_cell)

logger = logging.getLogger(__name__)


@dataclass
class Subdomain:
    """One overlapping subdomain with its edge sets and weights."""

    box: np.ndarray              # (3, 2) owned cell ranges [lo, hi)
    ext: np.ndarray              # (3, 2) ranges after overlap extension
    elements: np.ndarray         # tet indices
    interior_edges: np.ndarray   # global edge ids strictly inside
    closure_edges: np.ndarray    # global edge ids of all active edges
    interior_dofs: np.ndarray    # positions in the global dof vector
    closure_dofs: np.ndarray
    pou_weights: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass
class Cover:
    """A full overlapping decomposition of the active unknowns."""

    mesh: TetMesh
    bc: BC
    dof_map: np.ndarray
    subdomains: list[Subdomain]
    overlap_layers: int

    @property
    def n_dofs(self) -> int:
        return self.dof_map.shape[0]

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)


@dataclass
class CoarseSpace:
    """Coarse edge space on a nested mesh with its restriction matrix."""

    pair: NestedMeshPair
    bc: BC
    dof_map_coarse: np.ndarray   # active coarse edge ids (rows of r0)
    dof_map_fine: np.ndarray     # active fine edge ids (columns of r0)
    r0: sp.csr_matrix
    a0: sp.csr_matrix | None = None

    @property
    def n_coarse(self) -> int:
        return self.dof_map_coarse.shape[0]


def _edges_on_internal_planes(mesh: TetMesh, edges: np.ndarray,
                              ext: np.ndarray) -> np.ndarray:
    """Mask of edges lying on a subdomain face that is not on the surface."""
    n = mesh.n_per_dir
    va = mesh.vertices_int[mesh.edges[edges, 0]]
    vb = mesh.vertices_int[mesh.edges[edges, 1]]
    on = np.zeros(edges.shape[0], dtype=bool)
    for axis in range(3):
        lo, hi = ext[axis]
        if lo > 0:
            on |= (va[:, axis] == lo) & (vb[:, axis] == lo)
        if hi < n:
            on |= (va[:, axis] == hi) & (vb[:, axis] == hi)
    return on


def build_cover(mesh: TetMesh, n_sub_per_dir: int, overlap_layers: int,
                global_bc: BC) -> Cover:
    """Build the overlapping cover of n_sub_per_dir^3 cell boxes."""
    n = mesh.n_per_dir
    if n_sub_per_dir < 1 or n % n_sub_per_dir != 0:
        raise ValueError(
            f"n_sub_per_dir={n_sub_per_dir} must divide mesh size {n}")
    if overlap_layers < 0:
        raise ValueError("overlap_layers must be nonnegative")
    w = n // n_sub_per_dir
    dof_map = active_dofs(mesh, global_bc)
    edge_to_dof = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_to_dof[dof_map] = np.arange(dof_map.shape[0])

    subdomains = []
    for bz in range(n_sub_per_dir):
        for by in range(n_sub_per_dir):
            for bx in range(n_sub_per_dir):
                box = np.array([[bx * w, (bx + 1) * w],
                                [by * w, (by + 1) * w],
                                [bz * w, (bz + 1) * w]])
                ext = np.stack([np.maximum(box[:, 0] - overlap_layers, 0),
                                np.minimum(box[:, 1] + overlap_layers, n)],
                               axis=1)
                if np.all(ext[:, 0] == 0) and np.all(ext[:, 1] == n) \
                        and n_sub_per_dir > 1:
                    logger.warning(
                        "subdomain (%d,%d,%d) extended to the whole domain",
                        bx, by, bz)
                cx = np.arange(ext[0, 0], ext[0, 1])
                cy = np.arange(ext[1, 0], ext[1, 1])
                cz = np.arange(ext[2, 0], ext[2, 1])
                cells = (cx[None, None, :] + n * cy[None, :, None]
                         + n * n * cz[:, None, None]).ravel()
                elements = (6 * cells[:, None] + np.arange(6)).ravel()

                edges = np.unique(mesh.tet_edge_idx[elements])
                closure = edges[edge_to_dof[edges] >= 0]
                interior = closure[~_edges_on_internal_planes(mesh, closure, ext)]
                subdomains.append(Subdomain(
                    box=box, ext=ext, elements=elements,
                    interior_edges=interior, closure_edges=closure,
                    interior_dofs=edge_to_dof[interior],
                    closure_dofs=edge_to_dof[closure]))
    cover = Cover(mesh=mesh, bc=global_bc, dof_map=dof_map,
                  subdomains=subdomains, overlap_layers=overlap_layers)
    build_partition_of_unity(cover)
    return cover


def build_partition_of_unity(cover: Cover) -> list[np.ndarray]:
    """Attach multiplicity weights 1/m; sum_l R^T D R = I follows exactly."""
    counts = np.zeros(cover.n_dofs, dtype=np.int64)
    for sub in cover.subdomains:
        counts[sub.interior_dofs] += 1
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise RuntimeError(
            f"cover construction bug: DOF {missing} (edge "
            f"{int(cover.dof_map[missing])}) is interior to no subdomain")
    weights = []
    for sub in cover.subdomains:
        sub.pou_weights = 1.0 / counts[sub.interior_dofs]
        weights.append(sub.pou_weights)
    return weights


def build_coarse_restriction(pair: NestedMeshPair, global_bc: BC) -> CoarseSpace:
    """Restriction from fine to coarse edge DOFs (coarse basis line integrals).

    Entry (p, j) is the tangential line integral of coarse basis function p
    along fine edge j, evaluated exactly by the midpoint rule.
    """
    fine, coarse = pair.fine, pair.coarse
    r = pair.ratio
    dof_f = active_dofs(fine, global_bc)
    dof_c = active_dofs(coarse, global_bc)
    cedge_to_dof = np.full(coarse.n_edges, -1, dtype=np.int64)
    cedge_to_dof[dof_c] = np.arange(dof_c.shape[0])

    # coarse tet geometry, evaluated once
    cverts = coarse.vertices[coarse.tets]
    grads, _, coef = _tet_geometry(cverts)

    # fine edge midpoints in integer half-units; cell and Kuhn rank
    va = fine.vertices_int[fine.edges[dof_f, 0]]
    vb = fine.vertices_int[fine.edges[dof_f, 1]]
    m2 = va + vb
    nc = coarse.n_per_dir
    cell = np.clip(m2 // (2 * r), 0, nc - 1)
    frac = m2 / (2.0 * r) - cell
    rank = locate_in_kuhn_cell(frac)
    ctet = (cell[:, 0] + nc * (cell[:, 1] + nc * cell[:, 2])) * 6 + rank

    x = m2 / (2.0 * fine.n_per_dir)                         # midpoints
    tangent = (vb - va) / float(fine.n_per_dir)             # includes |e|
    lam = coef[ctet, 0, :] + np.einsum("nd,ndi->ni", x, coef[ctet, 1:4, :])

    rows, cols, vals = [], [], []
    fine_pos = np.arange(dof_f.shape[0])
    for e in range(6):
        a, b = LOCAL_EDGES[e]
        wvec = (lam[:, a, None] * grads[ctet, b, :]
                - lam[:, b, None] * grads[ctet, a, :])
        val = np.einsum("nd,nd->n", wvec, tangent) \
            * coarse.tet_edge_sign[ctet, e]
        row = cedge_to_dof[coarse.tet_edge_idx[ctet, e]]
        keep = row >= 0
        rows.append(row[keep])
        cols.append(fine_pos[keep])
        vals.append(val[keep])
    r0 = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dof_c.shape[0], dof_f.shape[0])).tocsr()
    r0.sum_duplicates()
    r0.eliminate_zeros()
    return CoarseSpace(pair=pair, bc=global_bc, dof_map_coarse=dof_c,
                       dof_map_fine=dof_f, r0=r0)


def galerkin_coarse_matrix(r0: sp.spmatrix, a_kappa: sp.spmatrix
                           ) -> sp.csr_matrix:
    """Coarse operator R0 A R0^T (triple sparse product)."""
    if r0.shape[1] != a_kappa.shape[0]:
        raise ValueError(
            f"dimension mismatch: R0 is {r0.shape}, A is {a_kappa.shape}")
    return (r0 @ a_kappa @ r0.T).tocsr()


def materialize_pou_identity(cover: Cover) -> sp.csr_matrix:
    """Assemble sum_l R_l^T D_l R_l explicitly (diagnostics/tests)."""
    n = cover.n_dofs
    diag = np.zeros(n)
    for sub in cover.subdomains:
        diag[sub.interior_dofs] += sub.pou_weights
    return sp.diags(diag).tocsr()


def cover_summary_csv(cover: Cover) -> str:
    """Per-subdomain element/DOF counts as CSV (for experiment logs)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subdomain", "elements", "interior_dofs", "closure_dofs"])
    for i, sub in enumerate(cover.subdomains):
        writer.writerow([i, sub.elements.shape[0],
                         sub.interior_dofs.shape[0], sub.closure_dofs.shape[0]])
    return buf.getvalue()
