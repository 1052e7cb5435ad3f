"""One- and two-level overlapping Schwarz preconditioners.

Variants (kind):

* AS / RAS: sums of prolonged subdomain solves, unweighted (AS) or with the
  partition-of-unity weights (RAS).  In two-level form the coarse solve
  Xi = R0^T A0^{-1} R0 is added to the sum.
* HRAS / HAS: hybrid forms, where the one-level sum B is projected against
  the coarse solve: (I - Xi A) B (I - A Xi) + Xi.
* ImpRAS / ImpHRAS: as RAS / HRAS, but the subdomain solves use matrices
  with impedance conditions on the internal subdomain boundaries and act on
  the closure edge set; prolongation weights are extended by zero there, so
  the partition-of-unity identity is untouched.

All subdomain and coarse matrices are factorized once at build time with
absorbing shifts (kappa != 0), which keeps every block invertible.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np
import scipy.sparse as sp

from .decomposition import CoarseSpace, Cover, galerkin_coarse_matrix
from .direct import SingularMatrixError, factorize, solve  # noqa: F401

WORKERS_ENV = "MAXWELLDD_WORKERS"


class Kind(str, Enum):
    AS = "as"
    RAS = "ras"
    HRAS = "hras"
    HAS = "has"
    IMPRAS = "impras"
    IMPHRAS = "imphras"

    @property
    def hybrid(self) -> bool:
        return self in (Kind.HRAS, Kind.HAS, Kind.IMPHRAS)

    @property
    def weighted(self) -> bool:
        return self in (Kind.RAS, Kind.HRAS, Kind.IMPRAS, Kind.IMPHRAS)

    @property
    def impedance_locals(self) -> bool:
        return self in (Kind.IMPRAS, Kind.IMPHRAS)


class Levels(IntEnum):
    ONE = 1
    TWO = 2


def _edge_midpoints(cover: Cover, dofs: np.ndarray) -> np.ndarray:
    edges = cover.dof_map[dofs]
    mesh = cover.mesh
    return 0.5 * (mesh.vertices[mesh.edges[edges, 0]]
                  + mesh.vertices[mesh.edges[edges, 1]])


@dataclass
class Preconditioner:
    """Built Schwarz operator; apply() evaluates M^{-1} r."""

    kind: Kind
    levels: Levels
    cover: Cover
    local_dofs: list[np.ndarray]
    local_factors: list
    local_weights: list[np.ndarray] | None
    a_prec: sp.spmatrix
    r0: sp.csr_matrix | None = None
    coarse_factor: object | None = None
    workers: int = 1

    @property
    def n_dofs(self) -> int:
        return self.cover.n_dofs

    def _local_solves(self, r: np.ndarray) -> list[np.ndarray]:
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(
                    lambda i: self.local_factors[i].solve(r[self.local_dofs[i]]),
                    range(len(self.local_factors))))
        return [f.solve(r[d]) for f, d in zip(self.local_factors,
                                              self.local_dofs)]

    def _local_sum(self, r: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_dofs, dtype=complex)
        sols = self._local_solves(r)
        # fixed subdomain accumulation order keeps applies reproducible
        for i, z in enumerate(sols):
            if self.local_weights is not None:
                z = z * self.local_weights[i]
            out[self.local_dofs[i]] += z
        return out

    def _coarse_solve(self, r: np.ndarray) -> np.ndarray:
        return self.r0.T @ self.coarse_factor.solve(self.r0 @ r)

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=complex)
        if r.shape != (self.n_dofs,):
            raise ValueError(
                f"residual has shape {r.shape}, expected ({self.n_dofs},)")
        if self.levels == Levels.TWO and self.kind.hybrid:
            t = self._coarse_solve(r)
            v = self._local_sum(r - self.a_prec @ t)
            return v - self._coarse_solve(self.a_prec @ v) + t
        out = self._local_sum(r)
        if self.levels == Levels.TWO:
            out += self._coarse_solve(r)
        return out

    __call__ = apply


def build(kind: Kind, levels: Levels, cover: Cover, local_matrices: list,
          a_prec: sp.spmatrix, kappa_prec: float,
          coarse_space: CoarseSpace | None = None,
          coarse_factor=None) -> Preconditioner:
    """Factorize all blocks and assemble an applicable preconditioner.

    local_matrices holds one matrix per subdomain (over interior edges for
    PEC-type kinds, closure edges for impedance-type kinds); entries that
    already are factorization handles are reused as-is, so several kinds
    can share one set of factors.  A pre-factorized coarse matrix may be
    passed the same way via coarse_factor.
    """
    kind = Kind(kind)
    levels = Levels(levels)
    if kappa_prec == 0:
        raise ValueError(
            "kappa_prec must be nonzero: the subdomain/coarse problems are "
            "only guaranteed invertible with absorption")
    if levels == Levels.TWO and coarse_space is None:
        raise ValueError("two-level preconditioner needs a coarse space")
    if levels == Levels.ONE and coarse_space is not None:
        raise ValueError("one-level preconditioner takes no coarse space")
    if len(local_matrices) != cover.n_subdomains:
        raise ValueError(
            f"{len(local_matrices)} local matrices for "
            f"{cover.n_subdomains} subdomains")

    dofs = [sub.closure_dofs if kind.impedance_locals else sub.interior_dofs
            for sub in cover.subdomains]
    factors = []
    for i, (mat, d) in enumerate(zip(local_matrices, dofs)):
        if hasattr(mat, "solve"):
            factors.append(mat)
            continue
        if mat.shape[0] != d.shape[0]:
            raise ValueError(
                f"local matrix {i} has size {mat.shape[0]}, subdomain "
                f"expects {d.shape[0]}")
        factors.append(factorize(mat, coords=_edge_midpoints(cover, d)))

    weights = None
    if kind.weighted:
        weights = []
        for sub in cover.subdomains:
            if kind.impedance_locals:
                w = np.zeros(sub.closure_dofs.shape[0])
                pos = np.searchsorted(sub.closure_dofs, sub.interior_dofs)
                w[pos] = sub.pou_weights
            else:
                w = sub.pou_weights
            weights.append(w)

    r0 = None
    if levels == Levels.TWO:
        r0 = coarse_space.r0
        if coarse_factor is None:
            a0 = coarse_space.a0
            if a0 is None:
                a0 = galerkin_coarse_matrix(r0, a_prec)
            cmesh = coarse_space.pair.coarse
            cmid = 0.5 * (cmesh.vertices[cmesh.edges[coarse_space.dof_map_coarse, 0]]
                          + cmesh.vertices[cmesh.edges[coarse_space.dof_map_coarse, 1]])
            coarse_factor = factorize(a0, coords=cmid)
    elif coarse_factor is not None:
        raise ValueError("one-level preconditioner takes no coarse factor")

    workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    return Preconditioner(kind=kind, levels=levels, cover=cover,
                          local_dofs=dofs, local_factors=factors,
                          local_weights=weights, a_prec=a_prec, r0=r0,
                          coarse_factor=coarse_factor, workers=workers)
