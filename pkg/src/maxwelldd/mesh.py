"""Structured tetrahedral meshes of the unit cube with oriented edges.

Each of the n^3 subcubes is split into the six tetrahedra sharing the
subcube's main diagonal (Kuhn/Freudenthal split).  The split is identical at
every level, so a mesh with n divisible by m refines the m-mesh exactly:
every fine tet lies inside a single coarse tet.  Edges carry the degrees of
freedom; they are globally oriented from the lower to the higher vertex
index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

# Local vertex pairs of a tet's six edges, in fixed order.
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
# Local vertex triples of a tet's four faces (face i is opposite vertex i).
LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])

# The six permutations defining the Kuhn split, in itertools order.  Cell
# tet p covers the points whose local coordinates satisfy
# f[perm[0]] >= f[perm[1]] >= f[perm[2]].
KUHN_PERMS = tuple(itertools.permutations((0, 1, 2)))
_PERM_RANK = {p: i for i, p in enumerate(KUHN_PERMS)}

FACE_TAGS = ("x0", "x1", "y0", "y1", "z0", "z1")


@dataclass(frozen=True)
class TetMesh:
    """Kuhn-split tetrahedral mesh of [0,1]^3 with n_per_dir cells per axis.

    vertices_int holds the integer grid coordinates (vertex i sits at
    vertices_int[i] / n_per_dir); all boundary predicates use them so no
    floating-point tolerance is ever involved.
    """

    n_per_dir: int
    vertices: np.ndarray        # (V, 3) float, in [0, 1]^3
    vertices_int: np.ndarray    # (V, 3) int, in {0..n}^3
    tets: np.ndarray            # (T, 4) vertex indices, positively oriented
    edges: np.ndarray           # (E, 2) vertex pairs, low < high
    tet_edge_idx: np.ndarray    # (T, 6) global edge index per local edge
    tet_edge_sign: np.ndarray   # (T, 6) +1/-1 local vs global orientation
    boundary_faces: np.ndarray  # (F, 3) vertex triples on the cube surface
    boundary_face_tags: np.ndarray  # (F,) index into FACE_TAGS
    boundary_edges: np.ndarray  # sorted edge indices on the cube surface

    @property
    def h(self) -> float:
        return 1.0 / self.n_per_dir

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def boundary_edge_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_edges, dtype=bool)
        mask[self.boundary_edges] = True
        return mask


@dataclass(frozen=True)
class NestedMeshPair:
    """A fine mesh together with the coarse mesh it refines.

    containment[t] is the coarse tet whose closure holds fine tet t.
    """

    fine: TetMesh
    coarse: TetMesh
    containment: np.ndarray

    @property
    def ratio(self) -> int:
        return self.fine.n_per_dir // self.coarse.n_per_dir


def _vertex_ids(coords: np.ndarray, n: int) -> np.ndarray:
    """Lexicographic vertex index on the (n+1)^3 grid (x fastest)."""
    m = n + 1
    return coords[..., 0] + m * (coords[..., 1] + m * coords[..., 2])


def build_cube_mesh(n: int) -> TetMesh:
    """Build the Kuhn-split mesh of the unit cube with n cells per axis."""
    if n < 1:
        raise ValueError(f"n_per_dir must be >= 1, got {n}")
    m = n + 1

    # x varies fastest in the vertex numbering: vid = ix + m*iy + m^2*iz.
    vidx = np.arange(m ** 3)
    vertices_int = np.stack([vidx % m, (vidx // m) % m, vidx // (m * m)],
                            axis=1)
    vertices = vertices_int / float(n)

    # Cell origins in the same order, then the 6 path tets per cell.
    cidx = np.arange(n ** 3)
    origins = np.stack([cidx % n, (cidx // n) % n, cidx // (n * n)], axis=1)

    eye = np.eye(3, dtype=np.int64)
    corner_sets = []
    for perm in KUHN_PERMS:
        p0 = np.zeros(3, dtype=np.int64)
        p1 = eye[perm[0]]
        p2 = eye[perm[0]] + eye[perm[1]]
        p3 = np.ones(3, dtype=np.int64)
        quad = [p0, p1, p2, p3]
        # Odd permutations give a negatively oriented path; swap two
        # vertices to keep every tet positively oriented.
        sign = np.linalg.det(np.stack([p1 - p0, p2 - p0, p3 - p0]))
        if sign < 0:
            quad[1], quad[2] = quad[2], quad[1]
        corner_sets.append(np.stack(quad))
    corners = np.stack(corner_sets)                        # (6, 4, 3)

    coords = origins[:, None, None, :] + corners[None, :, :, :]  # (C,6,4,3)
    tets = _vertex_ids(coords, n).reshape(-1, 4)

    # Edges: unique sorted vertex pairs over all tets, ordered by (a, b).
    pairs = np.sort(tets[:, LOCAL_EDGES], axis=2)          # (T, 6, 2)
    keys = pairs[..., 0].astype(np.int64) * (m ** 3) + pairs[..., 1]
    uniq_keys, tet_edge_idx = np.unique(keys, return_inverse=True)
    tet_edge_idx = tet_edge_idx.reshape(-1, 6)
    edges = np.stack([uniq_keys // (m ** 3), uniq_keys % (m ** 3)], axis=1)

    ends = tets[:, LOCAL_EDGES]                            # (T, 6, 2)
    tet_edge_sign = np.where(ends[..., 0] < ends[..., 1], 1, -1).astype(np.int8)

    # Boundary faces: tet faces occurring exactly once.
    faces = np.sort(tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    fkeys = (faces[:, 0].astype(np.int64) * (m ** 3) + faces[:, 1]) * (m ** 3) \
        + faces[:, 2]
    uniq_f, first, counts = np.unique(fkeys, return_index=True,
                                      return_counts=True)
    bnd = first[counts == 1]
    boundary_faces = faces[bnd]

    fverts = vertices_int[boundary_faces]                  # (F, 3, 3)
    tags = np.full(boundary_faces.shape[0], -1, dtype=np.int64)
    for axis in range(3):
        lo = np.all(fverts[:, :, axis] == 0, axis=1)
        hi = np.all(fverts[:, :, axis] == n, axis=1)
        tags[lo] = 2 * axis
        tags[hi] = 2 * axis + 1
    if np.any(tags < 0):
        raise AssertionError("boundary face not on any cube face")

    bpairs = np.sort(boundary_faces[:, [[0, 1], [0, 2], [1, 2]]], axis=2)
    bkeys = bpairs[..., 0].astype(np.int64) * (m ** 3) + bpairs[..., 1]
    boundary_edges = np.searchsorted(uniq_keys, np.unique(bkeys))

    return TetMesh(
        n_per_dir=n,
        vertices=vertices,
        vertices_int=vertices_int,
        tets=tets,
        edges=edges,
        tet_edge_idx=tet_edge_idx,
        tet_edge_sign=tet_edge_sign,
        boundary_faces=boundary_faces,
        boundary_face_tags=tags,
        boundary_edges=boundary_edges,
    )


def interior_edge_set(mesh: TetMesh) -> np.ndarray:
    """Edges not on the cube surface, in ascending index order."""
    return np.setdiff1d(np.arange(mesh.n_edges), mesh.boundary_edges)


def locate_in_kuhn_cell(frac: np.ndarray) -> np.ndarray:
    """Kuhn tet rank (0..5) of points given their in-cell coordinates.

    frac is (N, 3) with entries in [0, 1].  Ties on cell faces are broken
    towards the lower axis, which always selects a tet whose closure
    contains the point.
    """
    order = np.argsort(-frac, axis=1, kind="stable")
    lut = np.zeros((3, 3, 3), dtype=np.int64)
    for perm, rank in _PERM_RANK.items():
        lut[perm] = rank
    return lut[order[:, 0], order[:, 1], order[:, 2]]


def build_nested_pair(n_fine: int, n_coarse: int) -> NestedMeshPair:
    """Build fine/coarse meshes with exact nesting (n_coarse | n_fine)."""
    if n_coarse < 1 or n_fine < 1:
        raise ValueError("mesh sizes must be positive")
    if n_fine % n_coarse != 0:
        raise ValueError(
            f"n_coarse={n_coarse} does not divide n_fine={n_fine}; "
            "the meshes would not nest")
    fine = build_cube_mesh(n_fine)
    coarse = fine if n_fine == n_coarse else build_cube_mesh(n_coarse)
    ratio = n_fine // n_coarse

    # Barycenters in quarter-units of the fine grid are integers, so the
    # coarse cell of each fine tet is exact integer arithmetic.
    bary4 = fine.vertices_int[fine.tets].sum(axis=1)       # (T, 3), = 4*bary
    cell = np.clip(bary4 // (4 * ratio), 0, n_coarse - 1)
    frac = bary4 / (4.0 * ratio) - cell
    ranks = locate_in_kuhn_cell(frac)
    cell_lin = cell[:, 0] + n_coarse * (cell[:, 1] + n_coarse * cell[:, 2])
    containment = cell_lin * 6 + ranks
    return NestedMeshPair(fine=fine, coarse=coarse, containment=containment)


def dump_text(mesh: TetMesh) -> str:
    """Plain-text dump (one vertex/tet/edge per line) for debugging."""
    lines = [f"# cube mesh n={mesh.n_per_dir} "
             f"V={mesh.n_vertices} T={mesh.n_tets} E={mesh.n_edges}"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for t in mesh.tets:
        lines.append(f"t {t[0]} {t[1]} {t[2]} {t[3]}")
    for e in mesh.edges:
        lines.append(f"e {e[0]} {e[1]}")
    return "\n".join(lines) + "\n"
