"""The multiplier space on interior mesh faces and its mesh-dependent norms.

Each interior face carries k+1 degrees of freedom: coefficients in the
shifted-Legendre basis orthonormal in the face's unit parameter, traversed
from the lower to the higher endpoint index.  Mode 0 is the constant 1, so
a face's first coefficient equals the face mean of the function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import SparseMatrix, StructuralError
from .mesh import Mesh, skeleton_faces
from .polybasis import EDGE_DEGREE_CAP, UnsupportedDegreeError


@dataclass(frozen=True)
class SkeletonSpace:
    """Degree-k multiplier space over the interior faces of a mesh."""

    mesh: Mesh
    degree: int
    face_ids: np.ndarray          # interior face ids, lexicographic order
    face_index_of: np.ndarray     # face id -> skeleton face index, -1 boundary
    dof_count: int

    @property
    def n_faces(self):
        return len(self.face_ids)

    def dof_range(self, skeleton_face):
        k1 = self.degree + 1
        return skeleton_face * k1, (skeleton_face + 1) * k1

    def zeros(self):
        return np.zeros(self.dof_count)

    def check_vector(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dof_count,):
            raise StructuralError(
                f"skeleton vector length {v.shape} != {self.dof_count}"
            )
        return v


def build_space(mesh, k):
    """Multiplier space with deterministic DOF numbering over interior faces."""
    if not 0 <= k <= EDGE_DEGREE_CAP:
        raise UnsupportedDegreeError(f"skeleton degree {k} outside 0..{EDGE_DEGREE_CAP}")
    ids = skeleton_faces(mesh)
    index_of = np.full(mesh.n_faces, -1, dtype=np.int64)
    index_of[ids] = np.arange(len(ids))
    return SkeletonSpace(mesh, k, ids, index_of, (k + 1) * len(ids))


def _face_h_sums(space):
    mesh = space.mesh
    tris = mesh.face_tris[space.face_ids]
    return mesh.h_tri[tris[:, 0]] + mesh.h_tri[tris[:, 1]]


def norm_h(space, v):
    """sqrt( sum_T h_T int_{dT} v^2 ): the weighted skeleton L2 norm."""
    v = space.check_vector(v)
    k1 = space.degree + 1
    c2 = (v.reshape(-1, k1) ** 2).sum(axis=1)
    L = space.mesh.face_len[space.face_ids]
    return float(np.sqrt(np.sum(_face_h_sums(space) * L * c2)))


def _element_trace_layout(space):
    """Per element: skeleton dof base of each local face (-1 on boundary)
    and the face lengths."""
    mesh = space.mesh
    k1 = space.degree + 1
    sk = space.face_index_of[mesh.tri_faces]          # (T, 3)
    base = np.where(sk >= 0, sk * k1, -1)
    L = mesh.face_len[mesh.tri_faces]                 # (T, 3)
    return base, L


def triple_norm_h(space, v):
    """sqrt( sum_T h_T^{-1} || v - m_T(v) ||^2_{dT} ) with m_T the average
    of the face means; the trace of v on boundary faces is zero."""
    v = space.check_vector(v)
    k1 = space.degree + 1
    mesh = space.mesh
    base, L = _element_trace_layout(space)
    interior = base >= 0

    coeff = np.zeros((mesh.n_triangles, 3, k1))
    idx = base[..., None] + np.arange(k1)[None, None, :]
    coeff[interior] = v[idx[interior]]
    m = coeff[:, :, 0].sum(axis=1) / 3.0

    dev = coeff.copy()
    dev[:, :, 0] -= m[:, None]
    per_face = (dev**2).sum(axis=2)
    total = np.sum((per_face * L).sum(axis=1) / mesh.h_tri)
    return float(np.sqrt(total))


def gram_matrices(space):
    """Gram matrices (G_h, G_triple) with v' G_h v = norm_h(v)^2 and
    v' G_triple v = triple_norm_h(v)^2."""
    mesh = space.mesh
    k1 = space.degree + 1
    M = space.dof_count

    L = mesh.face_len[space.face_ids]
    w = np.repeat(_face_h_sums(space) * L, k1)
    g_h = SparseMatrix(sp.diags(w).tocsr(), True)

    base, Lf = _element_trace_layout(space)
    nloc = 3 * k1
    T = mesh.n_triangles
    # local quadratic form: h^-1 sum_f L_f || c_f - m e0 ||^2, boundary c_f = 0
    diag = np.repeat(Lf, k1, axis=1).reshape(T, nloc)
    wsel = np.zeros((T, nloc))
    zvec = np.zeros((T, nloc))
    mode0 = np.arange(0, nloc, k1)
    interior = base >= 0
    for j, m0 in enumerate(mode0):
        wsel[interior[:, j], m0] = 1.0
        zvec[interior[:, j], m0] = Lf[interior[:, j], j]
    ltot = Lf.sum(axis=1)
    Q = (
        np.einsum("ti,ij->tij", diag, np.eye(nloc))
        - (np.einsum("ti,tj->tij", wsel, zvec) + np.einsum("ti,tj->tij", zvec, wsel)) / 3.0
        + np.einsum("t,ti,tj->tij", ltot / 9.0, wsel, wsel)
    )
    Q /= mesh.h_tri[:, None, None]

    gdof = np.where(
        interior[..., None],
        base[..., None] + np.arange(k1)[None, None, :],
        -1,
    ).reshape(T, nloc)
    rows = np.repeat(gdof[:, :, None], nloc, axis=2)
    cols = np.repeat(gdof[:, None, :], nloc, axis=1)
    mask = (rows >= 0) & (cols >= 0)
    coo = sp.coo_matrix(
        (Q[mask], (rows[mask], cols[mask])), shape=(M, M)
    )
    g_triple = SparseMatrix.from_scipy(coo)
    return g_h, g_triple
