"""Multilevel and auxiliary-space preconditioners for the skeleton system.

The additive multilevel operator is I + sum_j I_j I_j^t (all size scales
equal 1 in two dimensions), with I_j realized as the face transfer on the
finest level composed with the chain of piecewise-linear prolongations;
the chains are applied by transposition and never materialized beyond the
finest transfer matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import LinearOperator, SizeCapError, SparseMatrix, StructuralError, spd_factor
from .mesh import MeshHierarchy, p1_prolongation
from .methods import ConstantDiffusion
from .skeleton import SkeletonSpace

PROLONGATION_KINDS = ("face_mean", "face_l2")
DENSE_MATERIALIZE_CAP = 5000


class ZeroDiagonalError(ValueError):
    pass


def build_pi(mesh, space, kind):
    """Transfer matrix from interior P1 nodal values to skeleton coefficients.

    face_mean writes the edge average into the face's constant mode;
    face_l2 additionally writes the first Legendre coefficient of the linear
    trace.  Modes beyond the linear trace are zero for both kinds."""
    if kind not in PROLONGATION_KINDS:
        raise StructuralError(f"unknown prolongation kind {kind!r}")
    k1 = space.degree + 1
    ncols = len(mesh.interior_vertices)
    faces = mesh.faces[space.face_ids]
    col = mesh.vertex_interior_index[faces]  # (Mf, 2), -1 for boundary endpoints
    base = np.arange(space.n_faces) * k1

    rows, cols, vals = [], [], []
    for side in range(2):
        keep = col[:, side] >= 0
        rows.append(base[keep])
        cols.append(col[keep, side])
        vals.append(np.full(int(keep.sum()), 0.5))
    if kind == "face_l2" and space.degree >= 1:
        slope = sqrt(3.0) / 6.0
        for side, sgn in ((0, -slope), (1, slope)):
            keep = col[:, side] >= 0
            rows.append(base[keep] + 1)
            cols.append(col[keep, side])
            vals.append(np.full(int(keep.sum()), sgn))
    coo = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.dof_count, ncols),
    )
    return SparseMatrix.from_scipy(coo, check_symmetry=False)


@dataclass(frozen=True)
class LevelChain:
    """One I_j: the finest face transfer composed with prolongations j..J-1."""

    pi: SparseMatrix
    prolongs: tuple
    j: int

    def apply(self, v):
        for p in self.prolongs[self.j:]:
            v = p.csr @ v
        return self.pi.csr @ v

    def apply_t(self, x):
        w = self.pi.csr.T @ x
        for p in reversed(self.prolongs[self.j:]):
            w = p.csr.T @ w
        return w

    def materialize(self):
        mat = self.pi.csr
        for p in reversed(self.prolongs[self.j:]):
            mat = mat @ p.csr
        return SparseMatrix.from_scipy(mat, check_symmetry=False)


def build_level_maps(hier, space, kind):
    """The I_j chains for a nested hierarchy with the skeleton on its finest
    level; I_J is the face transfer itself."""
    if space.mesh is not hier.finest:
        raise StructuralError("skeleton space must live on the finest hierarchy level")
    prolongs = tuple(
        p1_prolongation(hier.levels[j], hier.levels[j + 1])
        for j in range(len(hier.levels) - 1)
    )
    pi = build_pi(hier.finest, space, kind)
    return [LevelChain(pi, prolongs, j) for j in range(len(hier.levels))]


@dataclass(frozen=True)
class BpxPreconditioner:
    """Additive multilevel preconditioner I + sum_j I_j I_j^t.

    ``scales`` holds the per-level size factors h_j^(2-d) and ``diag_scale``
    the diagonal term's h^(2-d); both are identically 1 for d = 2."""

    dimension: int
    pi: SparseMatrix
    prolongs: tuple
    scales: np.ndarray
    diag_scale: float = 1.0

    @classmethod
    def from_hierarchy(cls, hier, space, kind):
        chains = build_level_maps(hier, space, kind)
        scales = np.array([m.h_max ** 0.0 for m in hier.levels])
        return cls(space.dof_count, chains[0].pi, chains[0].prolongs, scales)

    def apply(self, x):
        ws = [self.pi.csr.T @ x]
        for p in reversed(self.prolongs):
            ws.append(p.csr.T @ ws[-1])
        ws.reverse()  # ws[j] = I_j^t x
        u = self.scales[0] * ws[0]
        for j, p in enumerate(self.prolongs):
            u = p.csr @ u + self.scales[j + 1] * ws[j + 1]
        return self.diag_scale * x + self.pi.csr @ u

    def as_operator(self):
        return LinearOperator(self.dimension, self.apply)

    def materialize(self):
        """Dense matrix of the preconditioner; small problems only."""
        if self.dimension > DENSE_MATERIALIZE_CAP:
            raise SizeCapError(
                f"refusing to materialize a {self.dimension}-dim preconditioner"
            )
        out = self.diag_scale * np.eye(self.dimension)
        chain = self.pi.csr
        out += self.scales[len(self.prolongs)] * (chain @ chain.T).toarray()
        for j in range(len(self.prolongs) - 1, -1, -1):
            chain = chain @ self.prolongs[j].csr
            out += self.scales[j] * (chain @ chain.T).toarray()
        return out


def apply_bpx(B, x):
    """y = h^(2-d) x + sum_j h_j^(2-d) I_j (I_j^t x)."""
    return B.apply(np.asarray(x, dtype=float))


# -- smoothers ------------------------------------------------------------------


class JacobiSmoother:
    def __init__(self, D):
        d = D.diag()
        if np.any(d == 0):
            raise ZeroDiagonalError("zero diagonal entry")
        self.inv_diag = 1.0 / d

    def apply(self, x):
        return self.inv_diag * x


class SgsSmoother:
    """Symmetric Gauss-Seidel sweep (L+D)^-1 D (L+D)^-t."""

    def __init__(self, D):
        d = D.diag()
        if np.any(d == 0):
            raise ZeroDiagonalError("zero diagonal entry")
        self.diag = d
        self.lower = sp.tril(D.csr, format="csr")
        self.upper = self.lower.T.tocsr()

    def apply(self, x):
        w = spla.spsolve_triangular(self.upper, x, lower=False)
        return spla.spsolve_triangular(self.lower, self.diag * w, lower=True)


class RichardsonSmoother:
    """Scaled nodal-basis sum h^(2-d) sum <mu, eta_i> eta_i; the factor is
    identically 1 in two dimensions.  Quasi-uniform (square/crack) meshes
    only."""

    def __init__(self, h_max):
        self.factor = float(h_max) ** 0.0

    def apply(self, x):
        return self.factor * x


_SMOOTHERS = {"jacobi": JacobiSmoother, "sgs": SgsSmoother}


def make_smoother(kind, D, h_max=None):
    if kind == "richardson":
        if h_max is None:
            raise StructuralError("richardson smoother needs the mesh size")
        return RichardsonSmoother(h_max)
    if kind not in _SMOOTHERS:
        raise StructuralError(f"unknown smoother kind {kind!r}")
    return _SMOOTHERS[kind](D)


def smoother_apply(kind, D, x):
    """One-shot smoother application (jacobi, sgs or richardson)."""
    x = np.asarray(x, dtype=float)
    if kind == "richardson":
        return RichardsonSmoother(1.0).apply(x)
    return make_smoother(kind, D).apply(x)


# -- conforming P1 operators -----------------------------------------------------


def p1_stiffness(mesh, diffusion=None):
    """Stiffness of the conforming P1 space on interior vertices."""
    diffusion = diffusion if diffusion is not None else ConstantDiffusion()
    A = diffusion.tensors(mesh)
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    Jinv = np.empty_like(J)
    Jinv[:, 0, 0] = J[:, 1, 1] / detJ
    Jinv[:, 0, 1] = -J[:, 0, 1] / detJ
    Jinv[:, 1, 0] = -J[:, 1, 0] / detJ
    Jinv[:, 1, 1] = J[:, 0, 0] / detJ
    ghat = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    g = np.einsum("cdk,id->cik", Jinv, ghat)
    Ke = np.einsum("c,cia,cab,cjb->cij", 0.5 * detJ, g, A, g, optimize=True)
    return _scatter_p1(mesh, Ke)


def p1_mass(mesh):
    """Mass matrix of the conforming P1 space on interior vertices."""
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    area = mesh.tri_area
    Me = area[:, None, None] * base[None]
    return _scatter_p1(mesh, Me)


def _scatter_p1(mesh, Ke):
    col = mesh.vertex_interior_index[mesh.triangles]  # (T, 3)
    n = len(mesh.interior_vertices)
    r = np.repeat(col[:, :, None], 3, axis=2)
    c = np.repeat(col[:, None, :], 3, axis=1)
    mask = (r >= 0) & (c >= 0)
    coo = sp.coo_matrix((Ke[mask], (r[mask], c[mask])), shape=(n, n))
    return SparseMatrix.from_scipy(coo)


def build_ph(mesh, space):
    """Averaging map from skeleton coefficients to interior P1 nodal values:
    each interior node gets the mean of m_T over its vertex star."""
    k1 = space.degree + 1
    sk = space.face_index_of[mesh.tri_faces]  # (T, 3)
    deg = np.bincount(mesh.triangles.ravel(), minlength=mesh.n_vertices)

    vert = np.repeat(mesh.triangles, 3, axis=1).reshape(-1)      # t's vertices x3 faces
    face = np.tile(sk, (1, 3)).reshape(-1)                        # aligned face per entry
    keep = face >= 0
    vert, face = vert[keep], face[keep]
    rows = mesh.vertex_interior_index[vert]
    keep = rows >= 0
    vert, face, rows = vert[keep], face[keep], rows[keep]
    vals = 1.0 / (3.0 * deg[vert])
    coo = sp.coo_matrix(
        (vals, (rows, face * k1)),
        shape=(len(mesh.interior_vertices), space.dof_count),
    )
    return SparseMatrix.from_scipy(coo, check_symmetry=False)


# -- auxiliary-space preconditioner ----------------------------------------------


@dataclass(frozen=True)
class AuxPreconditioner:
    """General two-ingredient preconditioner S + Pi Btilde Pi^t."""

    dimension: int
    smoother: object
    pi: SparseMatrix
    coarse: object  # callable applying Btilde on interior P1 coefficients
    label: str = ""

    def apply(self, x):
        return self.smoother.apply(x) + self.pi.csr @ self.coarse(self.pi.csr.T @ x)

    def as_operator(self):
        return LinearOperator(self.dimension, self.apply)


class _VcBpx:
    """Additive multilevel sum on the conforming P1 hierarchy, identity at
    the finest level included."""

    def __init__(self, prolongs, scales):
        self.prolongs = prolongs
        self.scales = scales

    def __call__(self, v):
        ws = [v]
        for p in reversed(self.prolongs):
            ws.append(p.csr.T @ ws[-1])
        ws.reverse()
        u = self.scales[0] * ws[0]
        for j, p in enumerate(self.prolongs):
            u = p.csr @ u + self.scales[j + 1] * ws[j + 1]
        return u


def build_aux(D, mesh, space, prolongation_kind, smoother_kind, coarse_kind,
              hier=None, diffusion=None):
    """Auxiliary-space preconditioner: smoother plus transferred coarse solve.

    coarse_kind "exact" factors the conforming P1 stiffness (with the given
    diffusion) on the same mesh; "bpx" uses the additive multilevel sum on
    the P1 hierarchy and needs ``hier``."""
    pi = build_pi(mesh, space, prolongation_kind)
    smoother = make_smoother(smoother_kind, D, h_max=mesh.h_max)
    if coarse_kind == "exact":
        coarse = spd_factor(p1_stiffness(mesh, diffusion))
        label = f"{smoother_kind}+exact"
    elif coarse_kind == "bpx":
        if hier is None or hier.finest is not mesh:
            raise StructuralError("bpx coarse operator needs the mesh hierarchy")
        prolongs = tuple(
            p1_prolongation(hier.levels[j], hier.levels[j + 1])
            for j in range(len(hier.levels) - 1)
        )
        scales = np.array([m.h_max ** 0.0 for m in hier.levels])
        coarse = _VcBpx(prolongs, scales)
        label = f"{smoother_kind}+bpx"
    else:
        raise StructuralError(f"unknown coarse operator kind {coarse_kind!r}")
    return AuxPreconditioner(space.dof_count, smoother, pi, coarse, label)


def apply_aux(P, x):
    """y = S x + Pi (Btilde (Pi^t x))."""
    return P.apply(np.asarray(x, dtype=float))
