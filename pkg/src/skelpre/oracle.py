"""Independent brute-force references used by the test suites.

The monolithic path assembles the coupled (sigma, u, lambda) system from
raw monomial bases in a plain per-element loop and eliminates the interior
blocks densely, sharing nothing with the production assembly beyond
quadrature and the trace basis convention (which defines the DOFs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import SizeCapError, SparseMatrix
from .mesh import build_hierarchy
from .methods import (
    ConstantDiffusion,
    MethodSpec,
    method_spec,
    recover_interior,
)
from .polybasis import edge_basis, quadrature, triangle_basis
from .precond import BpxPreconditioner
from .skeleton import build_space
from . import linalg

MONOLITHIC_ELEMENT_CAP = 1000


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form solution with derived load; u vanishes on the unit
    square's boundary by construction."""

    u: object
    f: object
    name: str = "case"


def sin_sin_case():
    """u = sin(pi x) sin(pi y) on the unit square with A = I."""

    def u(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def f(x, y):
        return 2.0 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)

    return ManufacturedCase(u, f, "sin_sin")


def _mono_exps(k):
    return [(a, d - a) for d in range(k + 1) for a in range(d, -1, -1)]


def _mono_vals(exps, pts):
    out = np.empty((len(pts), len(exps)))
    for i, (a, b) in enumerate(exps):
        out[:, i] = pts[:, 0] ** a * pts[:, 1] ** b
    return out


def _mono_grads(exps, pts):
    out = np.zeros((len(pts), len(exps), 2))
    for i, (a, b) in enumerate(exps):
        if a:
            out[:, i, 0] = a * pts[:, 0] ** (a - 1) * pts[:, 1] ** b
        if b:
            out[:, i, 1] = b * pts[:, 0] ** a * pts[:, 1] ** (b - 1)
    return out


class _MonoW:
    """Raw monomial basis of W(T) in physical coordinates (no Piola, no
    orthonormalization): [P_k]^2 componentwise plus x*q for RT."""

    def __init__(self, k, kind):
        self.exps = _mono_exps(k)
        self.kind = kind
        self.hom = [(a, k - a) for a in range(k, -1, -1)] if kind == "rt" else []
        self.dim = 2 * len(self.exps) + len(self.hom)

    def values(self, pts):
        n = len(self.exps)
        out = np.zeros((len(pts), self.dim, 2))
        mv = _mono_vals(self.exps, pts)
        out[:, :n, 0] = mv
        out[:, n : 2 * n, 1] = mv
        for i, (a, b) in enumerate(self.hom):
            q = pts[:, 0] ** a * pts[:, 1] ** b
            out[:, 2 * n + i, 0] = pts[:, 0] * q
            out[:, 2 * n + i, 1] = pts[:, 1] * q
        return out

    def divs(self, pts):
        n = len(self.exps)
        out = np.zeros((len(pts), self.dim))
        mg = _mono_grads(self.exps, pts)
        out[:, :n] = mg[:, :, 0]
        out[:, n : 2 * n] = mg[:, :, 1]
        for i, (a, b) in enumerate(self.hom):
            out[:, 2 * n + i] = (a + b + 2) * pts[:, 0] ** a * pts[:, 1] ** b
        return out


@dataclass
class MonolithicSystem:
    full: SparseMatrix          # coupled (sigma, u, lambda) matrix, symmetric
    schur: SparseMatrix         # SPD multiplier system after elimination
    rhs: np.ndarray             # load vector of the SPD system
    n_sigma: int
    n_u: int


def monolithic_hdg(mesh, spec: MethodSpec, f=None, space=None):
    """Assemble the coupled three-field HDG system and eliminate the
    element-local blocks densely.  Small meshes only."""
    if mesh.n_triangles > MONOLITHIC_ELEMENT_CAP:
        raise SizeCapError(
            f"{mesh.n_triangles} elements exceed the monolithic cap"
        )
    if spec.is_wg or spec.family == "cr":
        raise ValueError("the monolithic oracle covers the HDG families")
    space = space if space is not None else build_space(mesh, spec.degree)
    k = spec.degree
    k1 = k + 1
    vexps = _mono_exps(spec.v_degree)
    wbas = _MonoW(k, spec.w_kind)
    nv, nw = len(vexps), wbas.dim
    qv = quadrature("triangle", 2 * k + 4)
    qe = quadrature("edge", 2 * k + 4)
    eb = edge_basis(k)
    A_all = spec.diffusion.tensors(mesh)

    T = mesh.n_triangles
    M = space.dof_count
    off_u = T * nw
    off_lam = off_u + T * nv
    ntot = off_lam + M

    full = sp.lil_matrix((ntot, ntot))
    rhs_full = np.zeros(ntot)
    kxx = np.zeros((T, nw + nv, nw + nv))
    kxl = [None] * T
    lam_cols = [None] * T
    r_x = np.zeros((T, nw + nv))

    for t in range(T):
        vid = mesh.triangles[t]
        p = mesh.vertices[vid]
        J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        detJ = float(np.linalg.det(J))
        pts = p[0] + qv.points @ J.T
        wq = qv.weights * detJ

        C = np.linalg.inv(A_all[t])
        Wv = wbas.values(pts)
        Wd = wbas.divs(pts)
        Vv = _mono_vals(vexps, pts)
        Mc = np.einsum("q,qia,ab,qjb->ij", wq, Wv, C, Wv)
        B = np.einsum("q,qi,qj->ij", wq, Wd, Vv)

        h_t = mesh.h_tri[t]
        if spec.penalty.kind == "zero":
            alpha = 0.0
        elif spec.penalty.kind == "constant":
            alpha = spec.penalty.value
        else:
            alpha = spec.penalty.value / h_t

        Tn = np.zeros((nw, 3 * k1))
        Q = np.zeros((3 * k1, nv))
        Mb = np.zeros(3 * k1)
        cols = np.full(3 * k1, -1, dtype=np.int64)
        for loc in range(3):
            s, e = vid[(loc + 1) % 3], vid[(loc + 2) % 3]
            a, bb = p[(loc + 1) % 3], p[(loc + 2) % 3]
            L = float(np.linalg.norm(bb - a))
            tau = (bb - a) / L
            nvec = np.array([tau[1], -tau[0]])
            tq = qe.points if s < e else 1.0 - qe.points
            ep = a[None, :] + qe.points[:, None] * (bb - a)[None, :]
            ev = eb.values(tq)
            Wev = wbas.values(ep)
            Vev = _mono_vals(vexps, ep)
            sl = slice(loc * k1, (loc + 1) * k1)
            Tn[:, sl] = L * np.einsum("q,qid,d,qn->in", qe.weights, Wev, nvec, ev)
            Q[sl, :] = L * np.einsum("q,qn,qj->nj", qe.weights, ev, Vev)
            Mb[sl] = L
            fid = mesh.tri_faces[t, loc]
            si = space.face_index_of[fid]
            if si >= 0:
                cols[sl] = si * k1 + np.arange(k1)

        Gp = Q.T @ (Q / Mb[:, None])
        kxx[t, :nw, :nw] = Mc
        kxx[t, :nw, nw:] = B
        kxx[t, nw:, :nw] = B.T
        kxx[t, nw:, nw:] = -alpha * Gp
        kxl_t = np.vstack([-Tn, alpha * Q.T])
        kxl[t] = kxl_t
        lam_cols[t] = cols

        if f is not None:
            F = np.einsum("q,q,qj->j", wq, f(pts[:, 0], pts[:, 1]), Vv)
            r_x[t, nw:] = -F
            rhs_full[off_u + t * nv : off_u + (t + 1) * nv] = -F

        sidx = np.arange(t * nw, (t + 1) * nw)
        uidx = np.arange(off_u + t * nv, off_u + (t + 1) * nv)
        xidx = np.concatenate([sidx, uidx])
        full[np.ix_(xidx, xidx)] += kxx[t]
        keep = cols >= 0
        lidx = off_lam + cols[keep]
        full[np.ix_(xidx, lidx)] += kxl_t[:, keep]
        full[np.ix_(lidx, xidx)] += kxl_t[:, keep].T
        full[np.ix_(lidx, lidx)] += -alpha * np.diag(Mb)[np.ix_(keep, keep)]

    # dense per-element elimination of the (sigma, u) blocks
    schur = np.zeros((M, M))
    rhs = np.zeros(M)
    a_ll = (full[off_lam:, off_lam:]).toarray()
    for t in range(T):
        cols = lam_cols[t]
        keep = cols >= 0
        sol = np.linalg.solve(kxx[t], kxl[t][:, keep])
        lidx = cols[keep]
        schur[np.ix_(lidx, lidx)] += -(kxl[t][:, keep].T @ sol)
        if f is not None:
            rhs[lidx] += kxl[t][:, keep].T @ np.linalg.solve(kxx[t], r_x[t])
    schur += a_ll
    schur = -schur  # sign-normalize: the eliminated system is the negative
    rhs = rhs if f is not None else np.zeros(M)

    return MonolithicSystem(
        SparseMatrix.from_scipy(full.tocsr()),
        SparseMatrix.from_scipy(sp.csr_matrix(schur)),
        rhs,
        T * nw,
        T * nv,
    )


def cr_shape_assembly(mesh, diffusion=None, f=None):
    """Classical nonconforming P1 assembly from the shapes 1 - 2*lambda_i,
    integrated numerically per element."""
    diffusion = diffusion if diffusion is not None else ConstantDiffusion()
    A_all = diffusion.tensors(mesh)
    from .skeleton import build_space as _bs

    space = _bs(mesh, 0)
    M = space.dof_count
    K = sp.lil_matrix((M, M))
    b = np.zeros(M)
    qv = quadrature("triangle", 3)
    lam_q = np.column_stack(
        [1.0 - qv.points.sum(axis=1), qv.points[:, 0], qv.points[:, 1]]
    )
    phi_q = 1.0 - 2.0 * lam_q
    ghat = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    for t in range(mesh.n_triangles):
        p = mesh.vertices[mesh.triangles[t]]
        J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        detJ = float(np.linalg.det(J))
        Jinv = np.linalg.inv(J)
        g = -2.0 * ghat @ Jinv
        Ke = np.einsum("q,ia,ab,jb->ij", qv.weights * detJ, g, A_all[t], g)
        cols = space.face_index_of[mesh.tri_faces[t]]
        keep = cols >= 0
        K[np.ix_(cols[keep], cols[keep])] += Ke[np.ix_(keep, keep)]
        if f is not None:
            pts = p[0] + qv.points @ J.T
            fe = np.einsum(
                "q,q,qi->i", qv.weights * detJ, f(pts[:, 0], pts[:, 1]), phi_q
            )
            b[cols[keep]] += fe[keep]
    return SparseMatrix.from_scipy(K.tocsr()), b


def l2_error_u(mesh, spec, sol, exact_u):
    """L2 distance between the recovered scalar field and a closed form."""
    from .methods import evaluate_u

    qv = quadrature("triangle", 10)
    vals = evaluate_u(mesh, spec, sol, qv.points)
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    pts = p[:, 0][:, None, :] + np.einsum("ckd,qd->cqk", J, qv.points)
    ue = exact_u(pts[..., 0], pts[..., 1])
    err2 = np.einsum("q,cq,c->", qv.weights, (vals - ue) ** 2, detJ)
    return float(np.sqrt(err2))


def convergence_study(case, spec, levels, domain="square", reduction=1e-10):
    """Solve the manufactured problem across levels; returns (h, L2 error)
    pairs for the recovered scalar field."""
    if max(levels) > 6:
        raise SizeCapError("convergence study capped at level 6")
    from .methods import assemble_schur
    from .linalg import pcg

    hier = build_hierarchy(domain, max(levels))
    out = []
    for j in levels:
        mesh = hier.levels[j]
        space = build_space(mesh, spec.degree)
        D, b = assemble_schur(mesh, space, spec, case.f)
        B = BpxPreconditioner.from_hierarchy(hier.prefix(j), space, "face_l2")
        lam, _ = pcg(D, B.as_operator(), b, reduction=reduction)
        sol = recover_interior(mesh, space, spec, lam, case.f)
        out.append((mesh.h_max, l2_error_u(mesh, spec, sol, case.u)))
    return out
