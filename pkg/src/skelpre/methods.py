"""Hybridized discretizations and their condensation to the skeleton system.

Seven families share the element-local structure: solve trace-driven and
load-driven local problems per element, accumulate the element Schur block
into the global multiplier matrix, and keep the lifts for interior
recovery.  Element loops run in fixed-size chunks of batched numpy
operations so assembly is deterministic regardless of problem size.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .linalg import SparseMatrix, StructuralError
from .mesh import GRADED_COEFFICIENT, Mesh
from .polybasis import edge_basis, quadrature, rt_basis, triangle_basis
from .skeleton import SkeletonSpace

CHUNK = 16384


class IncompatibleMethodError(ValueError):
    """Family/degree combination without a solvable local problem."""


# -- method specification ------------------------------------------------------


class Diffusion:
    """Per-element constant 2x2 SPD diffusion tensors."""

    def tensors(self, mesh):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantDiffusion(Diffusion):
    xx: float = 1.0
    xy: float = 0.0
    yy: float = 1.0

    def tensors(self, mesh):
        a = np.array([[self.xx, self.xy], [self.xy, self.yy]])
        return np.broadcast_to(a, (mesh.n_triangles, 2, 2))


@dataclass(frozen=True)
class QuadrantDiffusion(Diffusion):
    """a(x, y) * I with the checkerboard values per quadrant."""

    values: tuple = GRADED_COEFFICIENT

    def scalar(self, x, y):
        vmm, vpm, vpp, vmp = self.values
        return np.where(
            x < 0, np.where(y < 0, vmm, vmp), np.where(y < 0, vpm, vpp)
        )

    def tensors(self, mesh):
        cent = mesh.vertices[mesh.triangles].mean(axis=1)
        a = self.scalar(cent[:, 0], cent[:, 1])
        out = np.zeros((mesh.n_triangles, 2, 2))
        out[:, 0, 0] = a
        out[:, 1, 1] = a
        return out


@dataclass(frozen=True)
class Penalty:
    """Penalty law alpha_T: zero, a constant, or c / h_T."""

    kind: str  # "zero" | "constant" | "per_h"
    value: float = 0.0

    def per_element(self, h_tri):
        if self.kind == "zero":
            return np.zeros_like(h_tri)
        if self.kind == "constant":
            return np.full_like(h_tri, self.value)
        if self.kind == "per_h":
            return self.value / h_tri
        raise StructuralError(f"unknown penalty kind {self.kind!r}")


_FAMILY_SPACES = {
    # family: (V degree offset from k, W kind, default penalty)
    "hdg1": (0, "rt", Penalty("zero")),
    "hdg2": (-1, "vec", Penalty("zero")),
    "hdg3": (0, "vec", Penalty("constant", 1.0)),
    "hdg4": (1, "vec", Penalty("per_h", 1.0)),
    "wg1": (0, "rt", Penalty("zero")),
    "wg2": (-1, "vec", Penalty("zero")),
    "cr": (None, None, Penalty("zero")),
}


@dataclass(frozen=True)
class MethodSpec:
    """Discretization choice: family, trace degree, penalty law, diffusion."""

    family: str
    degree: int
    penalty: Penalty
    diffusion: Diffusion

    @property
    def is_wg(self):
        return self.family.startswith("wg")

    @property
    def v_degree(self):
        off = _FAMILY_SPACES[self.family][0]
        return self.degree + off

    @property
    def w_kind(self):
        return _FAMILY_SPACES[self.family][1]


def method_spec(family, degree, penalty=None, diffusion=None):
    """Validated MethodSpec with the per-family defaults of the experiments:
    hdg3 uses alpha_T = 1, hdg4 uses alpha_T = 1/h_T, all others zero."""
    if family not in _FAMILY_SPACES:
        raise IncompatibleMethodError(f"unknown method family {family!r}")
    if degree < 0:
        raise IncompatibleMethodError("degree must be nonnegative")
    if family == "cr" and degree != 0:
        raise IncompatibleMethodError("the nonconforming element requires k = 0")
    if family in ("hdg2", "wg2") and degree < 1:
        raise IncompatibleMethodError(f"{family} requires k >= 1")
    pen = penalty if penalty is not None else _FAMILY_SPACES[family][2]
    if family in ("hdg1", "hdg2", "wg1", "wg2") and pen.kind != "zero":
        raise IncompatibleMethodError(f"{family} is defined with zero penalty")
    diff = diffusion if diffusion is not None else ConstantDiffusion()
    return MethodSpec(family, degree, pen, diff)


# -- reference tables ----------------------------------------------------------


@lru_cache(maxsize=None)
def _ref_data(family, k):
    vdeg = k + _FAMILY_SPACES[family][0]
    qdeg = 2 * k + 3
    qv = quadrature("triangle", qdeg)
    qe = quadrature("edge", qdeg)
    V = triangle_basis(vdeg)
    Vv = V.values(qv.points)
    Vg = V.grads(qv.points)

    t = qe.points
    edge_pts = np.stack(
        [
            np.column_stack([1.0 - t, t]),          # face 0: v1 -> v2
            np.column_stack([np.zeros_like(t), 1.0 - t]),  # face 1: v2 -> v0
            np.column_stack([t, np.zeros_like(t)]),  # face 2: v0 -> v1
        ]
    )
    Vedge = np.stack([V.values(edge_pts[i]) for i in range(3)])
    eta = edge_basis(k).values(t)
    parity = (-1.0) ** np.arange(k + 1)

    wkind = _FAMILY_SPACES[family][1]
    if wkind == "rt":
        W = rt_basis(k)
        Wv = W.values(qv.points)
        Wdiv = W.divs(qv.points)
        Wedge = np.stack([W.values(edge_pts[i]) for i in range(3)])
        nw = W.dim
        extra = {}
    else:
        Ws = triangle_basis(k)
        nws = Ws.dim
        nw = 2 * nws
        Wsv = Ws.values(qv.points)
        Wsg = Ws.grads(qv.points)
        Wv = np.zeros((len(qv.points), nw, 2))
        Wv[:, :nws, 0] = Wsv
        Wv[:, nws:, 1] = Wsv
        Wedge = np.zeros((3, len(t), nw, 2))
        for i in range(3):
            we = Ws.values(edge_pts[i])
            Wedge[i, :, :nws, 0] = we
            Wedge[i, :, nws:, 1] = we
        Wdiv = None
        extra = {"Wsg": Wsg, "nws": nws}
    return {
        "k": k,
        "vdeg": vdeg,
        "wkind": wkind,
        "nv": V.dim,
        "nw": nw,
        "qv": qv,
        "qe": qe,
        "Vv": Vv,
        "Vg": Vg,
        "Vedge": Vedge,
        "eta": eta,
        "parity": parity,
        "Wv": Wv,
        "Wdiv": Wdiv,
        "Wedge": Wedge,
        **extra,
    }


def _geometry(coords):
    """Affine data for a batch of triangles: coords (c, 3, 2)."""
    v0 = coords[:, 0]
    J = np.stack([coords[:, 1] - v0, coords[:, 2] - v0], axis=2)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(detJ <= 0):
        raise StructuralError("degenerate or negatively oriented element")
    Jinv = np.empty_like(J)
    Jinv[:, 0, 0] = J[:, 1, 1] / detJ
    Jinv[:, 0, 1] = -J[:, 0, 1] / detJ
    Jinv[:, 1, 0] = -J[:, 1, 0] / detJ
    Jinv[:, 1, 1] = J[:, 0, 0] / detJ
    tang = np.stack(
        [coords[:, 2] - coords[:, 1], coords[:, 0] - coords[:, 2], coords[:, 1] - coords[:, 0]],
        axis=1,
    )
    L = np.linalg.norm(tang, axis=2)
    normals = np.stack([tang[..., 1], -tang[..., 0]], axis=2) / L[..., None]
    h = L.max(axis=1)
    return {"v0": v0, "J": J, "detJ": detJ, "Jinv": Jinv, "L": L,
            "normals": normals, "h": h}


def _inv2x2(a):
    det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
    inv = np.empty_like(a)
    inv[:, 0, 0] = a[:, 1, 1] / det
    inv[:, 0, 1] = -a[:, 0, 1] / det
    inv[:, 1, 0] = -a[:, 1, 0] / det
    inv[:, 1, 1] = a[:, 0, 0] / det
    return inv


def _element_matrices(ref, geom, A, flips):
    """Raw element integrals shared by the HDG and WG local problems.

    Trace slots are face-major: slot (f, n) = f*(k+1)+n, with the edge basis
    expressed in the global (low to high endpoint index) orientation via the
    flip parities."""
    k1 = ref["k"] + 1
    nv, nw = ref["nv"], ref["nw"]
    wq = ref["qv"].weights
    we = ref["qe"].weights
    detJ, Jinv, L, normals = geom["detJ"], geom["Jinv"], geom["L"], geom["normals"]
    c = len(detJ)

    # W values on volume points and divergences
    if ref["wkind"] == "rt":
        Wvol = np.einsum("ckd,qid->cqik", geom["J"], ref["Wv"]) / detJ[:, None, None, None]
        Wdiv = ref["Wdiv"][None, :, :] / detJ[:, None, None]
        Wedg = (
            np.einsum("ckd,fqid->cfqik", geom["J"], ref["Wedge"])
            / detJ[:, None, None, None, None]
        )
    else:
        Wvol = np.broadcast_to(ref["Wv"], (c,) + ref["Wv"].shape)
        nws = ref["nws"]
        grad_s = np.einsum("cdk,qid->cqik", Jinv, ref["Wsg"])  # (c, q, nws, 2)
        Wdiv = np.concatenate([grad_s[..., 0], grad_s[..., 1]], axis=2)
        Wedg = np.broadcast_to(ref["Wedge"], (c,) + ref["Wedge"].shape)

    Cmat = _inv2x2(A)
    Mc = np.einsum("q,cqia,cab,cqjb,c->cij", wq, Wvol, Cmat, Wvol, detJ, optimize=True)
    B = np.einsum("q,cqi,qj,c->cij", wq, Wdiv, ref["Vv"], detJ, optimize=True)

    signs = np.where(flips[:, :, None], ref["parity"][None, None, :], 1.0)
    etaF = ref["eta"][None, None, :, :] * signs[:, :, None, :]  # (c, 3, qe, k1)

    Wn = np.einsum("cfqid,cfd->cfqi", Wedg, normals, optimize=True)
    Tn = np.einsum("q,cfqi,cfqn,cf->cifn", we, Wn, etaF, L, optimize=True).reshape(
        c, nw, 3 * k1
    )
    Q = np.einsum("q,cfqn,fqj,cf->cfnj", we, etaF, ref["Vedge"], L, optimize=True).reshape(
        c, 3 * k1, nv
    )
    Mbnd = np.repeat(L, k1, axis=1)  # (c, 3*k1) diagonal of the trace mass
    return {"Mc": Mc, "B": B, "Tn": Tn, "Q": Q, "Mbnd": Mbnd,
            "Wvol": Wvol, "Cmat": Cmat, "wq": wq, "detJ": detJ}


def _load_vector(ref, geom, f):
    pts = geom["v0"][:, None, :] + np.einsum(
        "ckd,qd->cqk", geom["J"], ref["qv"].points
    )
    fv = f(pts[..., 0], pts[..., 1])
    return np.einsum("q,cq,qj,c->cj", ref["qv"].weights, fv, ref["Vv"], geom["detJ"])


def _hdg_local(ref, geom, A, alpha, flips, f=None):
    """Trace lifts, Schur blocks and load data for one HDG chunk."""
    em = _element_matrices(ref, geom, A, flips)
    nv, nw = ref["nv"], ref["nw"]
    m = em["Q"].shape[1]
    c = len(geom["detJ"])

    Qs = em["Q"] / em["Mbnd"][:, :, None]
    Gp = np.einsum("clj,clk->cjk", Qs, em["Q"], optimize=True)

    K = np.zeros((c, nw + nv, nw + nv))
    K[:, :nw, :nw] = em["Mc"]
    K[:, :nw, nw:] = em["B"]
    K[:, nw:, :nw] = -np.transpose(em["B"], (0, 2, 1))
    K[:, nw:, nw:] = alpha[:, None, None] * Gp

    R = np.zeros((c, nw + nv, m))
    R[:, :nw] = em["Tn"]
    R[:, nw:] = alpha[:, None, None] * np.transpose(em["Q"], (0, 2, 1))
    try:
        X = np.linalg.solve(K, R)
    except np.linalg.LinAlgError as exc:
        raise IncompatibleMethodError(f"singular local system: {exc}") from exc
    Xs, Xu = X[:, :nw], X[:, nw:]

    S = np.einsum("cim,cij,cjn->cmn", Xs, em["Mc"], Xs, optimize=True)
    Pu = np.einsum("clj,cjm->clm", Qs, Xu) - np.eye(m)[None]
    S += alpha[:, None, None] * np.einsum(
        "clm,cl,cln->cmn", Pu, em["Mbnd"], Pu, optimize=True
    )
    S = 0.5 * (S + np.transpose(S, (0, 2, 1)))

    out = {"S": S, "lift_u": Xu, "lift_sigma": Xs}
    if f is not None:
        F = _load_vector(ref, geom, f)
        rhs = np.concatenate([np.zeros((c, nw)), F], axis=1)
        Xf = np.linalg.solve(K, rhs[:, :, None])[:, :, 0]
        out["load_sigma"], out["load_u"] = Xf[:, :nw], Xf[:, nw:]
        out["b"] = np.einsum("cj,cjm->cm", F, Xu)
    return out


def _wg_local(ref, geom, A, alpha, flips, f=None):
    """Weak-gradient lifts and Schur blocks for one WG chunk."""
    em = _element_matrices(ref, geom, A, flips)
    nv, nw = ref["nv"], ref["nw"]
    c = len(geom["detJ"])
    m = em["Q"].shape[1]

    wq, detJ, Wvol = em["wq"], em["detJ"], em["Wvol"]
    Mw = np.einsum("q,cqia,cqja,c->cij", wq, Wvol, Wvol, detJ, optimize=True)
    Ma = np.einsum("q,cqia,cab,cqjb,c->cij", wq, Wvol, A, Wvol, detJ, optimize=True)

    try:
        Gi = np.linalg.solve(Mw, -em["B"])
        Gb = np.linalg.solve(Mw, em["Tn"])
    except np.linalg.LinAlgError as exc:
        raise IncompatibleMethodError(f"singular weak-gradient mass: {exc}") from exc

    Qs = em["Q"] / em["Mbnd"][:, :, None]
    Gp = np.einsum("clj,clk->cjk", Qs, em["Q"], optimize=True)

    Kv = np.einsum("cim,cij,cjn->cmn", Gi, Ma, Gi, optimize=True)
    Kv += alpha[:, None, None] * Gp
    Rv = -np.einsum("cim,cij,cjn->cmn", Gi, Ma, Gb, optimize=True)
    Rv += alpha[:, None, None] * np.transpose(em["Q"], (0, 2, 1))
    try:
        U = np.linalg.solve(Kv, Rv)
    except np.linalg.LinAlgError as exc:
        raise IncompatibleMethodError(f"singular weak-Galerkin local system: {exc}") from exc

    Grad = np.einsum("cij,cjm->cim", Gi, U) + Gb
    S = np.einsum("cim,cij,cjn->cmn", Grad, Ma, Grad, optimize=True)
    Pu = np.einsum("clj,cjm->clm", Qs, U) - np.eye(m)[None]
    S += alpha[:, None, None] * np.einsum(
        "clm,cl,cln->cmn", Pu, em["Mbnd"], Pu, optimize=True
    )
    S = 0.5 * (S + np.transpose(S, (0, 2, 1)))

    out = {"S": S, "lift_u": U, "lift_sigma": None, "Gi": Gi, "Gb": Gb}
    if f is not None:
        F = _load_vector(ref, geom, f)
        uf = np.linalg.solve(Kv, F[:, :, None])[:, :, 0]
        out["load_u"] = uf
        out["load_sigma"] = None
        out["b"] = np.einsum("cj,cjm->cm", F, U)
    return out


def _local_batch(spec, ref, coords, A, alpha, flips, f=None):
    geom = _geometry(coords)
    if spec.is_wg:
        return _wg_local(ref, geom, A, alpha, flips, f)
    return _hdg_local(ref, geom, A, alpha, flips, f)


# -- single-element entry points ----------------------------------------------


@dataclass(frozen=True)
class LocalOperator:
    """Element data: trace-to-interior lifts and the element Schur block.

    Trace DOFs are face-major with the element's own (local traversal)
    orientation; global assembly supplies the orientation flips."""

    schur: np.ndarray           # (m, m)
    lift_u: np.ndarray          # (nv, m)
    lift_sigma: np.ndarray      # (nw, m) or None for WG
    load_u: np.ndarray = None   # (nv,)
    load_sigma: np.ndarray = None
    rhs: np.ndarray = None      # (m,) element contribution to b_h


def _single(spec, coords, f=None):
    coords = np.asarray(coords, dtype=float)[None]
    ref = _ref_data(spec.family, spec.degree)
    geom = _geometry(coords)
    A = spec.diffusion.tensors(_CoordsOnly(coords[0]))
    alpha = spec.penalty.per_element(geom["h"])
    flips = np.zeros((1, 3), dtype=bool)
    return _local_batch(spec, ref, coords, A, alpha, flips, f)


class _CoordsOnly:
    """Minimal stand-in so Diffusion.tensors works on a bare element."""

    def __init__(self, coords):
        self.vertices = coords
        self.triangles = np.array([[0, 1, 2]])
        self.n_triangles = 1


def local_lift_hdg(coords, spec):
    """Solve the trace-driven local saddle problems of one HDG element."""
    if spec.is_wg or spec.family == "cr":
        raise IncompatibleMethodError("local_lift_hdg requires an HDG family")
    out = _single(spec, coords)
    return LocalOperator(out["S"][0], out["lift_u"][0], out["lift_sigma"][0])


def local_load_hdg(coords, spec, f):
    """Load-driven local problem: (sigma_f, u_f) lift and the element b_h."""
    if spec.is_wg or spec.family == "cr":
        raise IncompatibleMethodError("local_load_hdg requires an HDG family")
    out = _single(spec, coords, f)
    return (
        LocalOperator(
            out["S"][0],
            out["lift_u"][0],
            out["lift_sigma"][0],
            out["load_u"][0],
            out["load_sigma"][0],
            out["b"][0],
        ),
        out["b"][0],
    )


def weak_gradient_ops(coords, spec):
    """Matrices of the discrete weak gradients: interior and trace parts.

    Returns (Gi, Gb) mapping V(T) / trace coefficients to W(T) coefficients
    via the W(T) mass inverse."""
    if not spec.is_wg:
        raise IncompatibleMethodError("weak gradients are a WG construction")
    out = _single(spec, coords)
    return out["Gi"][0], out["Gb"][0]


def local_lift_wg(coords, spec):
    """Trace-driven local problem of one WG element."""
    if not spec.is_wg:
        raise IncompatibleMethodError("local_lift_wg requires a WG family")
    out = _single(spec, coords)
    return LocalOperator(out["S"][0], out["lift_u"][0], None)


# -- global assembly -----------------------------------------------------------


def _trace_dofs(mesh, space):
    k1 = space.degree + 1
    sk = space.face_index_of[mesh.tri_faces]
    base = np.where(sk >= 0, sk * k1, -1)
    gdof = np.where(
        (base >= 0)[..., None], base[..., None] + np.arange(k1)[None, None, :], -1
    )
    return gdof.reshape(mesh.n_triangles, 3 * k1)


def _flips(mesh):
    tri = mesh.triangles
    local = tri[:, [[1, 2], [2, 0], [0, 1]]]
    return local[..., 0] > local[..., 1]


def assemble_schur(mesh, space, spec, f=None):
    """Assemble the condensed skeleton system (D, b).

    D is the scatter of the element Schur blocks over interior-face DOFs;
    b carries (f, u_mu) per element, zero when f is None."""
    if spec.family == "cr":
        return assemble_cr(mesh, space, spec.diffusion, f)
    ref = _ref_data(spec.family, spec.degree)
    A_all = spec.diffusion.tensors(mesh)
    flips_all = _flips(mesh)
    gdof = _trace_dofs(mesh, space)
    M = space.dof_count
    m = gdof.shape[1]

    rows, cols, vals = [], [], []
    b = np.zeros(M)
    for start in range(0, mesh.n_triangles, CHUNK):
        sl = slice(start, min(start + CHUNK, mesh.n_triangles))
        coords = mesh.vertices[mesh.triangles[sl]]
        alpha = spec.penalty.per_element(mesh.h_tri[sl])
        out = _local_batch(spec, ref, coords, A_all[sl], alpha, flips_all[sl], f)
        gd = gdof[sl]
        r = np.repeat(gd[:, :, None], m, axis=2)
        c = np.repeat(gd[:, None, :], m, axis=1)
        mask = (r >= 0) & (c >= 0)
        rows.append(r[mask])
        cols.append(c[mask])
        vals.append(out["S"][mask])
        if f is not None:
            bm = gd >= 0
            np.add.at(b, gd[bm], out["b"][bm])

    coo = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(M, M),
    )
    D = SparseMatrix.from_scipy(coo)
    return D, b


def assemble_cr(mesh, space, diffusion, f=None):
    """Nonconforming P1 stiffness in face-mean (multiplier) coordinates.

    The element shape opposite vertex i is 1 - 2*lambda_i; its face means
    are exactly the k = 0 skeleton coefficients, so no change of basis is
    needed."""
    if space.degree != 0:
        raise IncompatibleMethodError("the nonconforming element requires k = 0")
    diffusion = diffusion if diffusion is not None else ConstantDiffusion()
    A = diffusion.tensors(mesh)
    coords = mesh.vertices[mesh.triangles]
    geom = _geometry(coords)
    ghat = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    glam = np.einsum("cdk,id->cik", geom["Jinv"], ghat)
    gphi = -2.0 * glam
    area = 0.5 * geom["detJ"]
    Ke = np.einsum("c,cia,cab,cjb->cij", area, gphi, A, gphi, optimize=True)

    gdof = _trace_dofs(mesh, space)
    r = np.repeat(gdof[:, :, None], 3, axis=2)
    c = np.repeat(gdof[:, None, :], 3, axis=1)
    mask = (r >= 0) & (c >= 0)
    D = SparseMatrix.from_scipy(
        sp.coo_matrix((Ke[mask], (r[mask], c[mask])), shape=(space.dof_count,) * 2)
    )

    b = np.zeros(space.dof_count)
    if f is not None:
        qv = quadrature("triangle", 4)
        lam = np.column_stack(
            [1.0 - qv.points.sum(axis=1), qv.points[:, 0], qv.points[:, 1]]
        )
        phi = 1.0 - 2.0 * lam
        pts = geom["v0"][:, None, :] + np.einsum("ckd,qd->cqk", geom["J"], qv.points)
        fv = f(pts[..., 0], pts[..., 1])
        be = np.einsum("q,cq,qi,c->ci", qv.weights, fv, phi, geom["detJ"])
        bm = gdof >= 0
        np.add.at(b, gdof[bm], be[bm])
    return D, b


@dataclass(frozen=True)
class InteriorSolution:
    """Recovered element fields: u in the V(T) basis and, for HDG families,
    the flux sigma in the W(T) basis (componentwise for [P_k]^2, Piola for
    the RT space)."""

    u: np.ndarray               # (T, nv)
    sigma: np.ndarray = None    # (T, nw) or None for WG/CR


def recover_interior(mesh, space, spec, lam, f=None):
    """Apply the stored element lifts: u = u_lambda + u_f (and sigma)."""
    lam = space.check_vector(lam)
    if spec.family == "cr":
        raise IncompatibleMethodError("interior recovery applies to HDG/WG families")
    ref = _ref_data(spec.family, spec.degree)
    A_all = spec.diffusion.tensors(mesh)
    flips_all = _flips(mesh)
    gdof = _trace_dofs(mesh, space)

    u = np.zeros((mesh.n_triangles, ref["nv"]))
    sigma = None if spec.is_wg else np.zeros((mesh.n_triangles, ref["nw"]))
    for start in range(0, mesh.n_triangles, CHUNK):
        sl = slice(start, min(start + CHUNK, mesh.n_triangles))
        coords = mesh.vertices[mesh.triangles[sl]]
        alpha = spec.penalty.per_element(mesh.h_tri[sl])
        out = _local_batch(spec, ref, coords, A_all[sl], alpha, flips_all[sl], f)
        gd = gdof[sl]
        lam_loc = np.where(gd >= 0, lam[np.maximum(gd, 0)], 0.0)
        u[sl] = np.einsum("cim,cm->ci", out["lift_u"], lam_loc)
        if f is not None:
            u[sl] += out["load_u"]
        if sigma is not None:
            sigma[sl] = np.einsum("cim,cm->ci", out["lift_sigma"], lam_loc)
            if f is not None:
                sigma[sl] += out["load_sigma"]
    return InteriorSolution(u, sigma)


def evaluate_u(mesh, spec, sol, ref_points):
    """Values of the recovered scalar field at reference points, per element."""
    basis = triangle_basis(spec.v_degree)
    vals = basis.values(np.asarray(ref_points, dtype=float))
    return np.einsum("qi,ci->cq", vals, sol.u)
