"""Reference-element polynomial bases and quadrature.

P_k on the reference triangle {(0,0),(1,0),(0,1)} and reference edge [0,1],
and the Raviart-Thomas-type space [P_k]^2 + P_k*x, with evaluation tables
for values, gradients and divergences.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import eval_jacobi

TRIANGLE_DEGREE_CAP = 4
RT_DEGREE_CAP = 3
EDGE_DEGREE_CAP = 4
QUADRATURE_DEGREE_CAP = 12


class UnsupportedDegreeError(ValueError):
    pass


def _pk_exponents(k):
    return tuple((a, d - a) for d in range(k + 1) for a in range(d, -1, -1))


def _monomial_values(exps, pts):
    pts = np.asarray(pts, dtype=float)
    out = np.empty((pts.shape[0], len(exps)))
    for i, (a, b) in enumerate(exps):
        out[:, i] = pts[:, 0] ** a * pts[:, 1] ** b
    return out


def _monomial_grads(exps, pts):
    pts = np.asarray(pts, dtype=float)
    out = np.zeros((pts.shape[0], len(exps), 2))
    for i, (a, b) in enumerate(exps):
        if a > 0:
            out[:, i, 0] = a * pts[:, 0] ** (a - 1) * pts[:, 1] ** b
        if b > 0:
            out[:, i, 1] = b * pts[:, 0] ** a * pts[:, 1] ** (b - 1)
    return out


def _dubiner_tables(k, pts):
    """Values and gradients of the unnormalized collapsed-coordinate Jacobi
    (Dubiner) basis, ordered by total degree.  The degree-a Legendre factor
    is evaluated in homogenized form Q_a(x, s) = s^a P_a(2x/s - 1) with
    s = 1 - y, so nothing is singular at the collapsed vertex."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    s = 1.0 - y
    v = 2.0 * y - 1.0
    n = len(x)
    Q = [np.ones(n)]
    Qx = [np.zeros(n)]
    Qs = [np.zeros(n)]
    if k >= 1:
        Q.append(2.0 * x - s)
        Qx.append(np.full(n, 2.0))
        Qs.append(np.full(n, -1.0))
    t = 2.0 * x - s
    for m in range(1, k):
        Q.append(((2 * m + 1) * t * Q[m] - m * s * s * Q[m - 1]) / (m + 1))
        Qx.append(((2 * m + 1) * (2.0 * Q[m] + t * Qx[m]) - m * s * s * Qx[m - 1]) / (m + 1))
        Qs.append(
            ((2 * m + 1) * (-Q[m] + t * Qs[m]) - m * (2.0 * s * Q[m - 1] + s * s * Qs[m - 1]))
            / (m + 1)
        )
    vals, grads = [], []
    for d in range(k + 1):
        for a in range(d, -1, -1):
            b = d - a
            Jb = eval_jacobi(b, 2 * a + 1, 0, v)
            dJb = (
                0.5 * (b + 2 * a + 2) * eval_jacobi(b - 1, 2 * a + 2, 1, v)
                if b > 0
                else np.zeros(n)
            )
            vals.append(Q[a] * Jb)
            gx = Qx[a] * Jb
            gy = -Qs[a] * Jb + 2.0 * Q[a] * dJb
            grads.append(np.stack([gx, gy], axis=-1))
    return np.stack(vals, axis=1), np.stack(grads, axis=1)


@dataclass(frozen=True)
class TriangleBasis:
    """L^2-orthonormal hierarchical basis of P_k on the reference triangle."""

    degree: int
    dim: int
    norms: np.ndarray  # scaling making the Dubiner members unit norm

    def values(self, pts):
        vals, _ = _dubiner_tables(self.degree, pts)
        return vals / self.norms

    def grads(self, pts):
        _, grads = _dubiner_tables(self.degree, pts)
        return grads / self.norms[None, :, None]


@lru_cache(maxsize=None)
def triangle_basis(k):
    if not 0 <= k <= TRIANGLE_DEGREE_CAP:
        raise UnsupportedDegreeError(f"triangle degree {k} outside 0..{TRIANGLE_DEGREE_CAP}")
    dim = (k + 1) * (k + 2) // 2
    rule = quadrature("triangle", 2 * k)
    vals, _ = _dubiner_tables(k, rule.points)
    norms = np.sqrt(np.einsum("q,qi,qi->i", rule.weights, vals, vals))
    return TriangleBasis(k, dim, norms)


@dataclass(frozen=True)
class RtBasis:
    """Basis of [P_k]^2 + P_k*x on the reference triangle.

    The first 2*dim(P_k) members are the orthonormal scalar basis times the
    coordinate unit vectors; the remaining k+1 are x*q for the homogeneous
    degree-k monomials q, whose normal traces close the RT structure.
    """

    degree: int
    dim: int
    scalar: TriangleBasis
    hom_exponents: tuple

    def values(self, pts):
        pts = np.asarray(pts, dtype=float)
        sv = self.scalar.values(pts)
        npk = self.scalar.dim
        out = np.zeros((pts.shape[0], self.dim, 2))
        out[:, :npk, 0] = sv
        out[:, npk : 2 * npk, 1] = sv
        for i, (a, b) in enumerate(self.hom_exponents):
            q = pts[:, 0] ** a * pts[:, 1] ** b
            out[:, 2 * npk + i, 0] = pts[:, 0] * q
            out[:, 2 * npk + i, 1] = pts[:, 1] * q
        return out

    def divs(self, pts):
        pts = np.asarray(pts, dtype=float)
        sg = self.scalar.grads(pts)
        npk = self.scalar.dim
        out = np.zeros((pts.shape[0], self.dim))
        out[:, :npk] = sg[:, :, 0]
        out[:, npk : 2 * npk] = sg[:, :, 1]
        for i, (a, b) in enumerate(self.hom_exponents):
            # div(x q) = (d + k) q for q homogeneous of degree k
            out[:, 2 * npk + i] = (a + b + 2) * pts[:, 0] ** a * pts[:, 1] ** b
        return out


@lru_cache(maxsize=None)
def rt_basis(k):
    if not 0 <= k <= RT_DEGREE_CAP:
        raise UnsupportedDegreeError(f"RT degree {k} outside 0..{RT_DEGREE_CAP}")
    scalar = triangle_basis(k)
    hom = tuple((a, k - a) for a in range(k, -1, -1))
    dim = 2 * scalar.dim + len(hom)
    assert dim == (k + 1) * (k + 3)
    return RtBasis(k, dim, scalar, hom)


@dataclass(frozen=True)
class EdgeBasis:
    """Shifted-Legendre basis on [0,1], orthonormal in the unit parameter."""

    degree: int
    dim: int

    def values(self, t):
        t = np.asarray(t, dtype=float)
        van = npleg.legvander(2.0 * t - 1.0, self.degree)
        return van * np.sqrt(2.0 * np.arange(self.degree + 1) + 1.0)


@lru_cache(maxsize=None)
def edge_basis(k):
    if not 0 <= k <= EDGE_DEGREE_CAP:
        raise UnsupportedDegreeError(f"edge degree {k} outside 0..{EDGE_DEGREE_CAP}")
    return EdgeBasis(k, k + 1)


@dataclass(frozen=True)
class QuadratureRule:
    """Positive-weight rule; triangle points are (x, y) on the reference
    triangle, edge points live in [0,1].  Weights sum to the reference
    measure (1/2 for the triangle, 1 for the edge)."""

    domain: str
    degree: int
    points: np.ndarray
    weights: np.ndarray


_BARY_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


def _conical_rule(degree):
    mu = degree // 2 + 1
    mv = (degree + 3) // 2
    xu, wu = np.polynomial.legendre.leggauss(mu)
    xv, wv = np.polynomial.legendre.leggauss(mv)
    u, wu = (xu + 1.0) / 2.0, wu / 2.0
    v, wv = (xv + 1.0) / 2.0, wv / 2.0
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv * (1.0 - v))
    pts = np.column_stack([(uu * (1.0 - vv)).ravel(), vv.ravel()])
    return pts, ww.ravel()


def _symmetrize_triangle(pts, wts):
    lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    all_pts, all_wts = [], []
    for perm in _BARY_PERMS:
        all_pts.append(lam[:, [perm[1], perm[2]]])
        all_wts.append(wts / 6.0)
    return np.vstack(all_pts), np.concatenate(all_wts)


@lru_cache(maxsize=None)
def quadrature(domain, degree):
    """Quadrature rule exact to the requested polynomial degree."""
    if degree > QUADRATURE_DEGREE_CAP:
        raise UnsupportedDegreeError(
            f"quadrature degree {degree} exceeds cap {QUADRATURE_DEGREE_CAP}"
        )
    if domain == "edge":
        m = degree // 2 + 1
        x, w = np.polynomial.legendre.leggauss(m)
        return QuadratureRule("edge", degree, (x + 1.0) / 2.0, w / 2.0)
    if domain != "triangle":
        raise ValueError(f"unknown quadrature domain {domain!r}")
    if degree <= 1:
        pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        wts = np.array([0.5])
    elif degree == 2:
        pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        wts = np.full(3, 1.0 / 6.0)
    else:
        pts, wts = _symmetrize_triangle(*_conical_rule(degree))
    return QuadratureRule("triangle", degree, pts, wts)
