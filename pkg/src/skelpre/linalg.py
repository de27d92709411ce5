"""Sparse/dense linear-algebra core.

CSR storage, factorizations and dense eigensolves are delegated to
scipy/LAPACK.  The preconditioned conjugate gradient loop and its
Ritz-value condition estimate are implemented here because the iteration
counts and stopping rule they produce are exactly what the experiments
report.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SYMMETRY_TOL = 1e-12
DENSE_EIG_CAP = 5000
DEFAULT_MAX_ITER = 10_000


class StructuralError(ValueError):
    """Malformed construction input (index out of range, shape mismatch)."""


class NotSpdError(ValueError):
    """A matrix required to be SPD is not."""


class SizeCapError(ValueError):
    """Problem too large for a dense oracle path."""


class DivergenceError(RuntimeError):
    """Non-finite values or loss of positive definiteness during PCG."""


class NoConvergenceError(RuntimeError):
    """Iteration cap exceeded; carries the partial report."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def _certify_symmetric(csr, tol=SYMMETRY_TOL):
    if csr.shape[0] != csr.shape[1]:
        return False
    diff = abs(csr - csr.T)
    dmax = diff.max() if diff.nnz else 0.0
    amax = abs(csr).max() if csr.nnz else 0.0
    return dmax <= tol * amax if amax > 0 else dmax == 0.0


@dataclass(frozen=True)
class SparseMatrix:
    """CSR matrix in canonical layout (sorted column indices, no duplicates).

    ``symmetric`` certifies max|A - A^T| <= 1e-12 * max|A| entrywise; it is
    only set by constructors that actually verified it.
    """

    csr: sp.csr_matrix
    symmetric: bool = False

    @classmethod
    def from_scipy(cls, mat, check_symmetry=True):
        csr = sp.csr_matrix(mat)
        csr.sum_duplicates()
        csr.sort_indices()
        sym = _certify_symmetric(csr) if check_symmetry else False
        return cls(csr, sym)

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, format="csr"), True)

    @classmethod
    def diagonal(cls, d):
        return cls(sp.diags(np.asarray(d, dtype=float)).tocsr(), True)

    @property
    def shape(self):
        return self.csr.shape

    @property
    def nrows(self):
        return self.csr.shape[0]

    @property
    def ncols(self):
        return self.csr.shape[1]

    @property
    def nnz(self):
        return self.csr.nnz

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.ncols,):
            raise StructuralError(
                f"vector of length {x.shape} incompatible with {self.shape}"
            )
        return self.csr @ x

    def to_dense(self):
        return self.csr.toarray()

    def transpose(self):
        return SparseMatrix(self.csr.T.tocsr(), self.symmetric)

    def diag(self):
        return self.csr.diagonal()

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix.from_scipy(self.csr @ other.csr, check_symmetry=False)
        return self.csr @ other


def csr_from_triplets(nrows, ncols, triplets):
    """Build a SparseMatrix from (row, col, value) entries, summing duplicates."""
    trip = list(triplets)
    if trip:
        rows = np.asarray([t[0] for t in trip], dtype=np.int64)
        cols = np.asarray([t[1] for t in trip], dtype=np.int64)
        vals = np.asarray([t[2] for t in trip], dtype=float)
    else:
        rows = np.zeros(0, dtype=np.int64)
        cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=float)
    if rows.size:
        if rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols:
            raise StructuralError("triplet index out of range")
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
    return SparseMatrix.from_scipy(coo)


def csr_from_arrays(nrows, ncols, rows, cols, vals):
    """Vectorized triplet constructor used by the assembly loops."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if rows.size and (
        rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols
    ):
        raise StructuralError("triplet index out of range")
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
    return SparseMatrix.from_scipy(coo)


@dataclass(frozen=True)
class LinearOperator:
    """Matrix-free SPD operator: a dimension plus an apply contract."""

    dimension: int
    apply: Callable[[np.ndarray], np.ndarray]


OperatorLike = Union[LinearOperator, SparseMatrix, sp.spmatrix, np.ndarray]


def as_operator(obj) -> LinearOperator:
    if isinstance(obj, LinearOperator):
        return obj
    if isinstance(obj, SparseMatrix):
        return LinearOperator(obj.nrows, obj.matvec)
    if sp.issparse(obj):
        csr = obj.tocsr()
        return LinearOperator(csr.shape[0], lambda x: csr @ x)
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise StructuralError("cannot interpret object as a square operator")
    return LinearOperator(arr.shape[0], lambda x: arr @ x)


def check_linearity(op, rng=None, trials=5, tol=1e-12):
    """Probe apply(ax + by) = a apply(x) + b apply(y) on random vectors."""
    op = as_operator(op)
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.dimension)
        y = rng.standard_normal(op.dimension)
        a, b = rng.standard_normal(2)
        lhs = op.apply(a * x + b * y)
        rhs = a * op.apply(x) + b * op.apply(y)
        scale = max(np.linalg.norm(rhs), 1.0)
        worst = max(worst, np.linalg.norm(lhs - rhs) / scale)
    return worst <= tol


@dataclass
class PcgReport:
    """Outcome of a PCG run.

    ``history`` holds the monitored norm per iteration: the D-energy of the
    iterate when b = 0 (the reported experiments), the preconditioned
    residual norm otherwise.
    """

    iterations: int
    initial_energy: float
    history: list = field(default_factory=list)
    ritz_cond: float = 1.0
    converged: bool = False


def _ritz_condition(alphas, betas):
    m = len(alphas)
    if m == 0:
        return 1.0
    diag = np.empty(m)
    off = np.empty(max(m - 1, 0))
    for i in range(m):
        diag[i] = 1.0 / alphas[i]
        if i > 0:
            diag[i] += betas[i - 1] / alphas[i - 1]
        if i < m - 1:
            off[i] = np.sqrt(betas[i]) / alphas[i]
    if m == 1:
        return 1.0
    vals = scipy.linalg.eigvalsh_tridiagonal(diag, off)
    lo, hi = vals[0], vals[-1]
    if lo <= 0:
        raise DivergenceError("nonpositive Ritz value in PCG tridiagonal")
    return hi / lo


def pcg(A, B, b, x0=None, reduction=1e-6, max_iter=DEFAULT_MAX_ITER):
    """Preconditioned conjugate gradients for SPD A with SPD preconditioner B.

    Stopping rule: with b = 0 the iterate's A-energy sqrt(x^T A x) must drop
    below ``reduction`` times its initial value; with b != 0 the
    B-preconditioned residual norm sqrt(r^T B r) is reduced by the same
    factor.  Returns (x, PcgReport) with a Ritz-value condition estimate of
    the preconditioned operator taken from the CG Lanczos tridiagonal.
    """
    if not 0.0 < reduction < 1.0:
        raise StructuralError("reduction must lie in (0, 1)")
    A = as_operator(A)
    B = as_operator(B)
    b = np.asarray(b, dtype=float)
    n = A.dimension
    if b.shape != (n,):
        raise StructuralError("right-hand side length mismatch")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    r = b - A.apply(x)
    zero_rhs = not np.any(b)
    z = B.apply(r)
    rz = float(r @ z)
    if not np.isfinite(rz) or rz < 0:
        raise DivergenceError("preconditioner produced an indefinite pairing")
    if zero_rhs:
        initial = float(np.sqrt(max(-(x @ r), 0.0)))  # r = -Ax, so -x.r = x^T A x
    else:
        initial = float(np.sqrt(rz))
    report = PcgReport(iterations=0, initial_energy=initial)
    if initial == 0.0:
        report.converged = True
        return x, report
    target = reduction * initial

    d = z.copy()
    alphas, betas = [], []
    for m in range(1, max_iter + 1):
        Ad = A.apply(d)
        dAd = float(d @ Ad)
        if not np.isfinite(dAd):
            raise DivergenceError("non-finite curvature in PCG")
        if dAd <= 0:
            raise DivergenceError("operator not positive definite on PCG direction")
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        z = B.apply(r)
        rz_new = float(r @ z)
        if not np.isfinite(rz_new) or rz_new < 0:
            raise DivergenceError("preconditioner pairing lost positivity")
        alphas.append(alpha)
        if zero_rhs:
            val = float(np.sqrt(max(-(x @ r), 0.0)))
        else:
            val = float(np.sqrt(rz_new))
        report.history.append(val)
        report.iterations = m
        if val <= target:
            report.converged = True
            break
        beta = rz_new / rz
        betas.append(beta)
        d = z + beta * d
        rz = rz_new

    report.ritz_cond = _ritz_condition(alphas, betas[: len(alphas) - 1])
    if not report.converged:
        raise NoConvergenceError(
            f"PCG did not reach reduction {reduction:g} in {max_iter} iterations",
            report,
        )
    return x, report


def _as_dense_sym(A):
    if isinstance(A, SparseMatrix):
        arr = A.to_dense()
    elif sp.issparse(A):
        arr = A.toarray()
    else:
        arr = np.asarray(A, dtype=float)
    return 0.5 * (arr + arr.T)


def dense_eig_extents(A, M=None):
    """Extreme eigenvalues of A (or of Ax = lambda Mx) by a dense eigensolve.

    Refuses problems above 5000 rows; use the PCG Ritz estimate there.
    """
    Ad = _as_dense_sym(A)
    n = Ad.shape[0]
    if n > DENSE_EIG_CAP:
        raise SizeCapError(
            f"dimension {n} exceeds the dense oracle cap {DENSE_EIG_CAP}; "
            "use the PCG Ritz estimate instead"
        )
    if M is None:
        vals = scipy.linalg.eigvalsh(Ad)
    else:
        Md = _as_dense_sym(M)
        vals = scipy.linalg.eigh(Ad, Md, eigvals_only=True)
    return float(vals[0]), float(vals[-1])


def spd_factor(A):
    """Factor an SPD sparse matrix once; returns a solve callable.

    Uses SuperLU in symmetric mode without partial pivoting so the pivots
    are the LDL^T diagonal: a non-positive pivot certifies the matrix is
    not SPD.
    """
    csr = A.csr if isinstance(A, SparseMatrix) else sp.csr_matrix(A)
    if not _certify_symmetric(csr, tol=1e-10):
        raise NotSpdError("matrix is not symmetric")
    try:
        lu = spla.splu(
            csr.tocsc(),
            diag_pivot_thresh=0.0,
            permc_spec="MMD_AT_PLUS_A",
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise NotSpdError(f"factorization failed: {exc}") from exc
    if np.any(lu.U.diagonal() <= 0):
        raise NotSpdError("non-positive pivot encountered")
    return lu.solve


def sparse_cholesky_solve(A, b):
    """Solve Ax = b for SPD A by sparse factorization."""
    b = np.asarray(b, dtype=float)
    return spd_factor(A)(b)


def to_matrix_market(A):
    """Dump a SparseMatrix in MatrixMarket coordinate format (text)."""
    buf = io.BytesIO()
    symmetry = "symmetric" if A.symmetric else "general"
    scipy.io.mmwrite(buf, A.csr, symmetry=symmetry)
    return buf.getvalue().decode()
