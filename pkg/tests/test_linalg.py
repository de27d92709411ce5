import numpy as np
import pytest

from skelpre.linalg import (
    DivergenceError,
    LinearOperator,
    NoConvergenceError,
    NotSpdError,
    SizeCapError,
    SparseMatrix,
    StructuralError,
    check_linearity,
    csr_from_triplets,
    dense_eig_extents,
    pcg,
    sparse_cholesky_solve,
    to_matrix_market,
)


# Hand integration of grad(phi_i).grad(phi_j) over the unit reference
# triangle with phi the P1 barycentric basis: gradients (-1,-1), (1,0), (0,1),
# area 1/2.
P1_REF_STIFFNESS = np.array(
    [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]
)


def test_from_triplets_sums_duplicates():
    a = csr_from_triplets(1, 1, [(0, 0, 1.0), (0, 0, 2.0)])
    assert a.to_dense() == pytest.approx([[3.0]])


def test_from_triplets_empty_zero_matrix():
    a = csr_from_triplets(2, 2, [])
    assert a.nnz == 0
    assert np.all(a.to_dense() == 0)


def test_from_triplets_reference_p1_stiffness():
    trips = []
    for i in range(3):
        for j in range(3):
            if P1_REF_STIFFNESS[i, j] != 0:
                trips.append((i, j, P1_REF_STIFFNESS[i, j]))
    a = csr_from_triplets(3, 3, trips)
    assert np.allclose(a.to_dense(), P1_REF_STIFFNESS)
    assert a.symmetric


def test_from_triplets_out_of_range():
    with pytest.raises(StructuralError):
        csr_from_triplets(2, 2, [(0, 5, 1.0)])


def test_spmv_matches_dense_random():
    rng = np.random.default_rng(7)
    for _ in range(5):
        dense = rng.standard_normal((50, 50))
        dense[rng.random((50, 50)) < 0.6] = 0.0
        a = SparseMatrix.from_scipy(dense)
        x = rng.standard_normal(50)
        ref = dense @ x
        assert np.linalg.norm(a.matvec(x) - ref) <= 1e-13 * max(np.linalg.norm(ref), 1)


def test_linear_operator_probe():
    rng = np.random.default_rng(3)
    mat = rng.standard_normal((20, 20))
    op = LinearOperator(20, lambda x: mat @ x)
    assert check_linearity(op, rng)
    bad = LinearOperator(20, lambda x: mat @ x + 1.0)
    assert not check_linearity(bad, rng)


def test_pcg_identity_converges_in_one_iteration():
    n = 5
    eye = SparseMatrix.identity(n)
    x, rep = pcg(eye, eye, np.zeros(n), x0=np.ones(n), reduction=1e-6)
    assert rep.iterations == 1
    assert rep.converged
    assert np.allclose(x, 0.0)


def test_pcg_nonzero_rhs_against_dense_solve():
    rng = np.random.default_rng(11)
    a = np.diag([1.0, 10.0, 100.0])
    b = rng.standard_normal(3)
    x_star = np.linalg.solve(a, b)
    x, rep = pcg(a, np.eye(3), b, reduction=1e-6)
    e0 = -x_star
    e = x - x_star
    lhs = np.sqrt(e @ a @ e)
    assert lhs <= 1e-6 * np.sqrt(e0 @ a @ e0)
    assert rep.converged


def test_pcg_history_positive_and_monotone():
    rng = np.random.default_rng(5)
    m = rng.standard_normal((40, 40))
    a = m @ m.T + 40 * np.eye(40)
    x, rep = pcg(a, np.eye(40), np.zeros(40), x0=rng.standard_normal(40),
                 reduction=1e-8)
    hist = np.array(rep.history)
    assert np.all(hist[:-1] > 0)
    assert np.all(np.diff(hist) <= 1e-12 * hist[0])
    assert hist[-1] <= 1e-8 * rep.initial_energy


def test_pcg_rejects_indefinite():
    a = np.diag([1.0, -1.0])
    with pytest.raises(DivergenceError):
        pcg(a, np.eye(2), np.zeros(2), x0=np.array([0.1, 1.0]))


def test_pcg_iteration_cap_carries_report():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((30, 30))
    a = m @ m.T + 1e-6 * np.eye(30)
    with pytest.raises(NoConvergenceError) as err:
        pcg(a, np.eye(30), np.zeros(30), x0=np.ones(30), reduction=1e-12,
            max_iter=3)
    assert err.value.report.iterations == 3


def test_dense_eig_diagonal():
    lo, hi = dense_eig_extents(np.diag([2.0, 5.0]))
    assert (lo, hi) == pytest.approx((2.0, 5.0))


def test_dense_eig_generalized():
    a = np.diag([2.0, 8.0])
    m = np.diag([1.0, 2.0])
    lo, hi = dense_eig_extents(a, m)
    assert (lo, hi) == pytest.approx((2.0, 4.0))


def test_dense_eig_size_cap():
    with pytest.raises(SizeCapError):
        dense_eig_extents(np.eye(5001))


def test_cholesky_identity():
    b = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(sparse_cholesky_solve(SparseMatrix.identity(4), b), b)


def test_cholesky_two_by_two_hand_elimination():
    a = SparseMatrix.from_scipy(np.array([[4.0, 1.0], [1.0, 3.0]]))
    x = sparse_cholesky_solve(a, np.array([1.0, 2.0]))
    assert np.allclose(x, [1.0 / 11.0, 7.0 / 11.0], rtol=1e-14)


def test_cholesky_rejects_indefinite():
    a = SparseMatrix.from_scipy(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotSpdError):
        sparse_cholesky_solve(a, np.ones(2))


def test_cholesky_rejects_nonsymmetric():
    a = SparseMatrix.from_scipy(np.array([[1.0, 5.0], [0.0, 1.0]]),
                                check_symmetry=True)
    with pytest.raises(NotSpdError):
        sparse_cholesky_solve(a, np.ones(2))


def test_matrix_market_roundtrip():
    import io

    import scipy.io

    a = csr_from_triplets(3, 3, [(0, 0, 2.0), (1, 0, -1.0), (0, 1, -1.0), (2, 2, 4.0)])
    text = to_matrix_market(a)
    assert text.startswith("%%MatrixMarket matrix coordinate real symmetric")
    back = scipy.io.mmread(io.BytesIO(text.encode()))
    assert np.allclose(back.toarray(), a.to_dense())
