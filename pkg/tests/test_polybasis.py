import numpy as np
import pytest

from skelpre.polybasis import (
    UnsupportedDegreeError,
    edge_basis,
    quadrature,
    rt_basis,
    triangle_basis,
)


def _tri_integrate(rule, f):
    return float(np.sum(rule.weights * f(rule.points[:, 0], rule.points[:, 1])))


def _exact_tri_moment(a, b):
    import math

    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", range(13))
def test_triangle_quadrature_exact_on_monomials(degree):
    rule = quadrature("triangle", degree)
    assert np.all(rule.weights > 0)
    assert np.sum(rule.weights) == pytest.approx(0.5, rel=1e-14)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = _tri_integrate(rule, lambda x, y: x**a * y**b)
            assert got == pytest.approx(_exact_tri_moment(a, b), rel=1e-13)


@pytest.mark.parametrize("degree", range(13))
def test_edge_quadrature_exact_on_monomials(degree):
    rule = quadrature("edge", degree)
    assert np.all(rule.weights > 0)
    for p in range(degree + 1):
        got = float(np.sum(rule.weights * rule.points**p))
        assert got == pytest.approx(1.0 / (p + 1), rel=1e-13)


def test_triangle_degree2_is_midpoint_rule():
    rule = quadrature("triangle", 2)
    assert np.allclose(sorted(map(tuple, rule.points)),
                       [(0.0, 0.5), (0.5, 0.0), (0.5, 0.5)])
    assert np.allclose(rule.weights, 1.0 / 6.0)


def test_edge_degree3_is_two_point_gauss():
    rule = quadrature("edge", 3)
    assert len(rule.points) == 2
    assert np.allclose(rule.weights, 0.5)
    assert np.allclose(sorted(rule.points),
                       [(1 - 1 / np.sqrt(3)) / 2, (1 + 1 / np.sqrt(3)) / 2])


def test_triangle_rules_symmetric():
    # invariance of the point/weight set under barycentric permutation
    for degree in (3, 5, 8, 11):
        rule = quadrature("triangle", degree)
        lam = np.column_stack(
            [1 - rule.points.sum(axis=1), rule.points[:, 0], rule.points[:, 1]]
        )
        ref = sorted(zip(map(tuple, np.sort(lam, axis=1).round(13)), rule.weights.round(13)))
        swapped = np.column_stack([lam[:, 1], lam[:, 2], lam[:, 0]])
        out = sorted(zip(map(tuple, np.sort(swapped, axis=1).round(13)), rule.weights.round(13)))
        assert ref == out


def test_quadrature_degree_cap():
    with pytest.raises(UnsupportedDegreeError):
        quadrature("triangle", 13)


def test_moment_x2y():
    rule = quadrature("triangle", 3)
    assert _tri_integrate(rule, lambda x, y: x**2 * y) == pytest.approx(1.0 / 60.0, rel=1e-13)


@pytest.mark.parametrize("k", range(5))
def test_triangle_basis_orthonormal(k):
    basis = triangle_basis(k)
    assert basis.dim == (k + 1) * (k + 2) // 2
    rule = quadrature("triangle", 2 * k + 2)
    vals = basis.values(rule.points)
    gram = np.einsum("q,qi,qj->ij", rule.weights, vals, vals)
    assert np.abs(gram - np.eye(basis.dim)).max() <= 1e-13


def test_triangle_k0_unit_norm():
    basis = triangle_basis(0)
    rule = quadrature("triangle", 2)
    vals = basis.values(rule.points)
    assert float(np.sum(rule.weights * vals[:, 0] ** 2)) == pytest.approx(1.0)


def test_triangle_gradients_match_finite_differences():
    basis = triangle_basis(2)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(0.1, 0.4, 10), rng.uniform(0.1, 0.4, 10)])
    grads = basis.grads(pts)
    eps = 1e-6
    for d, e in ((0, np.array([eps, 0.0])), (1, np.array([0.0, eps]))):
        fd = (basis.values(pts + e) - basis.values(pts - e)) / (2 * eps)
        assert np.abs(fd - grads[:, :, d]).max() <= 1e-6


@pytest.mark.parametrize("k", range(4))
def test_rt_dimension(k):
    assert rt_basis(k).dim == (k + 1) * (k + 3)


@pytest.mark.parametrize("k", range(4))
def test_rt_divergence_lies_in_pk(k):
    # project div w onto P_k and check zero residual under quadrature
    basis = rt_basis(k)
    pk = triangle_basis(k)
    rule = quadrature("triangle", 2 * k + 2)
    divs = basis.divs(rule.points)
    pv = pk.values(rule.points)
    coeff = np.einsum("q,qi,qm->mi", rule.weights, divs, pv)
    recon = pv @ coeff
    assert np.abs(recon - divs).max() <= 1e-12


@pytest.mark.parametrize("k", range(4))
def test_rt_normal_trace_degree(k):
    # trace on edge 0 (hypotenuse) must stay in P_k: its Legendre expansion
    # on the edge has no mode beyond k
    basis = rt_basis(k)
    eb = edge_basis(min(k + 1, 4)) if k + 1 <= 4 else None
    rule = quadrature("edge", 2 * k + 4)
    t = rule.points
    pts = np.column_stack([1.0 - t, t])
    n = np.array([1.0, 1.0]) / np.sqrt(2.0)
    traces = basis.values(pts) @ n
    modes = edge_basis(min(k + 1, 4)).values(t)
    coeffs = np.einsum("q,qi,qm->im", rule.weights, traces, modes)
    if k + 1 <= 4:
        assert np.abs(coeffs[:, k + 1 :]).max() <= 1e-12


def test_rt_piola_preserves_normal_trace_degree():
    # map RT1 to a skewed physical triangle by the contravariant Piola
    # transform and expand the physical normal trace on each edge
    k = 1
    basis = rt_basis(k)
    verts = np.array([[0.2, -0.1], [1.3, 0.4], [0.1, 1.1]])
    J = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    detJ = np.linalg.det(J)
    rule = quadrature("edge", 2 * k + 4)
    t = rule.points
    ref_edges = [
        np.column_stack([1.0 - t, t]),
        np.column_stack([np.zeros_like(t), 1.0 - t]),
        np.column_stack([t, np.zeros_like(t)]),
    ]
    phys_pairs = [(1, 2), (2, 0), (0, 1)]
    modes = edge_basis(4).values(t)
    for ref_pts, (i, j) in zip(ref_edges, phys_pairs):
        tau = verts[j] - verts[i]
        L = np.linalg.norm(tau)
        nvec = np.array([tau[1], -tau[0]]) / L
        vals = np.einsum("kd,qid->qik", J, basis.values(ref_pts)) / detJ
        traces = vals @ nvec
        coeffs = np.einsum("q,qi,qm->im", rule.weights, traces, modes)
        assert np.abs(coeffs[:, k + 1 :]).max() <= 1e-12


@pytest.mark.parametrize("k", range(5))
def test_edge_basis_orthonormal(k):
    basis = edge_basis(k)
    assert basis.dim == k + 1
    rule = quadrature("edge", 2 * k)
    vals = basis.values(rule.points)
    gram = np.einsum("q,qm,qn->mn", rule.weights, vals, vals)
    assert np.abs(gram - np.eye(k + 1)).max() <= 1e-13


def test_edge_k0_is_unit_constant():
    vals = edge_basis(0).values(np.array([0.1, 0.9]))
    assert np.allclose(vals, 1.0)


def test_edge_first_legendre_moment():
    # int_0^1 sqrt(3)(2t-1) * t dt = sqrt(3)/6
    rule = quadrature("edge", 3)
    vals = edge_basis(1).values(rule.points)
    got = float(np.sum(rule.weights * vals[:, 1] * rule.points))
    assert got == pytest.approx(np.sqrt(3.0) / 6.0, rel=1e-13)


def test_degree_caps():
    with pytest.raises(UnsupportedDegreeError):
        triangle_basis(5)
    with pytest.raises(UnsupportedDegreeError):
        rt_basis(4)
    with pytest.raises(UnsupportedDegreeError):
        edge_basis(5)
