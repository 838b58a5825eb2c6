import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from eigenrate import gevp
from eigenrate.femcore import FESpace, SymmetricPair, assemble, get_family
from eigenrate.meshkit import interval_mesh, rect_mesh, unit_square_triangles


def _p1_pair(n):
    return assemble(FESpace(interval_mesh(0.0, 1.0, n), get_family("P1", 1)))


def test_cholesky_identity_and_hand_factor():
    np.testing.assert_array_equal(gevp.cholesky(np.eye(3)), np.eye(3))
    L = gevp.cholesky([[4.0, 2.0], [2.0, 3.0]])
    np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, math.sqrt(2)]], atol=1e-15)


def test_cholesky_p1_mass_reconstruction():
    B = _p1_pair(4).B.toarray()
    assert B.shape == (3, 3)
    L = gevp.cholesky(B)
    assert np.linalg.norm(L @ L.T - B) < 1e-15


def test_cholesky_rejects_indefinite():
    with pytest.raises(gevp.NotSPDError):
        gevp.cholesky([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(np.linalg.LinAlgError):
        gevp.cholesky(np.zeros((2, 2)))


def test_two_by_two_examples():
    pairs = gevp.solve_gevp(SymmetricPair.from_dense(np.diag([2.0, 6.0]), np.diag([1.0, 2.0])))
    np.testing.assert_allclose([p.lam for p in pairs], [2.0, 3.0], rtol=1e-15)
    pairs = gevp.solve_gevp(SymmetricPair.from_dense([[2.0, -1.0], [-1.0, 2.0]], np.eye(2)))
    np.testing.assert_allclose([p.lam for p in pairs], [1.0, 3.0], rtol=1e-14)


def test_p1_dispersion_relation():
    h = 0.25
    lam = gevp.solve_gevp(_p1_pair(4), k=1)[0].lam
    want = 6 / h**2 * (1 - math.cos(math.pi * h)) / (2 + math.cos(math.pi * h))
    assert abs(lam - want) < 1e-12 * want
    assert abs(lam - 10.3866) < 1e-4


@pytest.mark.parametrize("n", [5, 17, 40])
def test_matches_scipy_eigh_oracle(n):
    pair = _p1_pair(n)
    want = sla.eigh(pair.A.toarray(), pair.B.toarray(), eigvals_only=True)
    got = [p.lam for p in gevp.solve_gevp(pair)]
    np.testing.assert_allclose(got, want, rtol=1e-11)


def test_trace_check():
    pair = assemble(FESpace(unit_square_triangles(5), get_family("P2", 2)))
    assert pair.n <= 200
    lams = gevp.eigenvalues(pair)
    L = gevp.cholesky(pair.B.toarray())
    C = sla.solve_triangular(L, sla.solve_triangular(L, pair.A.toarray(), lower=True).T, lower=True)
    assert abs(lams.sum() - np.trace(C)) <= 1e-8 * abs(np.trace(C))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_random_spd_pairs_certified(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    A = M @ M.T + n * np.eye(n)
    N = rng.standard_normal((n, n))
    B = N @ N.T + n * np.eye(n)
    pairs, cert = gevp.solve_gevp(SymmetricPair.from_dense(A, B), return_certificate=True)
    lams = np.array([p.lam for p in pairs])
    assert np.all(np.diff(lams) >= 0)
    X = np.column_stack([p.vector for p in pairs])
    assert np.max(np.abs(X.T @ B @ X - np.eye(n))) <= 1e-10
    assert cert.max_residual <= 1e-10
    np.testing.assert_allclose(lams, sla.eigh(A, B, eigvals_only=True), rtol=1e-9)


def test_ql_vector_limit_uses_inverse_iteration():
    n = gevp.QL_VECTOR_LIMIT + 40
    pair = _p1_pair(n + 1)
    pairs, cert = gevp.solve_gevp(pair, k=6, method="dense", return_certificate=True)
    want = sla.eigh(pair.A.toarray(), pair.B.toarray(), eigvals_only=True, subset_by_index=[0, 5])
    np.testing.assert_allclose([p.lam for p in pairs], want, rtol=1e-10)
    assert cert.orthogonality <= 1e-10


def test_lanczos_agrees_with_dense():
    pair = assemble(FESpace(rect_mesh(12, 12), get_family("Q1")))
    dense = gevp.solve_gevp(pair, k=8, method="dense")
    lanc = gevp.solve_gevp(pair, k=8, method="lanczos")
    np.testing.assert_allclose([p.lam for p in lanc], [p.lam for p in dense], rtol=1e-10)


def test_tie_ordering_is_deterministic():
    # lambda = 5 pi^2 is double on the square; the returned order must not depend on the run
    pair = assemble(FESpace(rect_mesh(8, 8), get_family("Q1")))
    a = gevp.solve_gevp(pair, k=3)
    b = gevp.solve_gevp(pair, k=3)
    for p, q in zip(a, b):
        assert p.lam == q.lam
        np.testing.assert_array_equal(p.vector, q.vector)
    # a diagonal pair with an exact tie orders by the index of the dominant coefficient
    pairs = gevp.solve_gevp(SymmetricPair.from_dense(np.diag([3.0, 1.0, 1.0]), np.eye(3)))
    assert [int(np.argmax(np.abs(p.vector))) for p in pairs] == [1, 2, 0]


def test_errors():
    pair = _p1_pair(4)
    with pytest.raises(ValueError):
        gevp.solve_gevp(pair, k=4)
    with pytest.raises(ValueError):
        gevp.solve_gevp(pair, k=0)
    with pytest.raises(ValueError):
        gevp.solve_gevp(pair, method="power")
    with pytest.raises(ValueError):
        gevp.solve_gevp(pair, method="dense", dense_limit=2)
    bad = SymmetricPair.from_dense(np.eye(2), [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(gevp.NotSPDError):
        gevp.solve_gevp(bad)


def test_ql_iteration_cap():
    d = np.array([1.0, 2.0, 3.0, 4.0])
    e = np.array([1.0, 1.0, 1.0])
    with pytest.raises(gevp.ConvergenceError):
        gevp.tridiagonal_ql(d, e, max_iter=0)
    lams, _ = gevp.tridiagonal_ql(d, e)
    T = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    np.testing.assert_allclose(np.sort(lams), np.linalg.eigvalsh(T), atol=1e-13)


@pytest.mark.parametrize("name,dim", [("P1", 1), ("P2", 1), ("Hermite3", 1)])
def test_conforming_monotone_and_above_exact(name, dim):
    from eigenrate import spectra

    m = 2 if name == "Hermite3" else 1
    exact = spectra.beam_clamped(3) if m == 2 else spectra.laplace_interval(3)
    prev = None
    for n in (4, 8, 16):
        lams = [p.lam for p in gevp.solve_gevp(assemble(FESpace(interval_mesh(0, 1, n), get_family(name, dim), m), m), k=3)]
        for lh, ex in zip(lams, exact):
            assert lh >= ex.lam * (1 - 1e-12)
        if prev is not None:
            assert all(a <= b * (1 + 1e-12) for a, b in zip(lams, prev))
        prev = lams
