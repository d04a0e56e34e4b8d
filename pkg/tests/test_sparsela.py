import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from weingarten.errors import BreakdownError, PreconditionerError, ShapeError
from weingarten.sparsela import CsrMatrix, default_max_iter, solve_bicgstab, spmv


def thomas(lower, diag, upper, rhs):
    """Tridiagonal direct solve; lower[0] and upper[-1] are unused."""
    n = len(diag)
    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / m if i < n - 1 else 0.0
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m
    x = np.zeros(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def test_identity_product():
    x = np.arange(6.0)
    assert np.array_equal(spmv(CsrMatrix.identity(6), x), x)


def test_diagonal_product():
    A = CsrMatrix.from_scipy(sp.diags(np.full(4, 2.0)))
    assert np.array_equal(A @ np.ones(4), np.full(4, 2.0))


def test_random_product_against_dense(rng):
    M = sp.random(50, 50, density=0.1, random_state=7, format="coo")
    A = CsrMatrix.from_coo(M.row, M.col, M.data, (50, 50))
    x = rng.normal(size=50)
    assert np.allclose(A @ x, M.toarray() @ x, rtol=0, atol=1e-13)


def test_storage_invariants():
    rows = [0, 0, 1, 2, 2, 2]
    cols = [2, 0, 1, 1, 1, 0]
    vals = [1.0, 2.0, 0.0, 3.0, 4.0, 5.0]
    A = CsrMatrix.from_coo(rows, cols, vals, (3, 3))
    assert A.nnz == 4  # duplicate summed, explicit zero dropped
    for r in range(3):
        seg = A.indices[A.indptr[r] : A.indptr[r + 1]]
        assert np.all(np.diff(seg) > 0)
    assert np.array_equal(A.to_dense(), [[2, 0, 1], [0, 0, 0], [5, 7, 0]])


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        spmv(CsrMatrix.identity(3), np.ones(4))
    with pytest.raises(ShapeError):
        solve_bicgstab(CsrMatrix.identity(3), np.ones(2))


def test_identity_solve():
    b = np.array([1.0, -2.0, 3.0])
    x, it, res = solve_bicgstab(CsrMatrix.identity(3), b)
    assert np.array_equal(x, b) and it <= 1 and res == 0.0


def test_zero_rhs():
    x, it, res = solve_bicgstab(CsrMatrix.identity(3), np.zeros(3))
    assert np.array_equal(x, np.zeros(3)) and it == 0


def test_laplacian_against_thomas():
    n = 100
    lo, di, up = -np.ones(n), 2 * np.ones(n), -np.ones(n)
    A = CsrMatrix.from_scipy(sp.diags([lo[1:], di, up[:-1]], [-1, 0, 1]))
    b = np.ones(n)
    x, it, res = solve_bicgstab(A, b, tol=1e-13, max_iter=1000)
    assert np.max(np.abs(x - thomas(lo, di, up, b))) < 1e-10
    assert res < 1e-13


def test_diagonally_dominant_against_dense_lu(rng):
    n = 200
    M = sp.random(n, n, density=0.05, random_state=3).toarray() - 0.3 * sp.random(n, n, density=0.05, random_state=4).toarray()
    M += np.diag(np.abs(M).sum(axis=1) + 1.0)
    b = rng.normal(size=n)
    x, it, res = solve_bicgstab(CsrMatrix.from_dense(M), b)
    ref = np.linalg.solve(M, b)
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) < 1e-8
    assert res <= 1e-10


def test_zero_diagonal_is_rejected():
    A = CsrMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(PreconditionerError):
        solve_bicgstab(A, np.ones(2))


def test_breakdown_is_reported():
    # unit diagonal, so <r0, A r0> = sum of entries = 0 for b = (1, 1)
    A = CsrMatrix.from_dense([[1.0, -3.0], [1.0, 1.0]])
    with pytest.raises(BreakdownError):
        solve_bicgstab(A, np.array([1.0, 1.0]))


def test_iteration_cap_returns_best_iterate():
    n = 400
    A = CsrMatrix.from_scipy(sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]))
    x, it, res = solve_bicgstab(A, np.ones(n), tol=1e-14, max_iter=5)
    assert it == 5 and 0 < res <= 1.0
    assert res == pytest.approx(np.linalg.norm(np.ones(n) - A @ x) / np.sqrt(n), rel=1e-10)
    assert res > 1e-14


def test_default_iteration_cap():
    assert default_max_iter(100) == 100
    assert default_max_iter(10**8) == 5000


def test_determinism(rng):
    M = sp.random(80, 80, density=0.1, random_state=5).toarray() + 5 * np.eye(80)
    b = rng.normal(size=80)
    A = CsrMatrix.from_dense(M)
    x1 = solve_bicgstab(A, b)[0]
    x2 = solve_bicgstab(CsrMatrix.from_dense(M), b)[0]
    assert np.array_equal(x1, x2)


@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_spmv_linear(seed, a, b):
    r = np.random.default_rng(seed)
    M = sp.random(20, 20, density=0.2, random_state=seed % 1000)
    A = CsrMatrix.from_scipy(M)
    x, y = r.normal(size=20), r.normal(size=20)
    assert np.allclose(A @ (a * x + b * y), a * (A @ x) + b * (A @ y), atol=1e-12)
