#!/usr/bin/env python3
"""Tests for the Krylov solvers, the eigensolvers and dense LU."""

import pickle

import numpy as np
import pytest
import scipy.sparse

from sparse_linalg import (
    IterativeSolverError,
    SingularMatrixError,
    assemble_csr,
    bicgstab_solve,
    cg_solve,
    jacobi_eigh,
    lu_solve,
    relative_residual,
    sym_eig,
)


def create_sample_dominant_matrix(n=50, seed=0):
    """Random nonsymmetric, strictly diagonally dominant matrix."""
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, (n, n))
    A[np.diag_indices(n)] = np.abs(A).sum(axis=1) + 1.0
    return scipy.sparse.csr_matrix(A)


def test_assemble_csr_sums_duplicates():
    A = assemble_csr([0, 0, 1], [0, 0, 1], [1.0, 2.0, 5.0], 2)
    np.testing.assert_allclose(A.toarray(), [[3.0, 0.0], [0.0, 5.0]])


@pytest.mark.parametrize("solver", [cg_solve, bicgstab_solve])
def test_identity_and_zero_rhs(solver):
    b = np.array([1.0, -2.0, 3.0])
    I = scipy.sparse.identity(3, format="csr")
    np.testing.assert_allclose(solver(I, b), b)
    np.testing.assert_array_equal(solver(I, np.zeros(3)), np.zeros(3))


def test_cg_two_by_two():
    A = scipy.sparse.csr_matrix([[4.0, 1.0], [1.0, 3.0]])
    x = cg_solve(A, np.array([1.0, 2.0]), tol=1e-12)
    np.testing.assert_allclose(x, [1.0 / 11.0, 7.0 / 11.0], rtol=1e-10)


def test_cg_reports_non_convergence():
    n = 40
    A = scipy.sparse.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    with pytest.raises(IterativeSolverError) as info:
        cg_solve(A, np.ones(n), tol=1e-14, maxit=2)
    assert info.value.iterations == 2
    assert info.value.residual > 1e-14


def test_bicgstab_upper_triangular():
    A = scipy.sparse.csr_matrix([[2.0, 1.0], [0.0, 2.0]])
    x = bicgstab_solve(A, np.array([4.0, 2.0]), tol=1e-12)
    np.testing.assert_allclose(x, [1.5, 1.0], rtol=1e-10)


def test_bicgstab_matches_dense_lu():
    A = create_sample_dominant_matrix()
    b = np.random.default_rng(1).standard_normal(A.shape[0])
    x = bicgstab_solve(A, b, tol=1e-12)
    np.testing.assert_allclose(x, lu_solve(A.toarray(), b), atol=1e-8)
    assert relative_residual(A, x, b) <= 1e-12


def test_sym_eig_examples():
    values, _ = sym_eig(np.eye(3))
    np.testing.assert_allclose(values, [1.0, 1.0, 1.0])

    values, vectors = sym_eig(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(values, [3.0, 2.0, 1.0])
    np.testing.assert_allclose(np.abs(vectors), [[1, 0, 0], [0, 0, 1], [0, 1, 0]], atol=1e-12)

    values, vectors = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(values, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(vectors[:, 0]), [1 / np.sqrt(2)] * 2, atol=1e-12)
    assert vectors[0, 1] * vectors[1, 1] < 0


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_sym_eig_contract(method):
    rng = np.random.default_rng(3)
    X = rng.standard_normal((12, 5))
    C = X @ X.T + np.eye(12)
    values, Q = sym_eig(C, method=method)
    assert np.all(np.diff(values) <= 0)
    assert np.all(values >= 0)
    scale = np.linalg.norm(C)
    for k in range(C.shape[0]):
        assert np.linalg.norm(C @ Q[:, k] - values[k] * Q[:, k]) <= 1e-10 * scale
    np.testing.assert_allclose(Q.T @ Q, np.eye(C.shape[0]), atol=1e-10)


def test_jacobi_and_lapack_agree():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((8, 8))
    C = X + X.T
    lapack, _ = sym_eig(C, "lapack")
    jacobi, _ = sym_eig(C, "jacobi")
    np.testing.assert_allclose(jacobi, lapack, atol=1e-10)
    raw, _ = jacobi_eigh(np.zeros((3, 3)))
    np.testing.assert_array_equal(raw, np.zeros(3))


def test_sym_eig_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        sym_eig(np.eye(2), method="power")


def test_lu_solve_examples():
    np.testing.assert_allclose(lu_solve(np.eye(2), [5.0, 7.0]), [5.0, 7.0])
    np.testing.assert_allclose(lu_solve(np.array([[0.0, 1.0], [1.0, 0.0]]), [5.0, 7.0]), [7.0, 5.0])
    np.testing.assert_allclose(lu_solve(np.array([[2.0, 1.0], [1.0, 3.0]]), [3.0, 5.0]), [0.8, 1.4], rtol=1e-12)


def test_lu_solve_singular():
    with pytest.raises(SingularMatrixError):
        lu_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 2.0])


def create_sample_graded_matrix(n=30, seed=5):
    """Symmetric PSD matrix with eigenvalues spread over ten decades, like a snapshot correlation."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * np.logspace(2, -8, n)) @ Q.T


def test_jacobi_resolves_small_off_diagonal_entries():
    C = create_sample_graded_matrix()
    values, Q = sym_eig(C, method="jacobi")
    scale = np.linalg.norm(C)
    residuals = np.linalg.norm(C @ Q - Q * values, axis=0)
    assert residuals.max() <= 1e-10 * scale
    np.testing.assert_allclose(Q.T @ Q, np.eye(C.shape[0]), atol=1e-10)
    np.testing.assert_allclose(values, sym_eig(C)[0], atol=1e-10 * scale)


@pytest.mark.parametrize("method, n", [("lapack", 10), ("lapack", 200), ("jacobi", 10), ("jacobi", 40)])
def test_sym_eig_reconstructs_matrix(method, n):
    X = np.random.default_rng(n).standard_normal((n, n))
    C = X + X.T
    values, Q = sym_eig(C, method=method)
    assert np.linalg.norm((Q * values) @ Q.T - C) <= 1e-9 * np.linalg.norm(C)


@pytest.mark.parametrize("seed", range(3))
def test_lu_and_cg_agree_on_spd_systems(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((25, 25))
    A = X @ X.T + 25.0 * np.eye(25)
    b = rng.standard_normal(25)
    x_cg = cg_solve(scipy.sparse.csr_matrix(A), b, tol=1e-12)
    np.testing.assert_allclose(x_cg, lu_solve(A, b), atol=1e-8)


@pytest.mark.parametrize("solver", [cg_solve, bicgstab_solve])
def test_returned_solutions_meet_tolerance_on_true_residual(solver):
    n = 30
    A = scipy.sparse.diags([-np.ones(n - 1), 2.5 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    b = np.random.default_rng(2).standard_normal(n)
    for tol in (1e-6, 1e-10):
        assert relative_residual(A, solver(A, b, tol=tol), b) <= tol


def test_bicgstab_reports_non_convergence():
    A = create_sample_dominant_matrix(n=60, seed=3)
    with pytest.raises(IterativeSolverError) as info:
        bicgstab_solve(A, np.ones(60), tol=1e-15, maxit=1)
    assert info.value.iterations == 1
    assert info.value.residual > 1e-15


def test_solver_errors_survive_pickling():
    error = pickle.loads(pickle.dumps(IterativeSolverError("CG did not converge", 1e-3, 7)))
    assert (error.residual, error.iterations) == (1e-3, 7)
    assert "after 7 iterations" in str(error)
