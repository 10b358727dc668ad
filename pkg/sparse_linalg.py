"""
Linear algebra kernels for the full- and reduced-order solvers.

Sparse systems (the Poisson and vorticity transport operators) are solved
with Jacobi-preconditioned CG / BiCGStab. Dense work (POD eigenproblems and
the small reduced systems) goes through scipy.linalg.
"""

import logging
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8

SparseMatrix = scipy.sparse.csr_matrix


class IterativeSolverError(RuntimeError):
    """Raised when a Krylov solve fails to reach its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations
        self.message = message

    def __reduce__(self):
        return type(self), (self.message, self.residual, self.iterations)


class SingularMatrixError(RuntimeError):
    """Raised when dense LU meets a zero pivot."""


def assemble_csr(rows, cols, vals, n: int) -> SparseMatrix:
    """Build an n x n CSR matrix from COO triplets, summing duplicates."""
    matrix = scipy.sparse.coo_matrix(
        (np.asarray(vals, dtype=np.float64), (np.asarray(rows), np.asarray(cols))), shape=(n, n)
    ).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def _jacobi_inverse(A) -> np.ndarray:
    diag = np.asarray(A.diagonal(), dtype=np.float64)
    inv = np.ones_like(diag)
    nonzero = diag != 0.0
    inv[nonzero] = 1.0 / diag[nonzero]
    return inv


def _jacobi_preconditioner(A) -> scipy.sparse.linalg.LinearOperator:
    inv = _jacobi_inverse(A)
    return scipy.sparse.linalg.LinearOperator(A.shape, matvec=lambda r: inv * np.ravel(r), dtype=np.float64)


def relative_residual(A, x: np.ndarray, b: np.ndarray) -> float:
    b_norm = np.linalg.norm(b)
    r_norm = np.linalg.norm(b - A @ x)
    return float(r_norm / b_norm) if b_norm > 0 else float(r_norm)


def _krylov_solve(method, name, A, b, tol, maxit, x0) -> np.ndarray:
    """
    Run a scipy Krylov method with a Jacobi preconditioner.

    scipy stops on its recursive residual, which can drift from the true
    one; a converged solve that misses tol on the true residual is
    restarted once from where it stopped.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    n = b.size
    if A.shape != (n, n):
        raise ValueError(f"Matrix shape {A.shape} does not match right-hand side of length {n}")
    maxit = 10 * n if maxit is None else int(maxit)
    if np.linalg.norm(b) == 0.0:
        return np.zeros_like(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64).reshape(-1)
    preconditioner = _jacobi_preconditioner(A)

    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    for _ in range(2):
        x, info = method(A, b, x0=x, rtol=tol, atol=0.0, maxiter=maxit, M=preconditioner, callback=count)
        residual = relative_residual(A, x, b)
        if info < 0:
            raise IterativeSolverError(f"{name} breakdown (info {info})", residual, iterations)
        if info > 0:
            raise IterativeSolverError(f"{name} did not converge", residual, info)
        if residual <= tol:
            logger.debug("%s converged in %d iterations", name, iterations)
            return x
        logger.debug("%s: true residual %.2e above tol after %d iterations, restarting", name, residual, iterations)
    raise IterativeSolverError(f"{name} stalled above the requested tolerance", residual, iterations)


def cg_solve(A, b, tol: float = DEFAULT_TOL, maxit: int = None, x0=None) -> np.ndarray:
    """
    Jacobi-preconditioned conjugate gradient for SPD systems.

    Args:
        A: symmetric positive definite matrix (sparse or dense)
        b: right-hand side
        tol: relative residual target ||Ax - b|| / ||b||
        maxit: iteration cap (default 10 * n)
        x0: optional initial guess

    Returns:
        Solution vector; b = 0 gives x = 0.
    """
    return _krylov_solve(scipy.sparse.linalg.cg, "CG", A, b, tol, maxit, x0)


def bicgstab_solve(A, b, tol: float = DEFAULT_TOL, maxit: int = None, x0=None) -> np.ndarray:
    """Jacobi-preconditioned BiCGStab for nonsingular, nonsymmetric systems."""
    return _krylov_solve(scipy.sparse.linalg.bicgstab, "BiCGStab", A, b, tol, maxit, x0)


def _check_symmetric(C: np.ndarray) -> np.ndarray:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {C.shape}")
    scale = np.linalg.norm(C)
    if np.linalg.norm(C - C.T) > 1e-8 * max(scale, np.finfo(np.float64).tiny):
        raise ValueError("Matrix is not symmetric")
    return 0.5 * (C + C.T)


def jacobi_eigh(C: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Cyclic Jacobi rotations; returns (eigenvalues, eigenvectors) unsorted."""
    A = np.array(C, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V
    for sweep in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            logger.debug("Jacobi eigensolver converged after %d sweeps", sweep)
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                vec_p = V[:, p].copy()
                vec_q = V[:, q].copy()
                V[:, p] = c * vec_p - s * vec_q
                V[:, q] = s * vec_p + c * vec_q
    else:
        logger.warning("Jacobi eigensolver hit %d sweeps without full convergence", max_sweeps)
    return np.diag(A).copy(), V


def sym_eig(C: np.ndarray, method: str = "lapack"):
    """
    Symmetric eigendecomposition, eigenvalues sorted descending.

    Negative eigenvalues within roundoff of zero are clipped to 0.
    """
    C = _check_symmetric(C)
    if method == "lapack":
        eigenvalues, eigenvectors = scipy.linalg.eigh(C)
    elif method == "jacobi":
        eigenvalues, eigenvectors = jacobi_eigh(C)
    else:
        raise ValueError(f"Unknown eigensolver method '{method}'")

    order = np.argsort(eigenvalues, kind="stable")[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    roundoff = C.shape[0] * np.finfo(np.float64).eps * max(np.abs(eigenvalues).max(initial=0.0), 1e-300)
    eigenvalues[(eigenvalues < 0.0) & (eigenvalues > -10.0 * roundoff)] = 0.0
    return eigenvalues, eigenvectors


def lu_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense LU with partial pivoting."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {A.shape}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A)
    if np.any(np.diag(lu) == 0.0):
        raise SingularMatrixError("Zero pivot encountered in dense LU")
    return scipy.linalg.lu_solve((lu, piv), np.asarray(b, dtype=np.float64))
