"""
Proper orthogonal decomposition by the method of snapshots.

The correlation matrix C_ij = (Phi_i, Phi_j)_L2 is eigendecomposed and each
retained mode is built as zeta_k = (1 / sqrt(lambda_k)) sum_j Q_jk Phi_j,
then renormalised in L2. Snapshots are not mean-subtracted.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from fv_grid import FieldKind, GridMismatchError, ScalarField, StructuredGrid
from sparse_linalg import sym_eig

logger = logging.getLogger(__name__)

ORTHONORMALITY_TOL = 1e-12


class EmptyBasisError(ValueError):
    """The snapshot set carries no energy above the truncation threshold."""


@dataclass
class SnapshotSet:
    """
    Ordered snapshots of one variable, tagged with (parameters, time).

    Ordering is parameter-major, time-minor when sets from several runs are
    pooled with SnapshotSet.pool.
    """

    grid: StructuredGrid
    kind: FieldKind
    _rows: List[np.ndarray] = field(default_factory=list, repr=False)
    params: List[Tuple[float, ...]] = field(default_factory=list)
    times: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self._rows)

    def __getitem__(self, index: int) -> ScalarField:
        return ScalarField(self.grid, self._rows[index], self.kind)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def append(self, snapshot: ScalarField, params: Sequence[float], t: float):
        self.grid.require_same(snapshot.grid)
        self._rows.append(snapshot.values)
        self.params.append(tuple(float(p) for p in params))
        self.times.append(float(t))

    @property
    def matrix(self) -> np.ndarray:
        """Snapshots as rows, shape (N_s, n_cells)."""
        if not self._rows:
            return np.empty((0, self.grid.n_cells))
        return np.vstack(self._rows)

    @classmethod
    def pool(cls, sets: Iterable["SnapshotSet"]) -> "SnapshotSet":
        sets = list(sets)
        if not sets:
            raise ValueError("Nothing to pool")
        pooled = cls(sets[0].grid, sets[0].kind)
        for s in sets:
            if s.kind != pooled.kind:
                raise ValueError(f"Cannot pool {s.kind.value} snapshots with {pooled.kind.value} snapshots")
            for snapshot, params, t in zip(s, s.params, s.times):
                pooled.append(snapshot, params, t)
        return pooled


@dataclass
class PodBasis:
    grid: StructuredGrid
    kind: FieldKind
    modes: np.ndarray
    eigenvalues: np.ndarray
    threshold: Optional[float] = None
    fixed_count: Optional[int] = None

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    def mode(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.modes[k], self.kind)

    def gram(self) -> np.ndarray:
        return self.modes @ self.modes.T * self.grid.cell_volume

    def spectrum_frame(self) -> pd.DataFrame:
        total = self.eigenvalues.sum()
        return pd.DataFrame(
            {
                "k": np.arange(1, self.eigenvalues.size + 1),
                "lambda": self.eigenvalues,
                "lambda_normalized": self.eigenvalues / total if total > 0 else np.zeros_like(self.eigenvalues),
                "retained": np.arange(self.eigenvalues.size) < self.n_modes,
            }
        )


def correlation_matrix(S: SnapshotSet) -> np.ndarray:
    if len(S) < 1:
        raise ValueError("Correlation matrix needs at least one snapshot")
    X = S.matrix
    C = (X @ X.T) * S.grid.cell_volume
    return 0.5 * (C + C.T)


def _retained_count(eigenvalues: np.ndarray, threshold, fixed_count) -> int:
    total = eigenvalues.sum()
    if total <= 0.0 or eigenvalues[0] <= np.finfo(np.float64).tiny:
        raise EmptyBasisError("All correlation eigenvalues vanish")
    # modes this far below lambda_1 cannot be normalised reliably
    rank = int(np.count_nonzero(eigenvalues > 1e-13 * eigenvalues[0]))
    if fixed_count is not None:
        if fixed_count > rank:
            logger.warning("Requested %d modes but snapshot rank is %d; keeping %d", fixed_count, rank, rank)
        return min(fixed_count, rank)
    count = int(np.count_nonzero(eigenvalues / total >= threshold))
    if count == 0:
        raise EmptyBasisError(f"Threshold {threshold} retains no modes")
    return min(count, rank)


def _orthonormalize(modes: np.ndarray, volume: float) -> np.ndarray:
    """Modified Gram-Schmidt in L2, keeping each mode's direction sequence."""
    out = modes.copy()
    for k in range(out.shape[0]):
        for j in range(k):
            out[k] -= (out[j] @ out[k]) * volume * out[j]
        out[k] /= np.sqrt(out[k] @ out[k] * volume)
    return out


def build_basis(
    S: SnapshotSet, threshold: float = None, fixed_count: int = None, eig_method: str = "lapack"
) -> PodBasis:
    """
    Build an L2-orthonormal POD basis from a snapshot set.

    Exactly one of ``threshold`` (retain lambda_k / sum(lambda) >= threshold)
    or ``fixed_count`` must be given.
    """
    if (threshold is None) == (fixed_count is None):
        raise ValueError("Give exactly one of threshold or fixed_count")
    if threshold is not None and not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if fixed_count is not None and not 1 <= fixed_count <= len(S):
        raise ValueError(f"fixed_count must lie in [1, {len(S)}], got {fixed_count}")

    C = correlation_matrix(S)
    eigenvalues, Q = sym_eig(C, method=eig_method)
    n_r = _retained_count(eigenvalues, threshold, fixed_count)

    volume = S.grid.cell_volume
    modes = (Q[:, :n_r] / np.sqrt(eigenvalues[:n_r])).T @ S.matrix
    modes /= np.sqrt(np.einsum("ij,ij->i", modes, modes) * volume)[:, None]
    gram = modes @ modes.T * volume
    if np.abs(gram - np.eye(n_r)).max() > ORTHONORMALITY_TOL:
        modes = _orthonormalize(modes, volume)

    # largest-magnitude entry of every mode is positive
    peaks = modes[np.arange(n_r), np.argmax(np.abs(modes), axis=1)]
    modes *= np.where(peaks < 0.0, -1.0, 1.0)[:, None]

    logger.info(
        "POD %s: %d snapshots, %d modes retained (threshold=%s, fixed=%s)",
        S.kind.value, len(S), n_r, threshold, fixed_count,
    )
    return PodBasis(S.grid, S.kind, modes, eigenvalues, threshold, fixed_count)


def _require_grid(field: ScalarField, basis: PodBasis):
    if field.grid != basis.grid:
        raise GridMismatchError("Field and basis live on different grids")


def project(field: ScalarField, basis: PodBasis) -> np.ndarray:
    """Galerkin coefficients c_k = (field, zeta_k)."""
    _require_grid(field, basis)
    return basis.modes @ field.values * basis.grid.cell_volume


def reconstruct(coeffs: np.ndarray, basis: PodBasis) -> ScalarField:
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    if coeffs.size != basis.n_modes:
        raise ValueError(f"Expected {basis.n_modes} coefficients, got {coeffs.size}")
    return ScalarField(basis.grid, coeffs @ basis.modes, basis.kind)


def projection_error(S: SnapshotSet, basis: PodBasis) -> float:
    """Sum over snapshots of ||Phi_i - P_r Phi_i||^2 in L2."""
    if S.grid != basis.grid:
        raise GridMismatchError("Snapshots and basis live on different grids")
    X = S.matrix
    volume = S.grid.cell_volume
    residual = X - (X @ basis.modes.T * volume) @ basis.modes
    return float(np.sum(residual * residual) * volume)
