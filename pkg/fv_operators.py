"""
Finite-volume operators on the structured grid.

Sign conventions:
  - Laplacian matrices approximate -Laplace (so they are positive
    semi-definite); the Dirichlet one is the Poisson operator of -Lap(psi) = omega.
  - Face fluxes are positive in +x / +y. x-faces are stored as (ny, nx + 1),
    y-faces as (ny + 1, nx); the first and last column/row are boundary faces.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse

from fv_grid import FieldKind, ScalarField, StructuredGrid
from sparse_linalg import SparseMatrix, assemble_csr

logger = logging.getLogger(__name__)


class FluxMode(str, Enum):
    LINEAR = "linear"
    CORNER = "corner"


@dataclass(frozen=True, eq=False)
class FaceFluxField:
    """Convective flux phi_j = u_f . A_j on every face."""

    grid: StructuredGrid
    x_faces: np.ndarray
    y_faces: np.ndarray

    def __post_init__(self):
        g = self.grid
        if self.x_faces.shape != (g.ny, g.nx + 1) or self.y_faces.shape != (g.ny + 1, g.nx):
            raise ValueError("Face flux arrays do not match the grid")
        if not (np.all(np.isfinite(self.x_faces)) and np.all(np.isfinite(self.y_faces))):
            raise ValueError("Non-finite face flux")
        if np.any(self.x_faces[:, [0, -1]] != 0.0) or np.any(self.y_faces[[0, -1], :] != 0.0):
            raise ValueError("Boundary face flux must be zero")
        self.x_faces.flags.writeable = False
        self.y_faces.flags.writeable = False

    def net_outflow(self) -> np.ndarray:
        """Sum of outward fluxes per cell, shape (ny, nx)."""
        return (self.x_faces[:, 1:] - self.x_faces[:, :-1]) + (self.y_faces[1:, :] - self.y_faces[:-1, :])

    def max_abs(self) -> float:
        return float(max(np.abs(self.x_faces).max(initial=0.0), np.abs(self.y_faces).max(initial=0.0)))


def _face_pairs(grid: StructuredGrid):
    """Owner/neighbour cell indices for interior x-faces and y-faces."""
    idx = grid.index_array()
    return (idx[:, :-1].ravel(), idx[:, 1:].ravel()), (idx[:-1, :].ravel(), idx[1:, :].ravel())


def _two_point_diffusion(grid: StructuredGrid):
    """COO triplets of the interior two-point flux operator (-Lap, no boundary terms)."""
    (xp, xe), (yp, yn) = _face_pairs(grid)
    # |A_j| / |d_j| / |Omega_i|
    ax = grid.hy / grid.hx / grid.cell_volume
    ay = grid.hx / grid.hy / grid.cell_volume
    rows, cols, vals = [], [], []
    for owner, neighbour, coef in ((xp, xe, ax), (yp, yn, ay)):
        c = np.full(owner.size, coef)
        rows += [owner, owner, neighbour, neighbour]
        cols += [owner, neighbour, neighbour, owner]
        vals += [c, -c, c, -c]
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def assemble_laplacian_dirichlet(grid: StructuredGrid) -> SparseMatrix:
    """
    -Lap with homogeneous Dirichlet faces (psi = 0 on the boundary).

    Boundary faces use the half-cell distance from centroid to face, so each
    boundary face adds 2 / h^2 to the diagonal of its cell.
    """
    rows, cols, vals = _two_point_diffusion(grid)
    idx = grid.index_array()
    boundary = []
    for cells, coef in (
        (idx[:, 0], 2.0 / grid.hx ** 2),
        (idx[:, -1], 2.0 / grid.hx ** 2),
        (idx[0, :], 2.0 / grid.hy ** 2),
        (idx[-1, :], 2.0 / grid.hy ** 2),
    ):
        boundary.append((cells, np.full(cells.size, coef)))
    b_cells = np.concatenate([c for c, _ in boundary])
    b_vals = np.concatenate([v for _, v in boundary])
    return assemble_csr(
        np.concatenate([rows, b_cells]), np.concatenate([cols, b_cells]), np.concatenate([vals, b_vals]), grid.n_cells
    )


def assemble_laplacian_neumann(grid: StructuredGrid) -> SparseMatrix:
    """-Lap with zero-gradient faces; rows sum to zero."""
    rows, cols, vals = _two_point_diffusion(grid)
    return assemble_csr(rows, cols, vals, grid.n_cells)


def assemble_convection(flux: FaceFluxField) -> SparseMatrix:
    """
    Central-differencing convection operator: (C w)_i = sum_j phi_j w_f / |Omega_i|,
    with w_f the arithmetic mean of the two cells sharing face j.
    """
    grid = flux.grid
    (xp, xe), (yp, yn) = _face_pairs(grid)
    inv_vol = 1.0 / grid.cell_volume
    half_x = 0.5 * flux.x_faces[:, 1:-1].ravel() * inv_vol
    half_y = 0.5 * flux.y_faces[1:-1, :].ravel() * inv_vol
    rows, cols, vals = [], [], []
    for owner, neighbour, half in ((xp, xe, half_x), (yp, yn, half_y)):
        # outflow of the owner is inflow of the neighbour
        rows += [owner, owner, neighbour, neighbour]
        cols += [owner, neighbour, neighbour, owner]
        vals += [half, half, -half, -half]
    return assemble_csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), grid.n_cells)


def assemble_helmholtz_neumann(dt: float, re: float, flux: FaceFluxField) -> SparseMatrix:
    """Implicit vorticity transport matrix H = I/dt + C(flux) + (1/Re) L_N."""
    if dt <= 0 or re <= 0:
        raise ValueError(f"dt and Re must be positive, got dt={dt}, Re={re}")
    grid = flux.grid
    mass = scipy.sparse.identity(grid.n_cells, format="csr") / dt
    H = (mass + assemble_convection(flux) + assemble_laplacian_neumann(grid) / re).tocsr()
    H.sort_indices()
    return H


def _gradient(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central differences inside, one-sided second order at boundary cells."""
    n = values.shape[axis]
    if n >= 3:
        return np.gradient(values, h, axis=axis, edge_order=2)
    if n == 2:
        return np.gradient(values, h, axis=axis, edge_order=1)
    return np.zeros_like(values)


def curl_to_velocity(psi: ScalarField):
    """Cell-centred velocity u = d(psi)/dy, v = -d(psi)/dx."""
    grid = psi.grid
    p = psi.as_2d()
    u = _gradient(p, grid.hy, axis=0)
    v = -_gradient(p, grid.hx, axis=1)
    return (
        ScalarField(grid, u.ravel(), FieldKind.VELOCITY),
        ScalarField(grid, v.ravel(), FieldKind.VELOCITY),
    )


def _wall_stream_function(p: np.ndarray) -> float:
    """Mean of psi extrapolated linearly onto every boundary face."""
    walls = []
    for edge, inner in ((p[:, 0], p[:, 1:2]), (p[:, -1], p[:, -2:-1]), (p[0, :], p[1:2, :]), (p[-1, :], p[-2:-1, :])):
        inner = inner.ravel()
        walls.append(1.5 * edge - 0.5 * inner if inner.size == edge.size else edge)
    return float(np.mean(np.concatenate(walls)))


def _corner_stream_function(psi: ScalarField) -> np.ndarray:
    """
    psi averaged to cell corners. Every boundary corner carries one wall value,
    so differences along wall faces vanish and a constant psi stays constant.
    """
    grid = psi.grid
    p = psi.as_2d()
    corners = np.full((grid.ny + 1, grid.nx + 1), _wall_stream_function(p))
    corners[1:-1, 1:-1] = 0.25 * (p[:-1, :-1] + p[:-1, 1:] + p[1:, :-1] + p[1:, 1:])
    return corners


def stream_to_flux(psi: ScalarField, mode: FluxMode = FluxMode.LINEAR) -> FaceFluxField:
    """
    Face fluxes of u = curl(psi); boundary faces carry zero flux (slip wall).

    LINEAR interpolates central-difference cell velocities to the faces.
    CORNER differences corner values of psi along each face, which makes
    every cell exactly divergence free.
    """
    grid = psi.grid
    mode = FluxMode(mode)
    x_faces = np.zeros((grid.ny, grid.nx + 1))
    y_faces = np.zeros((grid.ny + 1, grid.nx))
    if mode is FluxMode.LINEAR:
        u, v = curl_to_velocity(psi)
        u2, v2 = u.as_2d(), v.as_2d()
        x_faces[:, 1:-1] = 0.5 * (u2[:, :-1] + u2[:, 1:]) * grid.hy
        y_faces[1:-1, :] = 0.5 * (v2[:-1, :] + v2[1:, :]) * grid.hx
    else:
        corners = _corner_stream_function(psi)
        x_faces[:, 1:-1] = corners[1:, 1:-1] - corners[:-1, 1:-1]
        y_faces[1:-1, :] = -(corners[1:-1, 1:] - corners[1:-1, :-1])
    return FaceFluxField(grid, x_faces, y_faces)
