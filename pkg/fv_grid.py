"""
Structured grid geometry and cell-centred scalar fields.

Cells are stored row-major (j outer, i inner): cell (i, j) lives at
flat index j * nx + i. Every other module relies on this ordering.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)


class GridMismatchError(ValueError):
    """Raised when two objects that must share a grid do not."""


class FieldKind(str, Enum):
    VORTICITY = "omega"
    STREAM_FUNCTION = "psi"
    FORCING = "forcing"
    VELOCITY = "velocity"
    GENERIC = "generic"


@dataclass(frozen=True)
class StructuredGrid:
    """Uniform Cartesian partition of [0, lx] x [0, ly] into nx * ny cells."""

    nx: int
    ny: int
    lx: float = 2.0 * np.pi
    ly: float = 2.0 * np.pi

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise ValueError(f"Grid needs positive integer cell counts, got nx={self.nx}, ny={self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError(f"Grid extents must be positive, got lx={self.lx}, ly={self.ly}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    @property
    def shape(self) -> tuple:
        """Shape of a field reshaped to 2D, (ny, nx)."""
        return (self.ny, self.nx)

    def cell_index(self, i: int, j: int) -> int:
        return j * self.nx + i

    def centroids(self):
        """Return (x, y) centroid arrays of shape (ny, nx)."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="xy")

    def index_array(self) -> np.ndarray:
        """Flat cell indices laid out as (ny, nx)."""
        return np.arange(self.n_cells).reshape(self.shape)

    def fingerprint(self) -> str:
        return f"{self.nx}x{self.ny}:{self.lx!r}:{self.ly!r}"

    def require_same(self, other: "StructuredGrid"):
        if self != other:
            raise GridMismatchError(
                f"Grid mismatch: {self.nx}x{self.ny} on {self.lx:g}x{self.ly:g} "
                f"vs {other.nx}x{other.ny} on {other.lx:g}x{other.ly:g}"
            )


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real value per cell, read-only once built."""

    grid: StructuredGrid
    values: np.ndarray
    kind: FieldKind = FieldKind.GENERIC

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != self.grid.n_cells:
            raise GridMismatchError(
                f"Field has {values.size} values, grid {self.grid.nx}x{self.grid.ny} needs {self.grid.n_cells}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError(f"Non-finite values in {self.kind.value} field")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: StructuredGrid, kind: FieldKind = FieldKind.GENERIC) -> "ScalarField":
        return cls(grid, np.zeros(grid.n_cells), kind)

    def as_2d(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.kind)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self.grid.require_same(other.grid)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self.grid.require_same(other.grid)
        return self.with_values(self.values - other.values)

    def __mul__(self, scale: float) -> "ScalarField":
        return self.with_values(self.values * scale)

    __rmul__ = __mul__


def l2_inner(a: ScalarField, b: ScalarField) -> float:
    """Discrete L2(Omega) pairing: sum_i a_i b_i |Omega_i|."""
    a.grid.require_same(b.grid)
    return float(np.dot(a.values, b.values) * a.grid.cell_volume)


def l2_norm(a: ScalarField) -> float:
    return float(np.sqrt(max(l2_inner(a, a), 0.0)))


def sample_function(grid: StructuredGrid, f: Callable, kind: FieldKind = FieldKind.GENERIC) -> ScalarField:
    """
    Evaluate f(x, y) at every cell centroid.

    f is called once with 2D coordinate arrays; scalar results (e.g. a
    constant) are broadcast to the whole grid.
    """
    x, y = grid.centroids()
    values = np.broadcast_to(np.asarray(f(x, y), dtype=np.float64), grid.shape)
    return ScalarField(grid, values.reshape(-1), kind)
