"""Shared fixtures and sample-data builders for the test suite."""

import numpy as np
import pytest

from fom_solver import FomConfig
from fv_grid import FieldKind, ScalarField, StructuredGrid
from pod import SnapshotSet


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow benchmark tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def create_sample_field(grid, seed=0, kind=FieldKind.GENERIC):
    """Random field with a fixed seed."""
    rng = np.random.default_rng(seed)
    return ScalarField(grid, rng.standard_normal(grid.n_cells), kind)


def create_sample_snapshots(grid, count=6, seed=0, kind=FieldKind.VORTICITY):
    """Smooth snapshot set of rank <= 3 with a little random noise."""
    rng = np.random.default_rng(seed)
    x, y = grid.centroids()
    shapes = [np.sin(x) * np.sin(y), np.cos(2 * x) * np.sin(y), np.sin(3 * x) * np.cos(y)]
    S = SnapshotSet(grid, kind)
    for k in range(count):
        weights = rng.standard_normal(len(shapes))
        values = sum(w * s for w, s in zip(weights, shapes)) + 1e-3 * rng.standard_normal(grid.shape)
        S.append(ScalarField(grid, values.ravel(), kind), (800.0, 0.0), 0.1 * (k + 1))
    return S


def create_small_fom_config(**overrides):
    """A few steps on a 16^2 grid, quick enough for every test run."""
    values = dict(re=800.0, dt=0.01, t_end=0.08, nx=16, ny=16, snapshot_stride=2)
    values.update(overrides)
    return FomConfig(**values)


@pytest.fixture
def grid():
    return StructuredGrid(16, 16)


@pytest.fixture
def small_fom_config():
    return create_small_fom_config()


@pytest.fixture
def sample_snapshots(grid):
    return create_sample_snapshots(grid)
