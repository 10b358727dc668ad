#!/usr/bin/env python3
"""Tests for FOM-vs-ROM error metrics."""

import numpy as np
import pytest

from conftest import create_small_fom_config
from fom_solver import fom_run, vortex_merger_ic
from fv_grid import ScalarField, StructuredGrid
from metrics import (
    UndefinedMetricError,
    compare_runs,
    error_enstrophy,
    error_relative,
    max_relative_difference,
    metrics_frame,
    summarize,
)
from pod import build_basis
from rom import project_operators, rom_run

UNIT = StructuredGrid(2, 1, 2.0, 1.0)


def test_error_relative_examples():
    fom = ScalarField(UNIT, [3.0, 4.0])
    assert error_relative(fom, fom) == 0.0
    assert error_relative(fom, ScalarField.zeros(UNIT)) == pytest.approx(100.0)
    assert error_relative(fom, ScalarField(UNIT, [3.0, 0.0])) == pytest.approx(80.0)
    with pytest.raises(UndefinedMetricError):
        error_relative(ScalarField.zeros(UNIT), fom)


def test_error_enstrophy_examples():
    assert error_enstrophy(2.0, 2.0) == 0.0
    assert error_enstrophy(2.0, 0.0) == pytest.approx(100.0)
    assert error_enstrophy(2.0, 2.1) == pytest.approx(-5.0)
    with pytest.raises(UndefinedMetricError):
        error_enstrophy(0.0, 1.0)


def test_max_relative_difference():
    fom = ScalarField(UNIT, [2.0, -4.0])
    assert max_relative_difference(fom, ScalarField(UNIT, [1.0, -4.0])) == pytest.approx(0.25)
    with pytest.raises(UndefinedMetricError):
        max_relative_difference(ScalarField.zeros(UNIT), fom)


def test_compare_runs_with_full_basis():
    cfg = create_small_fom_config()
    fom = fom_run(cfg)
    basis_omega = build_basis(fom.omega, fixed_count=len(fom.omega))
    basis_psi = build_basis(fom.psi, fixed_count=len(fom.psi))
    ops = project_operators(basis_omega, basis_psi, cfg)
    rom = rom_run(ops, basis_omega, basis_psi, vortex_merger_ic(cfg.grid), cfg)
    records = compare_runs(fom, rom)
    assert [r.t for r in records] == rom.times
    for r in records:
        assert np.isfinite([r.e_psi, r.e_omega, r.e_enstrophy]).all()
        assert r.e_omega >= 0.0 and r.e_psi >= 0.0
    frame = metrics_frame(records)
    assert list(frame.columns[:4]) == ["t", "e_psi", "e_omega", "e_enstrophy"]
    summary = summarize(records)
    assert summary["max_e_omega"] == pytest.approx(frame["e_omega"].max())
    assert summary["max_abs_e_enstrophy"] >= 0.0
    assert summarize([]) == {}


def test_compare_runs_rejects_mismatched_schedules():
    cfg = create_small_fom_config()
    fom = fom_run(cfg)
    longer = fom_run(create_small_fom_config(t_end=0.12))
    basis_omega = build_basis(fom.omega, threshold=1e-5)
    basis_psi = build_basis(fom.psi, threshold=1e-5)
    ops = project_operators(basis_omega, basis_psi, cfg)
    rom = rom_run(ops, basis_omega, basis_psi, vortex_merger_ic(cfg.grid), cfg)
    with pytest.raises(ValueError):
        compare_runs(longer, rom)
