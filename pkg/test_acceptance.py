#!/usr/bin/env python3
"""
Benchmark-scale checks of the vortex merger pipeline.

These take minutes to tens of minutes; run with `pytest --runslow`.
"""

import time

import numpy as np
import pytest

from fom_solver import FomConfig, fom_run
from pod import build_basis, projection_error
from rom import ReducedState, project_operators, rom_step
from study import ParameterPoint, StudyConfig, StudyKind, run_study

pytestmark = pytest.mark.slow


def peak(outcome, key):
    return outcome.summary()[key]


def outcome_for(report, re, gamma):
    return next(o for o in report.outcomes if o.point == ParameterPoint(re, gamma))


@pytest.fixture(scope="module")
def time_reconstruction(tmp_path_factory):
    cfg = StudyConfig.preset(StudyKind.TIME_RECONSTRUCTION, output_dir=str(tmp_path_factory.mktemp("tr")))
    cfg.fom = FomConfig(re=800.0, t_end=10.0, nx=128, ny=128)
    return run_study(cfg)


def test_unforced_long_run_keeps_symmetry_and_decays():
    result = fom_run(FomConfig(re=800.0, t_end=10.0, nx=64, ny=64, tol=1e-11))
    e = np.array([d.enstrophy for d in result.diagnostics])
    z = np.array([d.total_vorticity for d in result.diagnostics])
    assert np.all(e[1:] <= e[:-1] * (1.0 + 1e-8))
    assert np.all(np.abs(np.diff(z)) <= 1e-8 * np.abs(z[:-1]))
    omega = result.final_state.omega.as_2d()
    assert np.abs(omega - omega[::-1, ::-1]).max() <= 1e-6


def test_pod_on_fom_snapshots():
    result = fom_run(FomConfig(re=800.0, t_end=4.0, nx=64, ny=64))
    assert len(result.omega) == 50
    for snapshots in (result.omega, result.psi):
        basis = build_basis(snapshots, threshold=1e-5)
        np.testing.assert_allclose(basis.gram(), np.eye(basis.n_modes), atol=1e-10)
        tail = basis.eigenvalues[basis.n_modes :].sum()
        assert projection_error(snapshots, basis) == pytest.approx(tail, rel=1e-6, abs=1e-12 * basis.eigenvalues[0])


def test_full_basis_rom_tracks_fom(tmp_path):
    cfg = StudyConfig.preset(
        StudyKind.TIME_RECONSTRUCTION, output_dir=str(tmp_path), threshold_omega=1e-12, threshold_psi=1e-12
    )
    cfg.fom = FomConfig(re=800.0, t_end=10.0, nx=64, ny=64)
    report = run_study(cfg)
    assert len(report.offline.omega_snapshots) == 125
    outcome = report.outcomes[0]
    assert outcome.status == "ok"
    assert peak(outcome, "max_e_omega") <= 2.0
    assert peak(outcome, "max_e_psi") <= 1.0


def test_time_reconstruction_accuracy(time_reconstruction):
    offline = time_reconstruction.offline
    assert len(offline.omega_snapshots) == 125
    assert offline.basis_psi.n_modes < offline.basis_omega.n_modes
    outcome = time_reconstruction.outcomes[0]
    assert outcome.status == "ok"
    assert peak(outcome, "max_e_psi") < 1.0
    assert peak(outcome, "max_e_omega") < 4.0
    assert peak(outcome, "max_abs_e_enstrophy") < 0.5


def test_online_speedup(time_reconstruction):
    outcome = time_reconstruction.outcomes[0]
    assert outcome.speedup >= 20.0


def test_online_step_cost_is_grid_independent():
    operators = []
    for n in (64, 128):
        result = fom_run(FomConfig(re=800.0, t_end=4.0, nx=n, ny=n))
        basis_omega = build_basis(result.omega, fixed_count=6)
        basis_psi = build_basis(result.psi, fixed_count=4)
        operators.append(project_operators(basis_omega, basis_psi, result.config))
    assert [(ops.n_omega, ops.n_psi) for ops in operators] == [(6, 4), (6, 4)]

    def march(ops):
        s = ReducedState(np.ones(ops.n_omega), np.zeros(ops.n_psi))
        started = time.perf_counter()
        for _ in range(2000):
            s = rom_step(s, ops, 0.01, 800.0, 0.0)
        return time.perf_counter() - started

    for ops in operators:
        march(ops)
    # interleaved
    samples = [[], []]
    for _ in range(9):
        for i, ops in enumerate(operators):
            samples[i].append(march(ops))
    coarse, fine = (float(np.median(s)) for s in samples)
    assert abs(fine - coarse) < 0.1 * coarse


def test_reynolds_sweep(tmp_path):
    cfg = StudyConfig.preset(StudyKind.RE_SWEEP, output_dir=str(tmp_path), workers=4)
    report = run_study(cfg)
    assert len(report.offline.omega_snapshots) == 500
    inside = outcome_for(report, 500.0, 0.09)
    outside = outcome_for(report, 100.0, 0.09)
    assert inside.role == "interpolatory" and outside.role == "extrapolatory"
    assert peak(inside, "max_e_psi") < 3.0
    assert peak(inside, "max_e_omega") < 3.0
    assert peak(outside, "max_e_psi") > peak(inside, "max_e_psi")
    assert peak(outside, "max_e_omega") > peak(inside, "max_e_omega")


def test_gamma_sweep(tmp_path):
    cfg = StudyConfig.preset(StudyKind.GAMMA_SWEEP, output_dir=str(tmp_path), workers=4)
    report = run_study(cfg)
    assert (report.offline.basis_omega.n_modes, report.offline.basis_psi.n_modes) == (12, 6)
    inside = outcome_for(report, 800.0, 0.075)
    assert peak(inside, "max_e_psi") < 1.5
    assert peak(inside, "max_e_omega") < 3.0
    for gamma in (0.05, 0.1):
        outside = outcome_for(report, 800.0, gamma)
        assert peak(outside, "max_e_psi") < 3.0 * peak(inside, "max_e_psi")
        assert peak(outside, "max_e_omega") < 3.0 * peak(inside, "max_e_omega")

