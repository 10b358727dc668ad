"""
Galerkin reduced-order model with separate vorticity (beta) and
stream-function (gamma) coefficients.

Offline:
    M_r  = (phi_i, phi_j)           Mt_r = (xi_i, phi_j)
    A_r  = (phi_i, Lap phi_j)       B_r  = (xi_i, Lap xi_j)
    G_r  = (phi_i, div((curl xi_j) phi_k))
    H_r  = (phi_i, F1)
Online (BDF1):
    (M_r/dt + C(gamma^n) - A_r/Re) beta^{n+1} = H_r F2^{n+1} + M_r beta^n / dt
    B_r gamma^{n+1} = -Mt_r beta^{n+1}
with C(gamma)_ik = sum_j gamma_j G_ijk.
"""

import hashlib
import logging
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd

from fom_solver import FomConfig, forcing_amplitude_F2, forcing_field_F1
from fv_grid import GridMismatchError, ScalarField
from fv_operators import (
    FluxMode,
    assemble_convection,
    assemble_laplacian_dirichlet,
    assemble_laplacian_neumann,
    stream_to_flux,
)
from pod import PodBasis, project, reconstruct
from sparse_linalg import SingularMatrixError, lu_solve

logger = logging.getLogger(__name__)


class RomStepError(RuntimeError):
    """The reduced system became singular."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"Reduced step {step} failed: {cause}")
        self.step = step


def operator_fingerprint(basis_omega: PodBasis, basis_psi: PodBasis, flux_mode: str) -> str:
    digest = hashlib.sha256()
    digest.update(basis_omega.grid.fingerprint().encode())
    digest.update(FluxMode(flux_mode).value.encode())
    digest.update(basis_omega.modes.tobytes())
    digest.update(basis_psi.modes.tobytes())
    return digest.hexdigest()[:16]


@dataclass
class ReducedOperators:
    M: np.ndarray
    Mt: np.ndarray
    A: np.ndarray
    B: np.ndarray
    H: np.ndarray
    G: np.ndarray
    flux_mode: str = FluxMode.LINEAR.value
    fingerprint: str = ""

    @property
    def n_omega(self) -> int:
        return self.M.shape[0]

    @property
    def n_psi(self) -> int:
        return self.B.shape[0]

    def convection(self, gamma: np.ndarray) -> np.ndarray:
        return np.einsum("j,ijk->ik", gamma, self.G)


@dataclass
class ReducedState:
    beta: np.ndarray
    gamma: np.ndarray
    n: int = 0


def project_operators(basis_omega: PodBasis, basis_psi: PodBasis, cfg: FomConfig = None) -> ReducedOperators:
    """Project the FV operators onto the vorticity (phi) and stream-function (xi) modes."""
    if basis_omega.grid != basis_psi.grid:
        raise GridMismatchError("Vorticity and stream-function bases live on different grids")
    grid = basis_omega.grid
    flux_mode = FluxMode(cfg.flux_mode if cfg is not None else FluxMode.LINEAR)
    started = time.perf_counter()
    volume = grid.cell_volume
    phi = basis_omega.modes
    xi = basis_psi.modes

    M = basis_omega.gram()
    Mt = xi @ phi.T * volume
    # the assembled Laplacians approximate -Lap
    A = -(phi @ (assemble_laplacian_neumann(grid) @ phi.T)) * volume
    B = -(xi @ (assemble_laplacian_dirichlet(grid) @ xi.T)) * volume
    H = phi @ forcing_field_F1(grid).values * volume

    G = np.empty((basis_omega.n_modes, basis_psi.n_modes, basis_omega.n_modes))
    for j in range(basis_psi.n_modes):
        convection = assemble_convection(stream_to_flux(basis_psi.mode(j), flux_mode))
        G[:, j, :] = phi @ (convection @ phi.T) * volume

    ops = ReducedOperators(
        M, Mt, A, B, H, G, flux_mode.value, operator_fingerprint(basis_omega, basis_psi, flux_mode.value)
    )
    condition = np.linalg.cond(B)
    if not np.isfinite(condition) or condition > 1e14:
        raise SingularMatrixError(f"Reduced Poisson matrix B_r is singular (condition estimate {condition:.3e})")
    logger.info(
        "Projected operators: N_omega=%d, N_psi=%d in %.2f s (cond B_r=%.2e)",
        ops.n_omega, ops.n_psi, time.perf_counter() - started, condition,
    )
    return ops


def stream_coefficients(ops: ReducedOperators, beta: np.ndarray) -> np.ndarray:
    """Solve B_r gamma = -Mt_r beta."""
    return lu_solve(ops.B, -(ops.Mt @ beta))


def rom_step(state: ReducedState, ops: ReducedOperators, dt: float, re: float, f2_next: float) -> ReducedState:
    if dt <= 0 or re <= 0:
        raise ValueError(f"dt and Re must be positive, got dt={dt}, Re={re}")
    lhs = ops.M / dt + ops.convection(state.gamma) - ops.A / re
    rhs = ops.H * f2_next + ops.M @ state.beta / dt
    try:
        beta = lu_solve(lhs, rhs)
        gamma = stream_coefficients(ops, beta)
    except SingularMatrixError as exc:
        raise RomStepError(state.n + 1, exc) from exc
    return ReducedState(beta, gamma, state.n + 1)


@dataclass
class RomRunResult:
    basis_omega: PodBasis
    basis_psi: PodBasis
    times: List[float] = field(default_factory=list)
    beta: List[np.ndarray] = field(default_factory=list)
    gamma: List[np.ndarray] = field(default_factory=list)
    initial_state: ReducedState = None
    online_seconds: float = 0.0
    n_steps: int = 0

    def omega_at(self, index: int) -> ScalarField:
        return reconstruct(self.beta[index], self.basis_omega)

    def psi_at(self, index: int) -> ScalarField:
        return reconstruct(self.gamma[index], self.basis_psi)

    @property
    def seconds_per_step(self) -> float:
        return self.online_seconds / self.n_steps if self.n_steps else 0.0

    def coefficients_frame(self) -> pd.DataFrame:
        data = {"t": self.times}
        for k in range(self.basis_omega.n_modes):
            data[f"beta_{k + 1}"] = [b[k] for b in self.beta]
        for k in range(self.basis_psi.n_modes):
            data[f"gamma_{k + 1}"] = [g[k] for g in self.gamma]
        return pd.DataFrame(data)


def rom_run(
    ops: ReducedOperators, basis_omega: PodBasis, basis_psi: PodBasis, omega0: ScalarField, cfg: FomConfig
) -> RomRunResult:
    """
    Online phase: project omega0, then march the reduced system over the
    FOM time grid, recording at the FOM snapshot times.

    online_seconds covers only the coefficient computation.
    """
    beta0 = project(omega0, basis_omega)
    state = ReducedState(beta0, stream_coefficients(ops, beta0), 0)
    result = RomRunResult(basis_omega, basis_psi, initial_state=state, n_steps=cfg.n_steps)

    started = time.perf_counter()
    for _ in range(cfg.n_steps):
        t_next = cfg.time_at(state.n + 1)
        f2 = forcing_amplitude_F2(t_next, cfg.re, cfg.gamma)
        state = rom_step(state, ops, cfg.dt, cfg.re, f2)
        if state.n % cfg.snapshot_stride == 0:
            result.times.append(t_next)
            result.beta.append(state.beta)
            result.gamma.append(state.gamma)
    result.online_seconds = time.perf_counter() - started
    logger.info(
        "ROM run Re=%g gamma=%g: %d steps in %.4f s online",
        cfg.re, cfg.gamma, cfg.n_steps, result.online_seconds,
    )
    return result
