"""
Full-order vorticity / stream-function solver (BDF1, segregated).

Each step:
  (i)  H(psi^n) omega^{n+1} = F2(t^{n+1}) F1 + omega^n / dt
  (ii) L_D psi^{n+1} = omega^{n+1}
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

import numpy as np
import pandas as pd

from fv_grid import FieldKind, ScalarField, StructuredGrid, l2_inner, sample_function
from fv_operators import (
    FluxMode,
    assemble_helmholtz_neumann,
    assemble_laplacian_dirichlet,
    stream_to_flux,
)
from pod import SnapshotSet
from sparse_linalg import DEFAULT_TOL, IterativeSolverError, bicgstab_solve, cg_solve, relative_residual

logger = logging.getLogger(__name__)

VORTEX_CENTERS = ((3.0 * np.pi / 4.0, np.pi), (5.0 * np.pi / 4.0, np.pi))


class ConfigError(ValueError):
    """Raised for invalid solver or study settings."""


class SolverStageError(RuntimeError):
    """An iterative solve failed inside a FOM step."""

    def __init__(self, stage: str, step: int, cause: IterativeSolverError):
        super().__init__(f"FOM {stage} solve failed at step {step}: {cause}")
        self.stage = stage
        self.step = step
        self.cause = cause

    def __reduce__(self):
        # rebuilt in the parent when raised inside a worker process
        return type(self), (self.stage, self.step, self.cause)


@dataclass
class FomConfig:
    re: float = 800.0
    dt: float = 0.01
    t0: float = 0.0
    t_end: float = 20.0
    gamma: float = 0.0
    nx: int = 64
    ny: int = 64
    lx: float = 2.0 * np.pi
    ly: float = 2.0 * np.pi
    flux_mode: str = FluxMode.LINEAR.value
    tol: float = DEFAULT_TOL
    maxit: Optional[int] = None
    snapshot_stride: int = 8

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.re > 0:
            raise ConfigError(f"Re must be positive, got {self.re}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_end < self.t0:
            raise ConfigError(f"t_end ({self.t_end}) precedes t0 ({self.t0})")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ConfigError(f"snapshot_stride must be an integer >= 1, got {self.snapshot_stride}")
        if not self.tol > 0:
            raise ConfigError(f"Solver tolerance must be positive, got {self.tol}")
        try:
            FluxMode(self.flux_mode)
        except ValueError:
            raise ConfigError(f"Unknown flux mode '{self.flux_mode}'") from None
        steps = (self.t_end - self.t0) / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ConfigError(f"Interval ({self.t0}, {self.t_end}] is not a whole number of steps of {self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt))

    @property
    def grid(self) -> StructuredGrid:
        return StructuredGrid(self.nx, self.ny, self.lx, self.ly)

    @property
    def parameters(self) -> tuple:
        return (float(self.re), float(self.gamma))

    def time_at(self, n: int) -> float:
        return self.t0 + n * self.dt

    def with_parameters(self, re: float = None, gamma: float = None) -> "FomConfig":
        return replace(self, re=self.re if re is None else re, gamma=self.gamma if gamma is None else gamma)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FomState:
    n: int
    omega: ScalarField
    psi: ScalarField


@dataclass
class FomDiagnostics:
    step: int
    time: float
    enstrophy: float
    total_vorticity: float
    step_seconds: float


@dataclass
class FomRunResult:
    config: FomConfig
    omega: SnapshotSet
    psi: SnapshotSet
    diagnostics: List[FomDiagnostics] = field(default_factory=list)
    wall_seconds: float = 0.0
    initial_state: Optional[FomState] = None
    final_state: Optional[FomState] = None

    def diagnostics_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(d) for d in self.diagnostics])


def vortex_merger_vorticity(x, y):
    """Two co-rotating Gaussian vortices."""
    (x1, y1), (x2, y2) = VORTEX_CENTERS
    return np.exp(-np.pi * ((x - x1) ** 2 + (y - y1) ** 2)) + np.exp(-np.pi * ((x - x2) ** 2 + (y - y2) ** 2))


def vortex_merger_ic(grid: StructuredGrid) -> ScalarField:
    two_pi = 2.0 * np.pi
    if not (math.isclose(grid.lx, two_pi, rel_tol=1e-12) and math.isclose(grid.ly, two_pi, rel_tol=1e-12)):
        raise ConfigError(f"Vortex merger needs a 2*pi x 2*pi domain, got {grid.lx} x {grid.ly}")
    return sample_function(grid, vortex_merger_vorticity, FieldKind.VORTICITY)


def forcing_field_F1(grid: StructuredGrid) -> ScalarField:
    """Spatial part of the Taylor-Green source: cos(3x) cos(3y)."""
    return sample_function(grid, lambda x, y: np.cos(3.0 * x) * np.cos(3.0 * y), FieldKind.FORCING)


def forcing_amplitude_F2(t: float, re: float, gamma: float) -> float:
    """Temporal part of the source: -gamma exp(-t / Re)."""
    return -gamma * math.exp(-t / re)


def enstrophy(omega: ScalarField) -> float:
    return l2_inner(omega, omega)


def total_vorticity(omega: ScalarField) -> float:
    return float(np.sum(omega.values) * omega.grid.cell_volume)


class FomSolver:
    """Holds the time-independent operators of one FOM configuration."""

    def __init__(self, cfg: FomConfig):
        cfg.validate()
        self.cfg = cfg
        self.grid = cfg.grid
        self.poisson = assemble_laplacian_dirichlet(self.grid)
        self.forcing = forcing_field_F1(self.grid) if cfg.gamma != 0.0 else None
        self.flux_mode = FluxMode(cfg.flux_mode)

    def solve_poisson(self, omega: ScalarField, psi_guess: ScalarField = None, step: int = 0) -> ScalarField:
        """Solve -Lap(psi) = omega with psi = 0 on the boundary."""
        x0 = None if psi_guess is None else psi_guess.values
        try:
            values = cg_solve(self.poisson, omega.values, self.cfg.tol, self.cfg.maxit, x0=x0)
        except IterativeSolverError as exc:
            raise SolverStageError("poisson", step, exc) from exc
        return ScalarField(self.grid, values, FieldKind.STREAM_FUNCTION)

    def initial_state(self, omega0: ScalarField = None) -> FomState:
        omega0 = vortex_merger_ic(self.grid) if omega0 is None else omega0
        omega0 = ScalarField(self.grid, omega0.values, FieldKind.VORTICITY)
        return FomState(0, omega0, self.solve_poisson(omega0))

    def step(self, state: FomState) -> FomState:
        cfg = self.cfg
        n_next = state.n + 1
        t_next = cfg.time_at(n_next)

        flux = stream_to_flux(state.psi, self.flux_mode)
        H = assemble_helmholtz_neumann(cfg.dt, cfg.re, flux)
        rhs = state.omega.values / cfg.dt
        if self.forcing is not None:
            rhs = rhs + forcing_amplitude_F2(t_next, cfg.re, cfg.gamma) * self.forcing.values
        try:
            omega_values = bicgstab_solve(H, rhs, cfg.tol, cfg.maxit, x0=state.omega.values)
        except IterativeSolverError as exc:
            raise SolverStageError("vorticity", n_next, exc) from exc
        omega = ScalarField(self.grid, omega_values, FieldKind.VORTICITY)
        psi = self.solve_poisson(omega, state.psi, n_next)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "step %d: vorticity residual %.2e, poisson residual %.2e, max flux divergence %.2e (max flux %.2e)",
                n_next,
                relative_residual(H, omega.values, rhs),
                relative_residual(self.poisson, psi.values, omega.values),
                np.abs(flux.net_outflow()).max(),
                flux.max_abs(),
            )
        return FomState(n_next, omega, psi)


def fom_step(state: FomState, cfg: FomConfig) -> FomState:
    """Advance one BDF1 step (builds the operators; use FomSolver for loops)."""
    return FomSolver(cfg).step(state)


def fom_run(cfg: FomConfig, omega0: ScalarField = None) -> FomRunResult:
    """
    March from t0 to t_end recording (omega, psi) every snapshot_stride steps.

    Snapshots live in (t0, t_end]; diagnostics cover every step including t0.
    """
    started = time.perf_counter()
    solver = FomSolver(cfg)
    params = cfg.parameters
    omega_set = SnapshotSet(solver.grid, FieldKind.VORTICITY)
    psi_set = SnapshotSet(solver.grid, FieldKind.STREAM_FUNCTION)
    logger.info(
        "FOM run Re=%g gamma=%g on %dx%d, %d steps of dt=%g",
        cfg.re, cfg.gamma, cfg.nx, cfg.ny, cfg.n_steps, cfg.dt,
    )

    state = solver.initial_state(omega0)
    initial = state
    diagnostics = [FomDiagnostics(0, cfg.t0, enstrophy(state.omega), total_vorticity(state.omega), 0.0)]
    for _ in range(cfg.n_steps):
        tick = time.perf_counter()
        state = solver.step(state)
        t = cfg.time_at(state.n)
        diagnostics.append(
            FomDiagnostics(state.n, t, enstrophy(state.omega), total_vorticity(state.omega), time.perf_counter() - tick)
        )
        if state.n % cfg.snapshot_stride == 0:
            omega_set.append(state.omega, params, t)
            psi_set.append(state.psi, params, t)

    wall = time.perf_counter() - started
    logger.info("FOM run finished: %d snapshots in %.2f s", len(omega_set), wall)
    return FomRunResult(cfg, omega_set, psi_set, diagnostics, wall, initial, state)
