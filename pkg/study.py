"""
Offline/online study pipeline: training FOM sweeps, global POD bases,
reduced operators, ROM test runs and FOM-vs-ROM metrics.
"""

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

try:
    import tomllib
except ImportError:  # Python < 3.11
    tomllib = None

from fom_solver import ConfigError, FomConfig, FomRunResult, fom_run, vortex_merger_ic
from fv_grid import FieldKind
from fv_operators import curl_to_velocity
from metrics import MetricsRecord, compare_runs, metrics_frame, summarize
from pod import PodBasis, SnapshotSet, build_basis, projection_error
from rom import ReducedOperators, operator_fingerprint, project_operators, rom_run
import snapshot_io

logger = logging.getLogger(__name__)


class StudyStageError(RuntimeError):
    """A study stage failed; carries the stage name and parameter point."""

    def __init__(self, stage: str, point=None, cause: Exception = None):
        where = f" at {point.label}" if point is not None else ""
        super().__init__(f"{stage}{where}: {cause}")
        self.stage = stage
        self.point = point
        self.cause = cause


class StudyKind(str, Enum):
    TIME_RECONSTRUCTION = "time-reconstruction"
    RE_SWEEP = "re-sweep"
    GAMMA_SWEEP = "gamma-sweep"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ParameterPoint:
    re: float
    gamma: float = 0.0

    @property
    def label(self) -> str:
        return f"re{self.re:g}_gamma{self.gamma:g}"

    @property
    def vector(self) -> tuple:
        return (float(self.re), float(self.gamma))

    @classmethod
    def from_value(cls, value) -> "ParameterPoint":
        if isinstance(value, ParameterPoint):
            return value
        if isinstance(value, dict):
            return cls(float(value["re"]), float(value.get("gamma", 0.0)))
        re, gamma = value
        return cls(float(re), float(gamma))


def _default_workers() -> int:
    return int(os.getenv("VORTEX_ROM_WORKERS", "1"))


@dataclass
class StudyConfig:
    kind: StudyKind = StudyKind.CUSTOM
    fom: FomConfig = field(default_factory=FomConfig)
    training: List[ParameterPoint] = field(default_factory=list)
    tests: List[ParameterPoint] = field(default_factory=list)
    threshold_omega: float = 1e-5
    threshold_psi: float = 1e-5
    modes_omega: Optional[int] = None
    modes_psi: Optional[int] = None
    output_dir: str = "vortex_rom_out"
    compare_fom: bool = True
    workers: int = field(default_factory=_default_workers)
    field_times: List[float] = field(default_factory=list)
    eig_method: str = "lapack"

    def __post_init__(self):
        self.kind = StudyKind(self.kind)
        self.training = [ParameterPoint.from_value(p) for p in self.training]
        self.tests = [ParameterPoint.from_value(p) for p in self.tests]

    def validate(self):
        self.fom.validate()
        if not self.training:
            raise ConfigError("A study needs at least one training parameter")
        for name in ("threshold_omega", "threshold_psi"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")
        for point in self.training + self.tests:
            if point.re <= 0:
                raise ConfigError(f"Re must be positive, got {point.re}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def fom_for(self, point: ParameterPoint) -> FomConfig:
        return self.fom.with_parameters(point.re, point.gamma)

    def role(self, point: ParameterPoint) -> str:
        """'training', 'interpolatory' or 'extrapolatory' relative to the training range."""
        if point in self.training:
            return "training"
        for axis in range(2):
            values = [p.vector[axis] for p in self.training]
            if not min(values) <= point.vector[axis] <= max(values):
                return "extrapolatory"
        return "interpolatory"

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    # configuration files ------------------------------------------------------

    @classmethod
    def preset(cls, kind, **overrides) -> "StudyConfig":
        """Benchmark setups at desk scale (128^2 grid)."""
        kind = StudyKind(kind)
        modes = {}
        if kind is StudyKind.TIME_RECONSTRUCTION:
            fom = FomConfig(re=800.0, gamma=0.0, t_end=20.0, nx=128, ny=128)
            training = tests = [ParameterPoint(800.0, 0.0)]
        elif kind is StudyKind.RE_SWEEP:
            fom = FomConfig(re=800.0, gamma=0.09, t_end=10.0, nx=128, ny=128)
            training = [ParameterPoint(re, 0.09) for re in (200.0, 400.0, 600.0, 800.0)]
            tests = [ParameterPoint(re, 0.09) for re in (100.0, 500.0, 1000.0)]
        elif kind is StudyKind.GAMMA_SWEEP:
            fom = FomConfig(re=800.0, gamma=0.09, t_end=10.0, nx=128, ny=128)
            training = [ParameterPoint(800.0, g) for g in (0.06, 0.07, 0.08, 0.09)]
            tests = [ParameterPoint(800.0, g) for g in (0.05, 0.075, 0.1)]
            # basis sizes fixed rather than thresholded
            modes = {"modes_omega": 12, "modes_psi": 6}
        else:
            fom = FomConfig()
            training = tests = [ParameterPoint(fom.re, fom.gamma)]
        config = cls(kind=kind, fom=fom, training=list(training), tests=list(tests), **modes)
        for key, value in overrides.items():
            setattr(config, key, value)
        config.__post_init__()
        return config

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        data = dict(data)
        try:
            kind = StudyKind(data.pop("kind", StudyKind.CUSTOM.value))
            config = cls.preset(kind)
            if "fom" in data:
                fom_data = data.pop("fom")
                unknown = set(fom_data) - {f.name for f in fields(FomConfig)}
                if unknown:
                    raise ConfigError(f"Unknown fom settings: {sorted(unknown)}")
                config.fom = FomConfig(**{**config.fom.to_dict(), **fom_data})
            unknown = set(data) - {f.name for f in fields(cls)}
            if unknown:
                raise ConfigError(f"Unknown study settings: {sorted(unknown)}")
            for key, value in data.items():
                setattr(config, key, value)
            config.__post_init__()
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Malformed study settings: {exc}") from exc
        return config

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"Cannot read {path}: {exc}") from exc
        if path.suffix == ".toml":
            if tomllib is None:
                raise ConfigError("TOML configs need Python 3.11+ (tomllib)")
            try:
                data = tomllib.loads(text)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path} is not valid TOML: {exc}") from exc
        else:
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a table of settings")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "fom": self.fom.to_dict(),
            "training": [asdict(p) for p in self.training],
            "tests": [asdict(p) for p in self.tests],
            "threshold_omega": self.threshold_omega,
            "threshold_psi": self.threshold_psi,
            "modes_omega": self.modes_omega,
            "modes_psi": self.modes_psi,
            "output_dir": self.output_dir,
            "compare_fom": self.compare_fom,
            "workers": self.workers,
            "field_times": list(self.field_times),
            "eig_method": self.eig_method,
        }


@dataclass
class OfflineResult:
    omega_snapshots: SnapshotSet
    psi_snapshots: SnapshotSet
    basis_omega: PodBasis
    basis_psi: PodBasis
    operators: ReducedOperators
    training_runs: Dict[ParameterPoint, FomRunResult] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    residual_energy: Dict[str, float] = field(default_factory=dict)


@dataclass
class TestOutcome:
    point: ParameterPoint
    role: str
    status: str = "ok"
    stage: Optional[str] = None
    error: Optional[str] = None
    records: List[MetricsRecord] = field(default_factory=list)
    online_seconds: float = 0.0
    online_seconds_per_step: float = 0.0
    fom_seconds: Optional[float] = None

    @property
    def speedup(self) -> Optional[float]:
        if self.fom_seconds is None or self.online_seconds <= 0:
            return None
        return self.fom_seconds / self.online_seconds

    def summary(self) -> dict:
        entry = {
            "label": self.point.label,
            "re": self.point.re,
            "gamma": self.point.gamma,
            "role": self.role,
            "status": self.status,
            "online_seconds": self.online_seconds,
            "online_seconds_per_step": self.online_seconds_per_step,
            "fom_seconds": self.fom_seconds,
            "speedup": self.speedup,
        }
        if self.status != "ok":
            entry.update(stage=self.stage, error=self.error)
        entry.update(summarize(self.records))
        return entry


@dataclass
class StudyReport:
    config: StudyConfig
    offline: OfflineResult
    outcomes: List[TestOutcome]

    def manifest(self) -> dict:
        offline = self.offline
        return {
            "format": "SFVROM1",
            "version": snapshot_io.FORMAT_VERSION,
            "config": self.config.to_dict(),
            "snapshots": {"omega": len(offline.omega_snapshots), "psi": len(offline.psi_snapshots)},
            "modes": {"omega": offline.basis_omega.n_modes, "psi": offline.basis_psi.n_modes},
            "operator_fingerprint": offline.operators.fingerprint,
            "timings": offline.timings,
            "residual_energy": offline.residual_energy,
            "tests": [o.summary() for o in self.outcomes],
            "files": snapshot_io.list_files(self.config.out),
        }


# offline phase -----------------------------------------------------------------


def _run_fom(cfg: FomConfig) -> FomRunResult:
    return fom_run(cfg)


def run_training(cfg: StudyConfig) -> Dict[ParameterPoint, FomRunResult]:
    """Run the FOM at every training point, in worker processes when workers > 1."""
    runs = {}
    if cfg.workers > 1 and len(cfg.training) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cfg.training))) as pool:
            futures = {point: pool.submit(_run_fom, cfg.fom_for(point)) for point in cfg.training}
            for point, future in futures.items():
                try:
                    runs[point] = future.result()
                except Exception as exc:
                    for pending in futures.values():
                        pending.cancel()
                    raise StudyStageError("training FOM", point, exc) from exc
    else:
        for point in cfg.training:
            try:
                runs[point] = _run_fom(cfg.fom_for(point))
            except Exception as exc:
                raise StudyStageError("training FOM", point, exc) from exc
    return runs


def _write_fom_outputs(out: Path, point: ParameterPoint, run: FomRunResult):
    run_dir = out / "fom" / point.label
    run_dir.mkdir(parents=True, exist_ok=True)
    run.diagnostics_frame().to_csv(run_dir / "diagnostics.csv", index=False)
    if run.initial_state is not None:
        u0, v0 = curl_to_velocity(run.initial_state.psi)
        snapshot_io.write_fields(
            run_dir / "initial_state.bin",
            [run.initial_state.omega, run.initial_state.psi, u0, v0],
            ["omega", "psi", "u", "v"],
            [run.config.t0] * 4,
            point.vector,
        )


def write_training_snapshots(cfg: StudyConfig, runs: Dict[ParameterPoint, FomRunResult]):
    """Pool the training runs into one global set per variable and persist them."""
    out = cfg.out
    omega_set = SnapshotSet.pool(runs[p].omega for p in cfg.training)
    psi_set = SnapshotSet.pool(runs[p].psi for p in cfg.training)
    snapshot_io.write_snapshot_set(out / "snapshots" / "omega.bin", omega_set)
    snapshot_io.write_snapshot_set(out / "snapshots" / "psi.bin", psi_set)
    for point, run in runs.items():
        _write_fom_outputs(out, point, run)
    return omega_set, psi_set


def read_training_snapshots(cfg: StudyConfig):
    grid = cfg.fom.grid
    try:
        omega_set = snapshot_io.read_snapshot_set(cfg.out / "snapshots" / "omega.bin", grid, FieldKind.VORTICITY)
        psi_set = snapshot_io.read_snapshot_set(cfg.out / "snapshots" / "psi.bin", grid, FieldKind.STREAM_FUNCTION)
    except (OSError, ValueError) as exc:
        raise StudyStageError("load snapshots", None, exc) from exc
    return omega_set, psi_set


def build_offline(cfg: StudyConfig, runs: Dict[ParameterPoint, FomRunResult]) -> OfflineResult:
    """Pool snapshots, build the global bases and project the operators; persist everything."""
    timings = {"training_fom_seconds": sum(r.wall_seconds for r in runs.values())}
    omega_set, psi_set = write_training_snapshots(cfg, runs)

    started = time.perf_counter()
    basis_omega, basis_psi = build_bases(cfg, omega_set, psi_set)
    timings["pod_seconds"] = time.perf_counter() - started
    started = time.perf_counter()
    operators = build_operators(cfg, basis_omega, basis_psi)
    timings["projection_seconds"] = time.perf_counter() - started

    residual = {}
    for basis, snapshots in ((basis_omega, omega_set), (basis_psi, psi_set)):
        name = basis.kind.value
        residual[name] = projection_error(snapshots, basis)
        logger.info("%s basis: %d modes, residual snapshot energy %.3e", name, basis.n_modes, residual[name])
    return OfflineResult(omega_set, psi_set, basis_omega, basis_psi, operators, dict(runs), timings, residual)


def build_bases(cfg: StudyConfig, omega_set: SnapshotSet, psi_set: SnapshotSet):
    try:
        basis_omega = _basis(omega_set, cfg.threshold_omega, cfg.modes_omega, cfg.eig_method)
        basis_psi = _basis(psi_set, cfg.threshold_psi, cfg.modes_psi, cfg.eig_method)
    except Exception as exc:
        raise StudyStageError("POD", None, exc) from exc
    out = cfg.out
    for basis in (basis_omega, basis_psi):
        name = basis.kind.value
        snapshot_io.write_basis(out / "basis" / f"{name}.bin", basis)
        (out / "spectra").mkdir(parents=True, exist_ok=True)
        basis.spectrum_frame().to_csv(out / "spectra" / f"{name}.csv", index=False)
    return basis_omega, basis_psi


def _basis(snapshots: SnapshotSet, threshold: float, count: Optional[int], eig_method: str) -> PodBasis:
    if count is not None:
        return build_basis(snapshots, fixed_count=count, eig_method=eig_method)
    return build_basis(snapshots, threshold=threshold, eig_method=eig_method)


def build_operators(cfg: StudyConfig, basis_omega: PodBasis, basis_psi: PodBasis) -> ReducedOperators:
    try:
        operators = project_operators(basis_omega, basis_psi, cfg.fom)
    except Exception as exc:
        raise StudyStageError("projection", None, exc) from exc
    snapshot_io.write_operators(cfg.out / "operators" / "operators.bin", operators, basis_omega.grid)
    return operators


def run_offline(cfg: StudyConfig) -> OfflineResult:
    cfg.validate()
    return build_offline(cfg, run_training(cfg))


def load_offline(cfg: StudyConfig) -> OfflineResult:
    """Reload a persisted offline phase; refuses data from another grid or basis."""
    out = cfg.out
    grid = cfg.fom.grid
    omega_set, psi_set = read_training_snapshots(cfg)
    try:
        basis_omega = snapshot_io.read_basis(out / "basis" / "omega.bin", grid)
        basis_psi = snapshot_io.read_basis(out / "basis" / "psi.bin", grid)
        operators = snapshot_io.read_operators(
            out / "operators" / "operators.bin",
            grid,
            operator_fingerprint(basis_omega, basis_psi, cfg.fom.flux_mode),
        )
    except (OSError, ValueError) as exc:
        raise StudyStageError("load offline data", None, exc) from exc

    timings, residual = {}, {}
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        try:
            manifest = snapshot_io.read_manifest(manifest_path)
        except ValueError as exc:
            logger.warning("Ignoring unreadable %s: %s", manifest_path, exc)
        else:
            if manifest.get("operator_fingerprint") == operators.fingerprint:
                timings = dict(manifest.get("timings", {}))
                residual = dict(manifest.get("residual_energy", {}))
            else:
                logger.warning("%s describes other operators; offline timings not restored", manifest_path)
    return OfflineResult(omega_set, psi_set, basis_omega, basis_psi, operators, {}, timings, residual)


# online phase ------------------------------------------------------------------


def _write_field_comparison(path: Path, fom: FomRunResult, rom, times: List[float]):
    fields_out, tags, stamps = [], [], []
    for t in times:
        matches = [i for i, s in enumerate(rom.times) if abs(s - t) < 1e-9]
        if not matches:
            logger.warning("No snapshot at t=%g; skipping field export", t)
            continue
        i = matches[0]
        omega_h, omega_r = fom.omega[i], rom.omega_at(i)
        psi_h, psi_r = fom.psi[i], rom.psi_at(i)
        omega_d = omega_h.with_values(abs(omega_h.values - omega_r.values))
        psi_d = psi_h.with_values(abs(psi_h.values - psi_r.values))
        fields_out += [omega_h, omega_r, omega_d, psi_h, psi_r, psi_d]
        tags += ["omega_h", "omega_r", "omega_d", "psi_h", "psi_r", "psi_d"]
        stamps += [t] * 6
    if fields_out:
        snapshot_io.write_fields(path, fields_out, tags, stamps)


def run_test(cfg: StudyConfig, offline: OfflineResult, point: ParameterPoint, compare: bool) -> TestOutcome:
    """Run the ROM at one test point and, if asked, the FOM reference; never raises."""
    outcome = TestOutcome(point, cfg.role(point))
    test_dir = cfg.out / "tests" / point.label
    test_dir.mkdir(parents=True, exist_ok=True)
    fom_cfg = cfg.fom_for(point)
    stage = "ROM"
    try:
        omega0 = vortex_merger_ic(fom_cfg.grid)
        rom = rom_run(offline.operators, offline.basis_omega, offline.basis_psi, omega0, fom_cfg)
        outcome.online_seconds = rom.online_seconds
        outcome.online_seconds_per_step = rom.seconds_per_step
        rom.coefficients_frame().to_csv(test_dir / "coefficients.csv", index=False)
        if compare:
            stage = "reference FOM"
            reference = offline.training_runs.get(point)
            if reference is None or reference.config != fom_cfg:
                reference = fom_run(fom_cfg)
            outcome.fom_seconds = reference.wall_seconds
            stage = "metrics"
            outcome.records = compare_runs(reference, rom)
            metrics_frame(outcome.records).to_csv(test_dir / "metrics.csv", index=False)
            if cfg.field_times:
                _write_field_comparison(test_dir / "fields.bin", reference, rom, cfg.field_times)
    except Exception as exc:
        logger.error("Test %s failed during %s: %s", point.label, stage, exc)
        outcome.status, outcome.stage, outcome.error = "failed", stage, str(exc)
    return outcome


def run_online(cfg: StudyConfig, offline: OfflineResult, compare: bool = None) -> List[TestOutcome]:
    compare = cfg.compare_fom if compare is None else compare
    return [run_test(cfg, offline, point, compare) for point in cfg.tests]


def run_study(cfg: StudyConfig) -> StudyReport:
    """Full offline + online study; writes the manifest, CSVs and the spreadsheet report."""
    from study_report import StudyReportWorkbook

    cfg.validate()
    logger.info("Study %s: %d training points, %d tests", cfg.kind.value, len(cfg.training), len(cfg.tests))
    offline = run_offline(cfg)
    outcomes = run_online(cfg, offline)
    report = StudyReport(cfg, offline, outcomes)
    try:
        StudyReportWorkbook(report, cfg.out / "report.xlsx").run()
    except Exception as exc:
        raise StudyStageError("report", None, exc) from exc
    snapshot_io.write_manifest(cfg.out / "manifest.json", report.manifest())
    return report
