"""
FOM-vs-ROM error metrics.
"""

import logging
from dataclasses import asdict, dataclass
from typing import List

import numpy as np
import pandas as pd

from fom_solver import FomRunResult, enstrophy
from fv_grid import ScalarField, l2_norm
from rom import RomRunResult

logger = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    """The reference quantity is zero, so a relative metric has no value."""


def error_relative(fom: ScalarField, rom: ScalarField) -> float:
    """Relative L2 error in percent: 100 ||fom - rom|| / ||fom||."""
    reference = l2_norm(fom)
    if reference == 0.0:
        raise UndefinedMetricError("FOM field has zero L2 norm")
    return 100.0 * l2_norm(fom - rom) / reference


def error_enstrophy(e_fom: float, e_rom: float) -> float:
    """Signed relative enstrophy error in percent."""
    if e_fom == 0.0:
        raise UndefinedMetricError("FOM enstrophy is zero")
    return 100.0 * (e_fom - e_rom) / e_fom


def max_relative_difference(fom: ScalarField, rom: ScalarField) -> float:
    """max |fom - rom| / max |fom|."""
    fom.grid.require_same(rom.grid)
    peak = np.abs(fom.values).max()
    if peak == 0.0:
        raise UndefinedMetricError("FOM field is identically zero")
    return float(np.abs(fom.values - rom.values).max() / peak)


@dataclass
class MetricsRecord:
    t: float
    e_psi: float
    e_omega: float
    e_enstrophy: float
    enstrophy_fom: float
    enstrophy_rom: float
    max_diff_psi: float
    max_diff_omega: float


def compare_runs(fom: FomRunResult, rom: RomRunResult) -> List[MetricsRecord]:
    """Metrics at every common snapshot time."""
    if len(fom.omega) != len(rom.times):
        raise ValueError(f"FOM recorded {len(fom.omega)} snapshots but ROM recorded {len(rom.times)}")
    records = []
    for index, t in enumerate(rom.times):
        if not np.isclose(fom.omega.times[index], t, rtol=0.0, atol=1e-9):
            raise ValueError(f"Snapshot clocks disagree: FOM t={fom.omega.times[index]}, ROM t={t}")
        omega_h, psi_h = fom.omega[index], fom.psi[index]
        omega_r, psi_r = rom.omega_at(index), rom.psi_at(index)
        e_h, e_r = enstrophy(omega_h), enstrophy(omega_r)
        records.append(
            MetricsRecord(
                t=t,
                e_psi=error_relative(psi_h, psi_r),
                e_omega=error_relative(omega_h, omega_r),
                e_enstrophy=error_enstrophy(e_h, e_r),
                enstrophy_fom=e_h,
                enstrophy_rom=e_r,
                max_diff_psi=max_relative_difference(psi_h, psi_r),
                max_diff_omega=max_relative_difference(omega_h, omega_r),
            )
        )
    return records


def metrics_frame(records: List[MetricsRecord]) -> pd.DataFrame:
    columns = [f for f in MetricsRecord.__dataclass_fields__]
    return pd.DataFrame([asdict(r) for r in records], columns=columns)


def summarize(records: List[MetricsRecord]) -> dict:
    """Peak values over the time window."""
    if not records:
        return {}
    frame = metrics_frame(records)
    return {
        "max_e_psi": float(frame["e_psi"].max()),
        "max_e_omega": float(frame["e_omega"].max()),
        "max_abs_e_enstrophy": float(frame["e_enstrophy"].abs().max()),
        "max_diff_psi": float(frame["max_diff_psi"].max()),
        "max_diff_omega": float(frame["max_diff_omega"].max()),
    }
