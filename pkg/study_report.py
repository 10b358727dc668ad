"""
Study report workbook: a summary sheet with one row per test parameter,
each linked to its own sheet of metric time series, plus the POD spectra.
"""

import logging
from pathlib import Path

import openpyxl
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

logger = logging.getLogger(__name__)

HEADER_FONT = Font(bold=True, color="FFFFFF")
HEADER_FILL = PatternFill(fill_type="solid", fgColor="305496")
FAILED_FILL = PatternFill(fill_type="solid", fgColor="F8CBAD")

SUMMARY_COLUMNS = [
    ("Test", "label"),
    ("Re", "re"),
    ("gamma", "gamma"),
    ("Role", "role"),
    ("Status", "status"),
    ("max E_psi [%]", "max_e_psi"),
    ("max E_omega [%]", "max_e_omega"),
    ("max |E_e| [%]", "max_abs_e_enstrophy"),
    ("Online [s]", "online_seconds"),
    ("FOM [s]", "fom_seconds"),
    ("Speed-up", "speedup"),
]

METRIC_COLUMNS = [
    ("t", "t"),
    ("E_psi [%]", "e_psi"),
    ("E_omega [%]", "e_omega"),
    ("E_e [%]", "e_enstrophy"),
    ("e_fom", "enstrophy_fom"),
    ("e_rom", "enstrophy_rom"),
    ("max diff psi", "max_diff_psi"),
    ("max diff omega", "max_diff_omega"),
]


class StudyReportWorkbook:
    """Writes report.xlsx for a finished StudyReport."""

    def __init__(self, report, output_file):
        self.report = report
        self.output_file = Path(output_file)
        self.wb = None
        self.summary_sheet = None
        self.test_sheets = {}

    def _write_header(self, sheet, row, titles):
        for col, title in enumerate(titles, start=1):
            cell = sheet.cell(row, col, title)
            cell.font = HEADER_FONT
            cell.fill = HEADER_FILL
            cell.alignment = Alignment(horizontal="center", vertical="center", wrap_text=True)

    def _fit_columns(self, sheet, width=14):
        for col in range(1, sheet.max_column + 1):
            sheet.column_dimensions[get_column_letter(col)].width = width

    def create_summary_sheet(self):
        self.wb = openpyxl.Workbook()
        sheet = self.wb.active
        sheet.title = "Summary"
        offline = self.report.offline
        cfg = self.report.config
        sheet.cell(1, 1, f"Study: {cfg.kind.value}").font = Font(bold=True, size=14)
        sheet.cell(2, 1, f"Grid {cfg.fom.nx}x{cfg.fom.ny}, dt={cfg.fom.dt:g}, t in ({cfg.fom.t0:g}, {cfg.fom.t_end:g}]")
        sheet.cell(3, 1, f"Snapshots: {len(offline.omega_snapshots)}")
        sheet.cell(4, 1, f"Modes: omega {offline.basis_omega.n_modes}, psi {offline.basis_psi.n_modes}")
        self._write_header(sheet, 6, [title for title, _ in SUMMARY_COLUMNS] + ["Reference"])
        self.summary_sheet = sheet

    def add_test_sheets(self):
        for outcome in self.report.outcomes:
            # sheet titles are limited to 31 characters
            title = outcome.point.label[:31]
            sheet = self.wb.create_sheet(title=title)
            sheet.cell(1, 1, f"Re={outcome.point.re:g}, gamma={outcome.point.gamma:g} ({outcome.role})").font = Font(bold=True)
            if outcome.status != "ok":
                sheet.cell(2, 1, f"Failed during {outcome.stage}: {outcome.error}").fill = FAILED_FILL
            self._write_header(sheet, 3, [title for title, _ in METRIC_COLUMNS])
            for row, record in enumerate(outcome.records, start=4):
                for col, (_, attr) in enumerate(METRIC_COLUMNS, start=1):
                    sheet.cell(row, col, getattr(record, attr)).number_format = "0.000E+00" if col > 1 else "0.00"
            self._fit_columns(sheet)
            self.test_sheets[outcome.point] = title

    def add_spectra_sheet(self):
        sheet = self.wb.create_sheet(title="Spectra")
        self._write_header(sheet, 1, ["k", "lambda omega", "normalized", "lambda psi", "normalized"])
        spectra = [b.spectrum_frame() for b in (self.report.offline.basis_omega, self.report.offline.basis_psi)]
        for offset, frame in zip((2, 4), spectra):
            for row, (k, lam, norm) in enumerate(zip(frame["k"], frame["lambda"], frame["lambda_normalized"]), start=2):
                sheet.cell(row, 1, int(k))
                sheet.cell(row, offset, float(lam))
                sheet.cell(row, offset + 1, float(norm))
        self._fit_columns(sheet)

    def add_hyperlinks(self):
        sheet = self.summary_sheet
        link_col = len(SUMMARY_COLUMNS) + 1
        for row, outcome in enumerate(self.report.outcomes, start=7):
            summary = outcome.summary()
            for col, (_, key) in enumerate(SUMMARY_COLUMNS, start=1):
                value = summary.get(key)
                sheet.cell(row, col, value if value is not None else "N/A")
            if outcome.status != "ok":
                for col in range(1, link_col + 1):
                    sheet.cell(row, col).fill = FAILED_FILL
            title = self.test_sheets[outcome.point]
            sheet.cell(row, link_col, f'=HYPERLINK("#\'{title}\'!A1", "View Details")')
        self._fit_columns(sheet)

    def save_workbook(self):
        self.output_file.parent.mkdir(parents=True, exist_ok=True)
        self.wb.save(self.output_file)
        logger.info("Report written to %s", self.output_file)

    def run(self):
        self.create_summary_sheet()
        self.add_test_sheets()
        self.add_spectra_sheet()
        self.add_hyperlinks()
        self.save_workbook()
        return self.output_file
