"""Rendering storage-efficiency and image-quality reports.

Tables come in two flavors: aligned text for terminals and CSV for
pipelines. Sizes print in MB below one gigabyte and GB above; percent
deltas are always signed ("-57.50%", "+3.20%").
"""

from __future__ import annotations

import csv
import io
import math

from .quality import QualityReport
from .store import EfficiencyReport

_GB = 1024**3
_MB = 1024**2


def human_size(num_bytes: int) -> str:
    if num_bytes >= _GB:
        return f"{num_bytes / _GB:.2f} GB"
    return f"{num_bytes / _MB:.2f} MB"


def signed_percent(value: float) -> str:
    return f"{value:+.2f}%"


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return "\n".join(lines)


def _csv(headers: list[str], rows: list[list[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    return buffer.getvalue().rstrip("\n")


def render_efficiency(
    report: EfficiencyReport, per_level: bool = False, as_csv: bool = False
) -> str:
    """Per-series (optionally per-level) byte accounting with signed deltas."""
    if per_level:
        headers = ["Series", "Format", "Level", "Size", "Change"]
        rows = []
        for entry in report.series:
            for idx, cumulative in enumerate(entry.level_bytes):
                change = (
                    0.0
                    if entry.original_bytes == 0
                    else 100.0 * (cumulative - entry.original_bytes) / entry.original_bytes
                )
                rows.append(
                    [
                        entry.series_id[:12],
                        entry.format.value,
                        str(idx + 1),
                        human_size(cumulative) if not as_csv else str(cumulative),
                        signed_percent(change),
                    ]
                )
        return _csv(headers, rows) if as_csv else _table(headers, rows)

    headers = ["Series", "Format", "Slices", "Original", "Stored", "Change"]
    rows = []
    for entry in report.series:
        rows.append(
            [
                entry.series_id[:12],
                entry.format.value,
                str(entry.num_slices),
                human_size(entry.original_bytes) if not as_csv else str(entry.original_bytes),
                human_size(entry.stored_bytes) if not as_csv else str(entry.stored_bytes),
                signed_percent(entry.percent_change),
            ]
        )
    if report.series:
        rows.append(
            [
                "TOTAL",
                "",
                str(sum(e.num_slices for e in report.series)),
                human_size(report.original_bytes) if not as_csv else str(report.original_bytes),
                human_size(report.stored_bytes) if not as_csv else str(report.stored_bytes),
                signed_percent(report.percent_change),
            ]
        )
    return _csv(headers, rows) if as_csv else _table(headers, rows)


def render_quality(report: QualityReport, as_csv: bool = False) -> str:
    """Per-level SSIM and PSNR table; infinite PSNRs are counted, not averaged."""
    headers = ["Level", "Dims", "SSIM", "PSNR (dB)", "Infinite PSNR"]
    rows = []
    for lq in report.levels:
        if lq.psnr_finite_mean is None:
            psnr_cell = "inf"
        else:
            psnr_cell = f"{lq.psnr_finite_mean:.2f} ± {lq.psnr_finite_sd:.2f}"
        rows.append(
            [
                str(lq.level),
                f"{lq.rows}x{lq.cols}",
                f"{lq.ssim_mean:.2f} ± {lq.ssim_sd:.2f}",
                psnr_cell,
                f"{lq.psnr_infinite_count}/{lq.slice_count}",
            ]
        )
    if as_csv:
        headers = [
            "level", "rows", "cols", "slice_count",
            "ssim_mean", "ssim_sd", "psnr_finite_mean", "psnr_finite_sd",
            "psnr_infinite_count",
        ]
        rows = [
            [
                str(lq.level), str(lq.rows), str(lq.cols), str(lq.slice_count),
                repr(lq.ssim_mean), repr(lq.ssim_sd),
                "" if lq.psnr_finite_mean is None else repr(lq.psnr_finite_mean),
                ""
                if lq.psnr_finite_sd is None or math.isnan(lq.psnr_finite_sd)
                else repr(lq.psnr_finite_sd),
                str(lq.psnr_infinite_count),
            ]
            for lq in report.levels
        ]
        return _csv(headers, rows)
    return _table(headers, rows)
