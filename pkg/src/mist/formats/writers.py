"""Serialising a decoded series into the files of a target format."""

from __future__ import annotations

import json
import re
from pathlib import Path

from .dicom import write_dicom_slice
from .metadata import DecodedSeries, FormatKind
from .nifti import write_nifti_bytes
from .raster import write_png_bytes

_SAFE = re.compile(r"[^A-Za-z0-9._-]+")


def safe_stem(series_id: str) -> str:
    """Series identifier reduced to a filesystem-safe stem."""
    stem = _SAFE.sub("_", str(series_id)).strip("._") or "series"
    return stem[:64]


def _metadata_sidecar(series: DecodedSeries) -> bytes:
    doc = json.dumps(series.metadata.to_json_dict(), indent=2, sort_keys=True)
    return (doc + "\n").encode("utf-8")


def write_series_payloads(series: DecodedSeries, target: FormatKind) -> list[tuple[str, bytes]]:
    """Named file payloads for a series in the target format.

    The metadata document must already be mapped to ``target``; geometry-poor
    targets get a JSON sidecar so nothing is lost on disk.
    """
    target = FormatKind(target)
    if series.metadata.format != target:
        raise ValueError(
            f"metadata speaks {series.metadata.format.value}, expected {target.value}"
        )
    stem = safe_stem(series.metadata.tags.get("series_id", "series"))

    if target is FormatKind.DICOM:
        return [
            (f"{index:05d}.dcm", write_dicom_slice(series, index))
            for index in range(series.num_slices)
        ]
    if target is FormatKind.NIFTI:
        return [
            (f"{stem}.nii", write_nifti_bytes(series)),
            (f"{stem}.metadata.json", _metadata_sidecar(series)),
        ]
    payloads = [
        (f"{index:05d}.png", write_png_bytes(plane))
        for index, plane in enumerate(series.planes)
    ]
    payloads.append((f"{stem}.metadata.json", _metadata_sidecar(series)))
    return payloads


def write_series(series: DecodedSeries, target: FormatKind, destination: str | Path) -> list[Path]:
    """Write the series files under ``destination``; returns written paths."""
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    written = []
    for name, payload in write_series_payloads(series, target):
        path = destination / name
        path.write_bytes(payload)
        written.append(path)
    return written
