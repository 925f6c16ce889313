"""Reading and writing medical image series in their native formats."""

from __future__ import annotations

from .metadata import CANONICAL_KEYS, DecodedSeries, FormatKind, MetadataDocument
from .dicom import (
    derive_uid,
    parse_dicom,
    read_dicom_file,
    read_dicom_series,
    write_dicom_slice,
)
from .nifti import read_nifti, write_nifti_bytes
from .raster import read_raster, write_png_bytes
from .writers import write_series, write_series_payloads

__all__ = [
    "CANONICAL_KEYS",
    "DecodedSeries",
    "FormatKind",
    "MetadataDocument",
    "derive_uid",
    "parse_dicom",
    "read_dicom_file",
    "read_dicom_series",
    "read_nifti",
    "read_raster",
    "write_dicom_slice",
    "write_nifti_bytes",
    "write_png_bytes",
    "write_series",
    "write_series_payloads",
]
