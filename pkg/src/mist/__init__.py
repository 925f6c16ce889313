"""mist: ingest medical image series once, stream any resolution anywhere.

The package stores each slice as a single lossless codestream whose byte
prefixes decode to progressively finer resolutions, keeps acquisition
metadata in a separate JSON document, and serves both over HTTP.
"""

from __future__ import annotations

from .errors import (
    CorruptMarker,
    DimsMismatch,
    DimsOutOfRange,
    Excluded,
    ExclusionReason,
    HierarchyViolation,
    LevelOutOfRange,
    MissingGeometry,
    MistError,
    MixedSeries,
    NoPixelData,
    NotFound,
    NothingIngestable,
    StructuralMismatch,
    TruncatedStream,
    UnsupportedDepth,
    UnsupportedType,
)
from .codec import FULL, PixelPlane, decode, decomposition_levels, encode
from .convert import ConvertedSeries, convert_series
from .formats import DecodedSeries, FormatKind, MetadataDocument
from .hierarchy import can_convert, map_tags, rescale_geometry
from .quality import bilinear_downsample, evaluate_series, psnr, ssim
from .store import EfficiencyReport, SeriesRecord, Store

__version__ = "0.1.0"

__all__ = [
    "ConvertedSeries",
    "DecodedSeries",
    "EfficiencyReport",
    "FULL",
    "FormatKind",
    "MetadataDocument",
    "PixelPlane",
    "SeriesRecord",
    "Store",
    "bilinear_downsample",
    "can_convert",
    "convert_series",
    "decode",
    "decomposition_levels",
    "encode",
    "evaluate_series",
    "map_tags",
    "psnr",
    "rescale_geometry",
    "ssim",
    "CorruptMarker",
    "DimsMismatch",
    "DimsOutOfRange",
    "Excluded",
    "ExclusionReason",
    "HierarchyViolation",
    "LevelOutOfRange",
    "MissingGeometry",
    "MistError",
    "MixedSeries",
    "NoPixelData",
    "NotFound",
    "NothingIngestable",
    "StructuralMismatch",
    "TruncatedStream",
    "UnsupportedDepth",
    "UnsupportedType",
    "__version__",
]
