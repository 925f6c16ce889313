"""Exception hierarchy shared across the package."""

from __future__ import annotations

import enum


class MistError(Exception):
    """Base class for every error raised by this package."""


class UnsupportedDepth(MistError):
    """Sample values span more than 16 bits after rescaling."""


class UnsupportedType(MistError):
    """Pixel data is not integer-valued single-channel grayscale."""


class NoPixelData(MistError):
    """Input file carries no image pixels."""


class MixedSeries(MistError):
    """Files grouped into one series disagree on identity, shape or depth."""


class NothingIngestable(MistError):
    """Every candidate file was excluded during ingest.

    ``exclusions`` holds the per-file record so callers can report why.
    """

    def __init__(self, message: str = "no ingestable files", exclusions: list | None = None):
        super().__init__(message)
        self.exclusions = list(exclusions or [])


class HierarchyViolation(MistError):
    """Requested a conversion that climbs the format hierarchy."""


class MissingGeometry(MistError):
    """Target format requires geometry the source never carried."""


class StructuralMismatch(MistError):
    """Subband dimensions do not chain into a valid pyramid."""


class TruncatedStream(MistError):
    """Codestream ends before the requested content."""


class CorruptMarker(MistError):
    """Expected marker bytes are absent at a recorded offset."""


class LevelOutOfRange(MistError):
    """Requested decomposition level outside [1, n_levels + 1]."""


class DimsMismatch(MistError):
    """Operands must share dimensions."""


class DimsOutOfRange(MistError):
    """Requested output dimensions exceed the source dimensions."""


class NotFound(MistError):
    """Series or slice does not exist in the store."""


class ExclusionReason(str, enum.Enum):
    """Why a candidate file was left out of an ingest."""

    NO_PIXEL_DATA = "no_pixel_data"
    UNSUPPORTED_DEPTH = "unsupported_depth"
    UNSUPPORTED_TYPE = "unsupported_type"


class Excluded(MistError):
    """A single input file cannot be ingested; carries the reason taxonomy."""

    def __init__(self, reason: ExclusionReason, detail: str = ""):
        self.reason = ExclusionReason(reason)
        self.detail = detail
        text = self.reason.value if not detail else f"{self.reason.value}: {detail}"
        super().__init__(text)


def exclusion_for(err: MistError, detail: str = "") -> Excluded:
    """Wrap a pixel-level error into the matching per-file exclusion."""
    if isinstance(err, Excluded):
        return err
    if isinstance(err, UnsupportedDepth):
        return Excluded(ExclusionReason.UNSUPPORTED_DEPTH, detail or str(err))
    if isinstance(err, UnsupportedType):
        return Excluded(ExclusionReason.UNSUPPORTED_TYPE, detail or str(err))
    if isinstance(err, NoPixelData):
        return Excluded(ExclusionReason.NO_PIXEL_DATA, detail or str(err))
    raise err
