"""Format-agnostic metadata documents and decoded series containers.

A metadata document is a JSON-ready dict of canonical tags plus a
``source_tags`` bag of verbatim foreign tags. Canonical geometry follows the
voxel-to-world convention: ``affine @ [col, row, slice, 1]`` is the world
position of a voxel center in millimetres, in the source coordinate frame.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..codec import PixelPlane


class FormatKind(str, enum.Enum):
    """Supported storage formats, richest first."""

    DICOM = "dicom"
    NIFTI = "nifti"
    RASTER = "raster"


#: Canonical tag vocabulary. ``source_tags`` always travels along.
CANONICAL_KEYS = (
    "series_id",
    "modality",
    "rows",
    "cols",
    "num_slices",
    "pixel_spacing_row",
    "pixel_spacing_col",
    "slice_thickness",
    "spacing_between_slices",
    "image_position",
    "image_orientation",
    "affine",
    "rescale_intercept",
    "rescale_slope",
    "bits_stored",
    "photometric",
    "source_tags",
)

#: Keys each format can genuinely carry in its own files.
FORMAT_VALID_KEYS: dict[FormatKind, frozenset[str]] = {
    FormatKind.DICOM: frozenset(CANONICAL_KEYS),
    FormatKind.NIFTI: frozenset(
        {
            "series_id",
            "rows",
            "cols",
            "num_slices",
            "pixel_spacing_row",
            "pixel_spacing_col",
            "spacing_between_slices",
            "affine",
            "rescale_intercept",
            "rescale_slope",
            "bits_stored",
            "source_tags",
        }
    ),
    FormatKind.RASTER: frozenset(
        {"series_id", "rows", "cols", "num_slices", "bits_stored", "source_tags"}
    ),
}

_REQUIRED_KEYS = ("series_id", "rows", "cols", "num_slices", "bits_stored")


@dataclass
class MetadataDocument:
    """Canonical tags for one series, kept apart from the pixel payload."""

    format: FormatKind
    tags: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.format = FormatKind(self.format)
        self.tags.setdefault("source_tags", {})

    def copy(self) -> "MetadataDocument":
        return MetadataDocument(self.format, copy.deepcopy(self.tags))

    @property
    def affine(self) -> np.ndarray | None:
        a = self.tags.get("affine")
        return None if a is None else np.asarray(a, dtype=np.float64)

    def set_affine(self, affine: np.ndarray) -> None:
        self.tags["affine"] = np.asarray(affine, dtype=np.float64).round(12).tolist()

    def to_json_dict(self) -> dict:
        return {"format": self.format.value, "tags": self.tags}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MetadataDocument":
        return cls(FormatKind(doc["format"]), dict(doc["tags"]))

    def validate(self) -> list[str]:
        """Return human-readable consistency problems (empty when clean)."""
        problems: list[str] = []
        tags = self.tags
        valid = FORMAT_VALID_KEYS[self.format]

        for key in _REQUIRED_KEYS:
            if tags.get(key) is None:
                problems.append(f"required tag {key} missing")
        for key in tags:
            if key not in CANONICAL_KEYS:
                problems.append(f"unknown canonical tag {key}")
            elif key not in valid and tags[key] is not None:
                problems.append(f"tag {key} is not representable in {self.format.value}")

        for key in ("rows", "cols", "num_slices", "bits_stored"):
            value = tags.get(key)
            if value is not None and (not isinstance(value, int) or value < 1):
                problems.append(f"tag {key} must be a positive integer, got {value!r}")
        for key in ("pixel_spacing_row", "pixel_spacing_col", "slice_thickness",
                    "spacing_between_slices"):
            value = tags.get(key)
            if value is not None and not (isinstance(value, (int, float)) and value > 0):
                problems.append(f"tag {key} must be a positive number, got {value!r}")

        slope = tags.get("rescale_slope")
        if slope is not None and not (isinstance(slope, (int, float)) and slope > 0):
            problems.append(f"rescale_slope must be positive, got {slope!r}")

        orientation = tags.get("image_orientation")
        if orientation is not None:
            o = np.asarray(orientation, dtype=np.float64)
            if o.shape != (6,):
                problems.append("image_orientation must hold six numbers")
            else:
                r, c = o[:3], o[3:]
                if abs(np.linalg.norm(r) - 1) > 1e-4 or abs(np.linalg.norm(c) - 1) > 1e-4:
                    problems.append("image_orientation directions are not unit length")
                if abs(float(np.dot(r, c))) > 1e-4:
                    problems.append("image_orientation directions are not orthogonal")

        position = tags.get("image_position")
        if position is not None and np.asarray(position, dtype=np.float64).shape != (3,):
            problems.append("image_position must hold three numbers")

        affine = self.affine
        if affine is not None:
            if affine.shape != (4, 4):
                problems.append("affine must be 4x4")
            elif not np.allclose(affine[3], [0, 0, 0, 1], atol=1e-9):
                problems.append("affine last row must be [0, 0, 0, 1]")
            else:
                problems.extend(self._affine_consistency(affine))
        return problems

    def _affine_consistency(self, affine: np.ndarray) -> list[str]:
        """Cross-check the affine against position/orientation/spacing tags."""
        problems = []
        tags = self.tags

        def close(a, b):
            a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
            scale = max(1.0, float(np.abs(b).max()))
            return bool(np.all(np.abs(a - b) <= 1e-6 * scale))

        orientation = tags.get("image_orientation")
        sp_col = tags.get("pixel_spacing_col")
        sp_row = tags.get("pixel_spacing_row")
        if orientation is not None and sp_col is not None and sp_row is not None:
            o = np.asarray(orientation, dtype=np.float64)
            if not close(affine[:3, 0], o[:3] * sp_col):
                problems.append("affine column 0 disagrees with orientation and column spacing")
            if not close(affine[:3, 1], o[3:] * sp_row):
                problems.append("affine column 1 disagrees with orientation and row spacing")
        position = tags.get("image_position")
        if position is not None and not close(affine[:3, 3], position):
            problems.append("affine translation disagrees with image_position")
        return problems


@dataclass
class DecodedSeries:
    """Metadata plus one pixel plane per slice, in series order."""

    metadata: MetadataDocument
    planes: list[PixelPlane]

    def __post_init__(self):
        if not self.planes:
            raise ValueError("a decoded series needs at least one plane")
        first = self.planes[0]
        for index, plane in enumerate(self.planes):
            if (plane.rows, plane.cols) != (first.rows, first.cols):
                raise ValueError(
                    f"plane {index} is {plane.rows}x{plane.cols}, "
                    f"expected {first.rows}x{first.cols}"
                )
            if plane.bit_depth != first.bit_depth:
                raise ValueError(f"plane {index} bit depth differs")

    @property
    def rows(self) -> int:
        return self.planes[0].rows

    @property
    def cols(self) -> int:
        return self.planes[0].cols

    @property
    def bit_depth(self) -> int:
        return self.planes[0].bit_depth

    @property
    def num_slices(self) -> int:
        return len(self.planes)
