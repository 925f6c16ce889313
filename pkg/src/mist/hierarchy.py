"""Format richness ordering and metadata mapping between formats.

Conversions may only descend the richness order DICOM > NIfTI > raster
(equal rank allowed). Mapping down never invents information: canonical
tags the target cannot carry are demoted verbatim into ``source_tags``.
"""

from __future__ import annotations

import numpy as np

from .errors import HierarchyViolation, LevelOutOfRange
from .formats.metadata import FORMAT_VALID_KEYS, FormatKind, MetadataDocument

RANK: dict[FormatKind, int] = {
    FormatKind.DICOM: 3,
    FormatKind.NIFTI: 2,
    FormatKind.RASTER: 1,
}


def can_convert(source: FormatKind, target: FormatKind) -> bool:
    """True when the target is at or below the source in richness."""
    return RANK[FormatKind(source)] >= RANK[FormatKind(target)]


def map_tags(meta: MetadataDocument, target: FormatKind) -> MetadataDocument:
    """Re-key a metadata document for a target format.

    Raises ``HierarchyViolation`` for ascending conversions. Tags the target
    format cannot carry move into ``source_tags`` under their canonical
    names, so nothing is silently dropped.
    """
    target = FormatKind(target)
    if not can_convert(meta.format, target):
        raise HierarchyViolation(
            f"cannot convert {meta.format.value} to {target.value}: "
            "conversions only descend the order dicom > nifti > raster"
        )
    valid = FORMAT_VALID_KEYS[target]
    out = meta.copy()
    out.format = target
    for key in list(out.tags):
        if key == "source_tags" or out.tags[key] is None:
            continue
        if key not in valid:
            out.tags["source_tags"][key] = out.tags.pop(key)
    return out


def rescale_geometry(meta: MetadataDocument, n_levels: int, level: int) -> MetadataDocument:
    """Geometry tags for a sub-resolution decode of the same series.

    ``level`` counts from 1 (coarsest) to ``n_levels + 1`` (full). With the
    scale factor ``s = 2**(n_levels + 1 - level)``: in-plane spacings grow
    by ``s``, in-plane affine columns scale by ``s``, and the translation
    shifts so the image center stays fixed in world space. Slice direction
    and slice spacing never change. ``level == n_levels + 1`` is identity.
    """
    if not (1 <= level <= n_levels + 1):
        raise LevelOutOfRange(f"level {level} outside [1, {n_levels + 1}]")
    out = meta.copy()
    scale = 1 << (n_levels + 1 - level)
    if scale == 1:
        return out

    tags = out.tags
    rows, cols = tags.get("rows"), tags.get("cols")
    new_rows = None if rows is None else (rows + scale - 1) // scale
    new_cols = None if cols is None else (cols + scale - 1) // scale
    if new_rows is not None:
        tags["rows"] = new_rows
    if new_cols is not None:
        tags["cols"] = new_cols
    for key in ("pixel_spacing_row", "pixel_spacing_col"):
        if tags.get(key) is not None:
            tags[key] = float(tags[key]) * scale

    affine = meta.affine
    if affine is not None and None not in (rows, cols):
        new_affine = affine.copy()
        new_affine[:3, 0] = affine[:3, 0] * scale
        new_affine[:3, 1] = affine[:3, 1] * scale
        center_shift = (
            affine[:3, 0] * ((cols - 1) - scale * (new_cols - 1)) / 2.0
            + affine[:3, 1] * ((rows - 1) - scale * (new_rows - 1)) / 2.0
        )
        new_affine[:3, 3] = affine[:3, 3] + center_shift
        out.set_affine(new_affine)
        if tags.get("image_position") is not None:
            tags["image_position"] = new_affine[:3, 3].round(12).tolist()
    return out
