"""Turning stored codestreams back into complete files of a target format.

This is the one conversion path shared by the CLI and the HTTP service, so
both always produce identical payload bytes for identical parameters. Only
the minimal codestream prefix for the requested level is ever read.
"""

from __future__ import annotations

from dataclasses import dataclass

from .codec import decode
from .errors import HierarchyViolation, LevelOutOfRange
from .formats import DecodedSeries, FormatKind, MetadataDocument
from .formats.writers import write_series_payloads
from .hierarchy import can_convert, map_tags, rescale_geometry
from .store import Store


@dataclass(frozen=True)
class ConvertedSeries:
    """A series materialised in a target format at some level."""

    series_id: str
    format: FormatKind
    level: int
    max_level: int
    payloads: tuple[tuple[str, bytes], ...]
    bytes_read: int
    series: DecodedSeries


def convert_series(
    store: Store,
    series_id: str,
    target: FormatKind,
    level: int | None = None,
) -> ConvertedSeries:
    """Decode a stored series at ``level`` and serialise it as ``target``.

    ``level`` counts 1 (coarsest) to ``max_level`` (lossless full); omitted
    means full. Conversions that would ascend the format richness order are
    refused before any pixel byte is read.
    """
    manifest = store.manifest(series_id)
    source = FormatKind(manifest["format"])
    target = FormatKind(target)
    if not can_convert(source, target):
        raise HierarchyViolation(
            f"cannot convert {source.value} to {target.value}: "
            "conversions only descend the order dicom > nifti > raster"
        )
    max_level = manifest["max_level"]
    if level is None:
        level = max_level
    if not 1 <= level <= max_level:
        raise LevelOutOfRange(f"level {level} outside [1, {max_level}]")

    planes = []
    bytes_read = 0
    for index in range(manifest["num_slices"]):
        prefix = store.get_slice_prefix(series_id, index, level)
        bytes_read += len(prefix)
        planes.append(decode(prefix, level=level))

    metadata = MetadataDocument.from_json_dict(manifest["metadata"])
    metadata = rescale_geometry(metadata, max_level - 1, level)
    metadata = map_tags(metadata, target)
    series = DecodedSeries(metadata=metadata, planes=planes)
    payloads = tuple(write_series_payloads(series, target))
    return ConvertedSeries(
        series_id=series_id,
        format=target,
        level=level,
        max_level=max_level,
        payloads=payloads,
        bytes_read=bytes_read,
        series=series,
    )
