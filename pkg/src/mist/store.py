"""On-disk persistence of ingested series and the ingestion pipeline.

Layout under the store root::

    store.json                       marker written by create()
    series/<id>/manifest.json        slice lengths, offset tables, ingest report
    series/<id>/metadata.json        the series metadata document
    series/<id>/slices/00000.mistcs  one codestream per slice

A series directory appears atomically: it is staged under ``tmp/`` and
renamed into place, so readers only ever see complete series. The id is
derived from the content (metadata + sample bytes), which makes ingestion
idempotent and deduplicating.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from .codec import encode
from .errors import (
    Excluded,
    MixedSeries,
    MistError,
    NotFound,
    NothingIngestable,
)
from .formats import DecodedSeries, FormatKind, MetadataDocument
from .formats.dicom import read_dicom_series
from .formats.nifti import read_nifti
from .formats.raster import read_raster
from .offsets import OffsetTable, build_offset_table

_MARKER = "store.json"
_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_GZIP_SIGNATURE = b"\x1f\x8b"


def sniff_format(path: Path) -> FormatKind | None:
    """Detect the container format from file signatures, not extensions."""
    try:
        with open(path, "rb") as handle:
            head = handle.read(352)
    except OSError:
        return None
    if head.startswith(_PNG_SIGNATURE):
        return FormatKind.RASTER
    if len(head) >= 132 and head[128:132] == b"DICM":
        return FormatKind.DICOM
    if head.startswith(_GZIP_SIGNATURE):
        # gzip is only used as a NIfTI container here; confirm by magic.
        import gzip

        try:
            with gzip.open(path, "rb") as handle:
                inner = handle.read(348)
        except OSError:
            return None
        head = inner
    if len(head) >= 348 and head[344:347] in (b"n+1", b"ni1"):
        return FormatKind.NIFTI
    return None


@dataclass(frozen=True)
class SeriesRecord:
    """What one ingested series looks like to callers."""

    series_id: str
    format: FormatKind
    num_slices: int
    max_level: int
    stored_bytes: int
    ingest_report: dict
    created: bool

    @classmethod
    def from_manifest(cls, manifest: dict, created: bool) -> "SeriesRecord":
        return cls(
            series_id=manifest["series_id"],
            format=FormatKind(manifest["format"]),
            num_slices=manifest["num_slices"],
            max_level=manifest["max_level"],
            stored_bytes=sum(entry["length"] for entry in manifest["slices"]),
            ingest_report=manifest["ingest_report"],
            created=created,
        )


@dataclass(frozen=True)
class SeriesEfficiency:
    """Byte accounting for one stored series."""

    series_id: str
    format: FormatKind
    num_slices: int
    original_bytes: int
    stored_bytes: int
    #: cumulative prefix bytes per level; index i covers level i + 1
    level_bytes: tuple[int, ...]

    @property
    def percent_change(self) -> float:
        if self.original_bytes == 0:
            return 0.0
        return 100.0 * (self.stored_bytes - self.original_bytes) / self.original_bytes


@dataclass(frozen=True)
class EfficiencyReport:
    """Per-series and aggregate storage accounting."""

    series: tuple[SeriesEfficiency, ...] = field(default_factory=tuple)

    @property
    def original_bytes(self) -> int:
        return sum(entry.original_bytes for entry in self.series)

    @property
    def stored_bytes(self) -> int:
        return sum(entry.stored_bytes for entry in self.series)

    @property
    def percent_change(self) -> float:
        if self.original_bytes == 0:
            return 0.0
        return 100.0 * (self.stored_bytes - self.original_bytes) / self.original_bytes


def _read_series_from(
    fmt: FormatKind, paths: list[Path]
) -> tuple[DecodedSeries, list[tuple[str, str, str]]]:
    if fmt is FormatKind.DICOM:
        series, exclusions = read_dicom_series(paths)
        return series, [(p, str(r), d) for p, r, d in exclusions]
    if fmt is FormatKind.NIFTI:
        if len(paths) != 1:
            raise MixedSeries("a series maps to exactly one volume file")
        return read_nifti(paths[0]), []
    # raster: one slice per file, ordered by name
    exclusions: list[tuple[str, str, str]] = []
    slices: list[tuple[Path, DecodedSeries]] = []
    for path in paths:
        try:
            slices.append((path, read_raster(path)))
        except Excluded as err:
            exclusions.append((str(path), err.reason.value, err.detail))
    if not slices:
        raise NothingIngestable("every file in the series was excluded", exclusions)
    planes = [one.planes[0] for _, one in slices]
    first = slices[0][1].metadata
    tags = dict(first.tags)
    tags["num_slices"] = len(planes)
    if len(slices) > 1:
        tags["series_id"] = slices[0][0].parent.name
    metadata = MetadataDocument(format=FormatKind.RASTER, tags=tags)
    return DecodedSeries(metadata=metadata, planes=planes), exclusions


def _series_id_for(series: DecodedSeries) -> str:
    digest = hashlib.sha256()
    canonical = json.dumps(
        series.metadata.to_json_dict(), sort_keys=True, separators=(",", ":")
    )
    digest.update(canonical.encode("utf-8"))
    for plane in series.planes:
        digest.update(str(plane.rescale_intercept).encode())
        digest.update(str(plane.rescale_slope).encode())
        digest.update(plane.samples.astype("<u2").tobytes())
    return digest.hexdigest()


class Store:
    """A directory of immutable, content-addressed series."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def create(cls, root: str | os.PathLike) -> "Store":
        store = cls(root)
        store.series_root.mkdir(parents=True, exist_ok=True)
        (store.root / "tmp").mkdir(exist_ok=True)
        (store.root / "locks").mkdir(exist_ok=True)
        marker = store.root / _MARKER
        if not marker.exists():
            marker.write_text(json.dumps({"version": 1}) + "\n")
        return store

    @classmethod
    def open(cls, root: str | os.PathLike) -> "Store":
        store = cls(root)
        if not (store.root / _MARKER).exists():
            raise NotFound(f"no store at {store.root}")
        return store

    @property
    def series_root(self) -> Path:
        return self.root / "series"

    def _series_dir(self, series_id: str) -> Path:
        return self.series_root / series_id

    # -- read side ---------------------------------------------------------

    def series_ids(self) -> list[str]:
        if not self.series_root.is_dir():
            return []
        return sorted(
            entry.name
            for entry in self.series_root.iterdir()
            if (entry / "manifest.json").is_file()
        )

    def manifest_bytes(self, series_id: str) -> bytes:
        """The manifest document verbatim, as stored on disk."""
        path = self._series_dir(series_id) / "manifest.json"
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise NotFound(f"no series {series_id!r}") from None

    def manifest(self, series_id: str) -> dict:
        return json.loads(self.manifest_bytes(series_id))

    def metadata(self, series_id: str) -> MetadataDocument:
        path = self._series_dir(series_id) / "metadata.json"
        try:
            return MetadataDocument.from_json_dict(json.loads(path.read_text()))
        except FileNotFoundError:
            raise NotFound(f"no series {series_id!r}") from None

    def _slice_entry(self, series_id: str, index: int) -> dict:
        manifest = self.manifest(series_id)
        if not 0 <= index < manifest["num_slices"]:
            raise NotFound(f"series {series_id!r} has no slice {index}")
        return manifest["slices"][index]

    def slice_path(self, series_id: str, index: int) -> Path:
        entry = self._slice_entry(series_id, index)
        return self._series_dir(series_id) / entry["file"]

    def slice_bytes(self, series_id: str, index: int) -> bytes:
        return self.slice_path(series_id, index).read_bytes()

    def get_slice_prefix(
        self, series_id: str, index: int, level: int | None = None
    ) -> bytes:
        """Exactly the bytes needed to decode slice ``index`` at ``level``."""
        entry = self._slice_entry(series_id, index)
        table = OffsetTable.from_manifest(entry["offsets"], entry["length"])
        length = table.prefix_length(level)
        path = self._series_dir(series_id) / entry["file"]
        with open(path, "rb") as handle:
            return handle.read(length)

    def stats(self) -> EfficiencyReport:
        rows = []
        for series_id in self.series_ids():
            manifest = self.manifest(series_id)
            max_level = manifest["max_level"]
            level_bytes = [0] * max_level
            stored = 0
            for entry in manifest["slices"]:
                stored += entry["length"]
                table = OffsetTable.from_manifest(entry["offsets"], entry["length"])
                for lvl in range(1, max_level + 1):
                    level_bytes[lvl - 1] += table.prefix_length(lvl)
            rows.append(
                SeriesEfficiency(
                    series_id=series_id,
                    format=FormatKind(manifest["format"]),
                    num_slices=manifest["num_slices"],
                    original_bytes=manifest["ingest_report"]["original_bytes"],
                    stored_bytes=stored,
                    level_bytes=tuple(level_bytes),
                )
            )
        return EfficiencyReport(series=tuple(rows))

    # -- ingestion ---------------------------------------------------------

    def ingest(
        self, path: str | os.PathLike, format_hint: FormatKind | None = None
    ) -> SeriesRecord:
        """Ingest one series from a file or a single-series directory."""
        records, failures = self.ingest_all(path, format_hint)
        if len(records) == 1:
            return records[0]
        if not records:
            exclusions: list[tuple[str, str, str]] = []
            for failed_path, err in failures:
                if isinstance(err, NothingIngestable):
                    exclusions.extend(err.exclusions)
                else:
                    raise err
            raise NothingIngestable("nothing ingestable at " + str(path), exclusions)
        raise MixedSeries(f"{path} contains {len(records)} distinct series")

    def ingest_all(
        self, path: str | os.PathLike, format_hint: FormatKind | None = None
    ) -> tuple[list[SeriesRecord], list[tuple[str, MistError]]]:
        """Walk ``path`` and ingest every series found under it.

        Within one directory: all DICOM files form one series, every volume
        file is its own series, and all PNG files form one series ordered
        by file name. Unrecognized files are ignored.
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"{path} does not exist")

        candidates: list[tuple[FormatKind, list[Path]]] = []
        if path.is_file():
            fmt = format_hint or sniff_format(path)
            if fmt is None:
                raise NothingIngestable(
                    f"unrecognized file signature: {path}",
                    [(str(path), "unsupported_type", "unrecognized signature")],
                )
            candidates.append((FormatKind(fmt), [path]))
        else:
            for directory in sorted(
                d for d, _, files in os.walk(path) if files
            ):
                directory = Path(directory)
                files = sorted(p for p in directory.iterdir() if p.is_file())
                buckets: dict[FormatKind, list[Path]] = {}
                for file in files:
                    fmt = format_hint or sniff_format(file)
                    if fmt is not None:
                        buckets.setdefault(FormatKind(fmt), []).append(file)
                if FormatKind.DICOM in buckets:
                    candidates.append((FormatKind.DICOM, buckets[FormatKind.DICOM]))
                for volume in buckets.get(FormatKind.NIFTI, ()):
                    candidates.append((FormatKind.NIFTI, [volume]))
                if FormatKind.RASTER in buckets:
                    candidates.append((FormatKind.RASTER, buckets[FormatKind.RASTER]))

        records: list[SeriesRecord] = []
        failures: list[tuple[str, MistError]] = []
        for fmt, paths in candidates:
            try:
                series, exclusions = _read_series_from(fmt, paths)
                original = _original_bytes(paths, exclusions)
                records.append(
                    self._commit(series, exclusions, len(paths), original)
                )
            except Excluded as err:
                failures.append(
                    (
                        str(paths[0]),
                        NothingIngestable(
                            f"{paths[0]}: {err}",
                            [(str(paths[0]), err.reason.value, err.detail)],
                        ),
                    )
                )
            except MistError as err:
                failures.append((str(paths[0]), err))
        if not candidates and path.is_dir():
            failures.append(
                (str(path), NothingIngestable(f"no image files under {path}", []))
            )
        return records, failures

    def _commit(
        self,
        series: DecodedSeries,
        exclusions: list[tuple[str, str, str]],
        files_seen: int,
        original_bytes: int,
    ) -> SeriesRecord:
        series_id = _series_id_for(series)
        final_dir = self._series_dir(series_id)
        lock = FileLock(str(self.root / "locks" / f"{series_id}.lock"))
        with lock:
            if (final_dir / "manifest.json").is_file():
                return SeriesRecord.from_manifest(self.manifest(series_id), False)

            staging = self.root / "tmp" / f"{series_id}.{uuid.uuid4().hex}"
            slices_dir = staging / "slices"
            slices_dir.mkdir(parents=True)
            entries = []
            for index, plane in enumerate(series.planes):
                stream = encode(plane)
                table = build_offset_table(stream)
                name = f"slices/{index:05d}.mistcs"
                (staging / name).write_bytes(stream.data)
                entries.append(
                    {
                        "index": index,
                        "file": name,
                        "length": len(stream.data),
                        "n_levels": stream.header.n_levels,
                        "offsets": table.to_json_list(),
                    }
                )
            max_level = entries[0]["n_levels"] + 1 if entries else 1
            metadata_doc = series.metadata.to_json_dict()
            manifest = {
                "series_id": series_id,
                "format": series.metadata.format.value,
                "num_slices": len(series.planes),
                "max_level": max_level,
                "slices": entries,
                "ingest_report": {
                    "files_seen": files_seen,
                    "files_excluded": [
                        {"path": p, "reason": r, "detail": d}
                        for p, r, d in exclusions
                    ],
                    "original_bytes": original_bytes,
                },
                "metadata": metadata_doc,
            }
            (staging / "manifest.json").write_text(
                json.dumps(manifest, indent=2) + "\n"
            )
            (staging / "metadata.json").write_text(
                json.dumps(metadata_doc, indent=2) + "\n"
            )
            try:
                os.rename(staging, final_dir)
            except OSError:
                shutil.rmtree(staging, ignore_errors=True)
                if not (final_dir / "manifest.json").is_file():
                    raise
            return SeriesRecord.from_manifest(self.manifest(series_id), True)


def _original_bytes(paths: list[Path], exclusions: list[tuple[str, str, str]]) -> int:
    excluded = {p for p, _, _ in exclusions}
    return sum(p.stat().st_size for p in paths if str(p) not in excluded)
