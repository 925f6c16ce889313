"""Byte-range bookkeeping for progressive codestreams.

An offset table records, for each decodable resolution level, where the
tile-part that completes it starts and ends. ``prefix_length(level)`` is the
exact number of leading bytes a reader must fetch to decode that level.
"""

from __future__ import annotations

from dataclasses import dataclass

from .codec.codestream import (
    EOC_MARKER,
    HEADER_LEN,
    SOT_MARKER,
    TILE_PART_HEADER_LEN,
    Codestream,
    parse_header,
    tile_part_at,
)
from .errors import CorruptMarker, LevelOutOfRange


@dataclass(frozen=True)
class OffsetEntry:
    """Tile-part extent completing one resolution level."""

    level: int
    offset: int
    end: int

    def to_json_dict(self) -> dict:
        return {"level": self.level, "offset": self.offset, "end": self.end}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "OffsetEntry":
        return cls(level=int(doc["level"]), offset=int(doc["offset"]), end=int(doc["end"]))


@dataclass(frozen=True)
class OffsetTable:
    """Per-level byte extents of one codestream."""

    entries: tuple[OffsetEntry, ...]
    eoc_offset: int
    total_length: int

    @property
    def max_level(self) -> int:
        return len(self.entries)

    def prefix_length(self, level: int | None = None) -> int:
        """Bytes needed from the start of the stream to decode ``level``.

        ``None`` means the full stream including the end marker.
        """
        if level is None:
            return self.total_length
        if not (1 <= level <= self.max_level):
            raise LevelOutOfRange(f"level {level} outside [1, {self.max_level}]")
        return self.entries[level - 1].end

    def to_json_list(self) -> list[dict]:
        return [e.to_json_dict() for e in self.entries]

    @classmethod
    def from_manifest(cls, offsets: list[dict], total_length: int) -> "OffsetTable":
        entries = tuple(OffsetEntry.from_json_dict(doc) for doc in offsets)
        return cls(entries=entries, eoc_offset=total_length - len(EOC_MARKER), total_length=total_length)


def build_offset_table(data: bytes | Codestream) -> OffsetTable:
    """Walk a complete codestream and record every tile-part extent.

    Raises ``TruncatedStream``/``CorruptMarker`` when the stream is not a
    structurally complete encoding.
    """
    if isinstance(data, Codestream):
        data = data.data
    header = parse_header(data)
    entries = []
    offset = HEADER_LEN
    for index in range(header.n_levels + 1):
        start, end = tile_part_at(data, offset, index)
        entries.append(OffsetEntry(level=index + 1, offset=offset, end=end))
        offset = end
    if data[offset : offset + 2] != EOC_MARKER:
        raise CorruptMarker(f"end marker absent at byte {offset}")
    if len(data) != offset + 2:
        raise CorruptMarker(
            f"{len(data) - offset - 2} trailing bytes after the end marker"
        )
    return OffsetTable(entries=tuple(entries), eoc_offset=offset, total_length=len(data))


def validate(data: bytes, table: OffsetTable) -> list[str]:
    """Check a byte buffer against an offset table; return violations.

    Returns an empty list when the buffer is a complete stream matching the
    table. A truncated buffer yields a violation naming the first missing
    tile-part. Never raises for content problems.
    """
    problems: list[str] = []
    if table.max_level < 1:
        return ["offset table holds no levels"]

    expected_start = HEADER_LEN
    for pos, entry in enumerate(table.entries):
        if entry.level != pos + 1:
            problems.append(f"levels not contiguous at entry {pos} (level {entry.level})")
            break
    for prev, cur in zip(table.entries, table.entries[1:]):
        if cur.offset != prev.end:
            problems.append(
                f"level {cur.level} starts at byte {cur.offset}, "
                f"but level {prev.level} ends at byte {prev.end}"
            )
    first = table.entries[0]
    if first.offset != expected_start:
        problems.append(f"level 1 starts at byte {first.offset}, expected {expected_start}")

    for entry in table.entries:
        if entry.end < entry.offset + TILE_PART_HEADER_LEN:
            problems.append(f"level {entry.level} extent shorter than a tile-part header")
            continue
        if entry.end > len(data):
            problems.append(
                f"tile-part for level {entry.level} missing: stream ends at byte "
                f"{len(data)}, level needs bytes through {entry.end}"
            )
            return problems
        if data[entry.offset : entry.offset + 2] != SOT_MARKER:
            problems.append(f"tile-part marker absent at byte {entry.offset} (level {entry.level})")
        elif data[entry.offset + 2] != entry.level - 1:
            problems.append(
                f"tile-part index {data[entry.offset + 2]} at byte {entry.offset} "
                f"does not match level {entry.level}"
            )

    if table.eoc_offset != table.entries[-1].end:
        problems.append(
            f"end marker recorded at byte {table.eoc_offset}, "
            f"last tile-part ends at byte {table.entries[-1].end}"
        )
    if table.total_length != table.eoc_offset + len(EOC_MARKER):
        problems.append("total length does not equal end marker offset plus marker size")
    if len(data) < table.total_length:
        problems.append(
            f"stream ends at byte {len(data)}, expected {table.total_length} bytes"
        )
    elif len(data) > table.total_length:
        problems.append(f"{len(data) - table.total_length} trailing bytes after the end marker")
    elif data[table.eoc_offset : table.eoc_offset + 2] != EOC_MARKER:
        problems.append(f"end marker absent at byte {table.eoc_offset}")
    return problems
