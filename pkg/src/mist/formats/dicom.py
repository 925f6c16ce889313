"""Minimal reader/writer for uncompressed single-frame Part 10 files.

Reads explicit and implicit VR little endian, skips sequences structurally
(including undefined lengths), collects primitive tags verbatim, and decodes
8/16-bit grayscale pixel data. Writes explicit VR little endian. No external
toolkit is used; only the small subset of the format the store needs.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..codec import PixelPlane
from ..errors import Excluded, ExclusionReason, MixedSeries, NothingIngestable
from .metadata import DecodedSeries, FormatKind, MetadataDocument

MAGIC_OFFSET = 128
MAGIC = b"DICM"

_IMPLICIT_LE = "1.2.840.10008.1.2"
_EXPLICIT_LE = "1.2.840.10008.1.2.1"
_SECONDARY_CAPTURE = "1.2.840.10008.5.1.4.1.1.7"

_UNDEFINED = 0xFFFFFFFF
_LONG_VRS = frozenset({"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "UC", "UN", "UR", "UT"})
_TEXT_VRS = frozenset(
    {"AE", "AS", "CS", "DA", "DT", "LO", "LT", "PN", "SH", "ST", "TM", "UC", "UI", "UR", "UT"}
)

TAG_SOP_CLASS = (0x0008, 0x0016)
TAG_SOP_INSTANCE = (0x0008, 0x0018)
TAG_MODALITY = (0x0008, 0x0060)
TAG_SLICE_THICKNESS = (0x0018, 0x0050)
TAG_SPACING_BETWEEN = (0x0018, 0x0088)
TAG_STUDY_UID = (0x0020, 0x000D)
TAG_SERIES_UID = (0x0020, 0x000E)
TAG_INSTANCE_NUMBER = (0x0020, 0x0013)
TAG_IMAGE_POSITION = (0x0020, 0x0032)
TAG_IMAGE_ORIENTATION = (0x0020, 0x0037)
TAG_SAMPLES_PER_PIXEL = (0x0028, 0x0002)
TAG_PHOTOMETRIC = (0x0028, 0x0004)
TAG_NUMBER_OF_FRAMES = (0x0028, 0x0008)
TAG_ROWS = (0x0028, 0x0010)
TAG_COLS = (0x0028, 0x0011)
TAG_PIXEL_SPACING = (0x0028, 0x0030)
TAG_BITS_ALLOCATED = (0x0028, 0x0100)
TAG_BITS_STORED = (0x0028, 0x0101)
TAG_HIGH_BIT = (0x0028, 0x0102)
TAG_PIXEL_REPRESENTATION = (0x0028, 0x0103)
TAG_RESCALE_INTERCEPT = (0x0028, 0x1052)
TAG_RESCALE_SLOPE = (0x0028, 0x1053)
TAG_FLOAT_PIXELS = (0x7FE0, 0x0008)
TAG_DOUBLE_PIXELS = (0x7FE0, 0x0009)
TAG_PIXEL_DATA = (0x7FE0, 0x0010)

#: VR lookup used when the transfer syntax is implicit.
_IMPLICIT_VRS: dict[tuple[int, int], str] = {
    TAG_SOP_CLASS: "UI",
    TAG_SOP_INSTANCE: "UI",
    TAG_MODALITY: "CS",
    TAG_SLICE_THICKNESS: "DS",
    TAG_SPACING_BETWEEN: "DS",
    TAG_STUDY_UID: "UI",
    TAG_SERIES_UID: "UI",
    TAG_INSTANCE_NUMBER: "IS",
    TAG_IMAGE_POSITION: "DS",
    TAG_IMAGE_ORIENTATION: "DS",
    TAG_SAMPLES_PER_PIXEL: "US",
    TAG_PHOTOMETRIC: "CS",
    TAG_NUMBER_OF_FRAMES: "IS",
    TAG_ROWS: "US",
    TAG_COLS: "US",
    TAG_PIXEL_SPACING: "DS",
    TAG_BITS_ALLOCATED: "US",
    TAG_BITS_STORED: "US",
    TAG_HIGH_BIT: "US",
    TAG_PIXEL_REPRESENTATION: "US",
    TAG_RESCALE_INTERCEPT: "DS",
    TAG_RESCALE_SLOPE: "DS",
    TAG_FLOAT_PIXELS: "OF",
    TAG_DOUBLE_PIXELS: "OD",
    TAG_PIXEL_DATA: "OW",
}

#: Canonical and regenerated tags that never enter the passthrough bag.
_NOT_PASSTHROUGH = frozenset(
    set(_IMPLICIT_VRS)
    - {TAG_SOP_CLASS, TAG_STUDY_UID}  # these two pass through verbatim
    | {TAG_SOP_INSTANCE, TAG_INSTANCE_NUMBER, TAG_IMAGE_POSITION}
)


def _unsupported(detail: str) -> Excluded:
    return Excluded(ExclusionReason.UNSUPPORTED_TYPE, detail)


def _decode_text(raw: bytes) -> str:
    return raw.decode("latin-1").rstrip("\x00 ")


def _decode_value(vr: str, raw: bytes):
    """Parse a primitive element value into JSON-friendly Python data."""
    if vr in _TEXT_VRS:
        return _decode_text(raw)
    if vr == "IS":
        parts = [p.strip() for p in _decode_text(raw).split("\\") if p.strip()]
        values = [int(p) for p in parts]
    elif vr == "DS":
        parts = [p.strip() for p in _decode_text(raw).split("\\") if p.strip()]
        values = [float(Fraction(p)) for p in parts]
    elif vr == "US":
        values = list(struct.unpack(f"<{len(raw) // 2}H", raw[: len(raw) // 2 * 2]))
    elif vr == "SS":
        values = list(struct.unpack(f"<{len(raw) // 2}h", raw[: len(raw) // 2 * 2]))
    elif vr == "UL":
        values = list(struct.unpack(f"<{len(raw) // 4}I", raw[: len(raw) // 4 * 4]))
    elif vr == "SL":
        values = list(struct.unpack(f"<{len(raw) // 4}i", raw[: len(raw) // 4 * 4]))
    elif vr == "FL":
        values = list(struct.unpack(f"<{len(raw) // 4}f", raw[: len(raw) // 4 * 4]))
    elif vr == "FD":
        values = list(struct.unpack(f"<{len(raw) // 8}d", raw[: len(raw) // 8 * 8]))
    else:
        return raw
    if not values:
        return None
    return values[0] if len(values) == 1 else values


def _ds_string(raw_value) -> list[str]:
    """DS values as their exact decimal strings (for Fraction parsing)."""
    if raw_value is None:
        return []
    if isinstance(raw_value, str):
        return [p.strip() for p in raw_value.split("\\") if p.strip()]
    if isinstance(raw_value, list):
        return [str(v) for v in raw_value]
    return [str(raw_value)]


@dataclass
class ParsedDicom:
    """Raw primitive tags and pixel payload of one file."""

    transfer_syntax: str
    elements: dict[tuple[int, int], tuple[str, object]] = field(default_factory=dict)
    pixel_bytes: bytes | None = None

    def get(self, tag: tuple[int, int], default=None):
        entry = self.elements.get(tag)
        return default if entry is None else entry[1]


def _skip_item_body(buf: bytes, pos: int, explicit: bool) -> int:
    """Skip a nested dataset until its item delimiter; returns new offset."""
    n = len(buf)
    while pos + 8 <= n:
        group, elem = struct.unpack_from("<HH", buf, pos)
        if (group, elem) == (0xFFFE, 0xE00D):
            return pos + 8
        pos, _, _, length = _element_header(buf, pos, explicit)
        if length == _UNDEFINED:
            pos = _skip_undefined_value(buf, pos, explicit)
        else:
            pos += length
    raise _unsupported("sequence item never terminated")


def _skip_undefined_value(buf: bytes, pos: int, explicit: bool) -> int:
    """Skip an undefined-length value (sequence of items) entirely."""
    n = len(buf)
    while pos + 8 <= n:
        group, elem, length = struct.unpack_from("<HHI", buf, pos)
        pos += 8
        if (group, elem) == (0xFFFE, 0xE0DD):
            return pos
        if (group, elem) != (0xFFFE, 0xE000):
            raise _unsupported(f"malformed sequence structure at byte {pos - 8}")
        if length == _UNDEFINED:
            pos = _skip_item_body(buf, pos, explicit)
        else:
            pos += length
    raise _unsupported("sequence never terminated")


def _element_header(buf: bytes, pos: int, explicit: bool) -> tuple[int, int, str, int]:
    """Parse one element header; returns (value_offset, group, vr, length)."""
    group, elem = struct.unpack_from("<HH", buf, pos)
    if explicit and group != 0xFFFE:
        vr = buf[pos + 4 : pos + 6].decode("ascii", "replace")
        if vr in _LONG_VRS:
            (length,) = struct.unpack_from("<I", buf, pos + 8)
            return pos + 12, group, vr, length
        (length,) = struct.unpack_from("<H", buf, pos + 6)
        return pos + 8, group, vr, length
    vr = _IMPLICIT_VRS.get((group, elem), "UN")
    (length,) = struct.unpack_from("<I", buf, pos + 4)
    return pos + 8, group, vr, length


def parse_dicom(data: bytes) -> ParsedDicom:
    """Parse a Part 10 buffer into primitive elements plus pixel bytes."""
    try:
        return _parse_dicom(data)
    except struct.error as err:
        raise _unsupported(f"truncated element structure ({err})") from err


def _parse_dicom(data: bytes) -> ParsedDicom:
    if len(data) < MAGIC_OFFSET + 4 or data[MAGIC_OFFSET : MAGIC_OFFSET + 4] != MAGIC:
        raise _unsupported("missing part-10 magic")
    pos = MAGIC_OFFSET + 4

    # File meta group is always explicit VR little endian.
    transfer_syntax = _EXPLICIT_LE
    n = len(data)
    while pos + 8 <= n:
        group, elem = struct.unpack_from("<HH", data, pos)
        if group != 0x0002:
            break
        value_pos, _, vr, length = _element_header(data, pos, explicit=True)
        if length == _UNDEFINED:
            raise _unsupported("undefined length in file meta group")
        raw = data[value_pos : value_pos + length]
        if elem == 0x0010:
            transfer_syntax = _decode_text(raw)
        pos = value_pos + length

    if transfer_syntax == _EXPLICIT_LE:
        explicit = True
    elif transfer_syntax == _IMPLICIT_LE:
        explicit = False
    else:
        raise _unsupported(f"transfer syntax {transfer_syntax} unsupported")

    parsed = ParsedDicom(transfer_syntax=transfer_syntax)
    while pos + 8 <= n:
        tag_pos = pos
        value_pos, group, vr, length = _element_header(data, pos, explicit)
        group_elem = struct.unpack_from("<HH", data, tag_pos)

        if length == _UNDEFINED:
            if group_elem == TAG_PIXEL_DATA:
                raise _unsupported("encapsulated pixel data")
            pos = _skip_undefined_value(data, value_pos, explicit)
            continue
        if value_pos + length > n:
            raise _unsupported(f"element {group_elem[0]:04x},{group_elem[1]:04x} truncated")
        raw = data[value_pos : value_pos + length]
        pos = value_pos + length

        if vr == "SQ":
            continue
        if group_elem == TAG_PIXEL_DATA:
            parsed.pixel_bytes = raw
            parsed.elements[group_elem] = (vr, None)
            break
        if group_elem in (TAG_FLOAT_PIXELS, TAG_DOUBLE_PIXELS):
            raise _unsupported("floating point pixel data")
        parsed.elements[group_elem] = (vr, _decode_value(vr, raw))
    return parsed


@dataclass(eq=False)
class SliceRecord:
    """One file of a series after pixel decoding and tag extraction."""

    path: str
    series_uid: str
    raw: np.ndarray
    bits_allocated: int
    bits_stored: int
    pixel_representation: int
    intercept: Fraction
    slope: Fraction
    instance_number: int | None
    position: np.ndarray | None
    orientation: np.ndarray | None
    parsed: ParsedDicom


def _require_grayscale(parsed: ParsedDicom) -> None:
    samples = parsed.get(TAG_SAMPLES_PER_PIXEL, 1)
    if samples != 1:
        raise _unsupported(f"{samples} samples per pixel")
    photometric = parsed.get(TAG_PHOTOMETRIC, "MONOCHROME2")
    if photometric not in ("MONOCHROME1", "MONOCHROME2"):
        raise _unsupported(f"photometric interpretation {photometric}")
    frames = parsed.get(TAG_NUMBER_OF_FRAMES, 1)
    if isinstance(frames, int) and frames > 1:
        raise _unsupported(f"{frames}-frame file")


def _decode_pixels(parsed: ParsedDicom) -> tuple[np.ndarray, int, int, int]:
    if parsed.pixel_bytes is None:
        raise Excluded(ExclusionReason.NO_PIXEL_DATA, "file carries no pixel data element")
    rows, cols = parsed.get(TAG_ROWS), parsed.get(TAG_COLS)
    if not rows or not cols:
        raise Excluded(ExclusionReason.NO_PIXEL_DATA, "pixel matrix dimensions missing")
    bits_allocated = parsed.get(TAG_BITS_ALLOCATED, 16)
    bits_stored = parsed.get(TAG_BITS_STORED, bits_allocated)
    representation = parsed.get(TAG_PIXEL_REPRESENTATION, 0)
    if bits_allocated not in (8, 16):
        raise Excluded(
            ExclusionReason.UNSUPPORTED_DEPTH, f"{bits_allocated} bits allocated"
        )
    if bits_allocated == 8:
        dtype = np.uint8 if representation == 0 else np.int8
    else:
        dtype = np.uint16 if representation == 0 else np.int16
    needed = rows * cols * (bits_allocated // 8)
    if len(parsed.pixel_bytes) < needed:
        raise _unsupported(
            f"pixel data holds {len(parsed.pixel_bytes)} bytes, needs {needed}"
        )
    raw = np.frombuffer(parsed.pixel_bytes[:needed], dtype=np.dtype(dtype).newbyteorder("<"))
    return raw.reshape(rows, cols).astype(np.int32), bits_allocated, bits_stored, representation


def read_dicom_file(path: str | Path) -> SliceRecord:
    """Parse one file into a slice record; raises ``Excluded`` otherwise."""
    data = Path(path).read_bytes()
    parsed = parse_dicom(data)
    _require_grayscale(parsed)
    raw, bits_allocated, bits_stored, representation = _decode_pixels(parsed)

    intercept_parts = _ds_string(parsed.get(TAG_RESCALE_INTERCEPT))
    slope_parts = _ds_string(parsed.get(TAG_RESCALE_SLOPE))
    intercept = Fraction(intercept_parts[0]) if intercept_parts else Fraction(0)
    slope = Fraction(slope_parts[0]) if slope_parts else Fraction(1)
    if slope <= 0:
        raise _unsupported(f"non-positive rescale slope {slope}")
    if intercept.denominator != 1:
        raise _unsupported(f"non-integer rescale intercept {intercept}")

    position = parsed.get(TAG_IMAGE_POSITION)
    orientation = parsed.get(TAG_IMAGE_ORIENTATION)
    instance = parsed.get(TAG_INSTANCE_NUMBER)
    return SliceRecord(
        path=str(path),
        series_uid=str(parsed.get(TAG_SERIES_UID, "")),
        raw=raw,
        bits_allocated=bits_allocated,
        bits_stored=bits_stored,
        pixel_representation=representation,
        intercept=intercept,
        slope=slope,
        instance_number=int(instance) if isinstance(instance, int) else None,
        position=None if position is None else np.asarray(position, dtype=np.float64),
        orientation=None if orientation is None else np.asarray(orientation, dtype=np.float64),
        parsed=parsed,
    )


def _sort_records(records: list[SliceRecord]) -> list[SliceRecord]:
    """Order slices along the slice normal, then by instance, then name."""
    orientation = next((r.orientation for r in records if r.orientation is not None), None)
    have_geometry = orientation is not None and all(r.position is not None for r in records)
    if have_geometry:
        normal = np.cross(orientation[:3], orientation[3:])

        def key(r: SliceRecord):
            return (
                float(np.dot(r.position, normal)),
                r.instance_number if r.instance_number is not None else 0,
                r.path,
            )

    else:

        def key(r: SliceRecord):
            return (0.0, r.instance_number if r.instance_number is not None else 0, r.path)

    return sorted(records, key=key)


def _series_affine(records: list[SliceRecord], tags: dict) -> np.ndarray | None:
    first = records[0]
    if first.orientation is None or first.position is None:
        return None
    row_dir = first.orientation[:3]
    col_dir = first.orientation[3:]
    sp_col = tags.get("pixel_spacing_col")
    sp_row = tags.get("pixel_spacing_row")
    if sp_col is None or sp_row is None:
        return None
    affine = np.eye(4, dtype=np.float64)
    affine[:3, 0] = row_dir * sp_col
    affine[:3, 1] = col_dir * sp_row
    last = records[-1]
    if len(records) > 1 and last.position is not None:
        affine[:3, 2] = (last.position - first.position) / (len(records) - 1)
    else:
        normal = np.cross(row_dir, col_dir)
        step = tags.get("spacing_between_slices") or tags.get("slice_thickness") or 1.0
        affine[:3, 2] = normal * float(step)
    affine[:3, 3] = first.position
    return affine


def _passthrough_tags(parsed: ParsedDicom) -> dict[str, dict]:
    """Primitive non-canonical tags as ``{"gggg,eeee": {vr, value}}``."""
    out: dict[str, dict] = {}
    for (group, elem), (vr, value) in sorted(parsed.elements.items()):
        if (group, elem) in _NOT_PASSTHROUGH or group == 0x0002 or elem == 0x0000:
            continue
        if value is None or isinstance(value, bytes):
            continue
        out[f"{group:04x},{elem:04x}"] = {"vr": vr, "value": value}
    return out


def read_dicom_series(
    paths: list[str | Path],
) -> tuple[DecodedSeries, list[tuple[str, str, str]]]:
    """Assemble one series from files; returns (series, exclusion records).

    Exclusion records are ``(path, reason, detail)`` triples. Raises
    ``NothingIngestable`` when every file is excluded and ``MixedSeries``
    when survivors disagree on identity, shape, or sample layout.
    """
    records: list[SliceRecord] = []
    exclusions: list[tuple[str, str, str]] = []
    for path in paths:
        try:
            records.append(read_dicom_file(path))
        except Excluded as err:
            exclusions.append((str(path), err.reason.value, err.detail))
    if not records:
        raise NothingIngestable("every file in the series was excluded", exclusions)

    uids = {r.series_uid for r in records}
    if len(uids) > 1:
        raise MixedSeries(f"multiple series identifiers in one group: {sorted(uids)}")
    shapes = {r.raw.shape for r in records}
    if len(shapes) > 1:
        raise MixedSeries(f"inconsistent slice dimensions: {sorted(shapes)}")
    layouts = {(r.bits_allocated, r.bits_stored, r.pixel_representation) for r in records}
    if len(layouts) > 1:
        raise MixedSeries(f"inconsistent sample layouts: {sorted(layouts)}")

    records = _sort_records(records)

    # One series-wide shift keeps stored samples unsigned while the original
    # signal stays exact: signal = (stored + shift) * slope + intercept.
    # A negative shift times a fractional slope would break the integer
    # intercept, so such files are excluded when a shift is needed.
    while True:
        overall_min = min(int(r.raw.min()) for r in records)
        shift = overall_min if overall_min < 0 else 0
        bad = [r for r in records if shift and r.slope.denominator != 1]
        if not bad:
            break
        bad_ids = {id(r) for r in bad}
        for r in bad:
            exclusions.append(
                (r.path, ExclusionReason.UNSUPPORTED_TYPE.value,
                 f"fractional slope {r.slope} with signed samples")
            )
        records = [r for r in records if id(r) not in bad_ids]
        if not records:
            raise NothingIngestable("every file in the series was excluded", exclusions)

    overall_max = max(int(r.raw.max()) for r in records)
    span = overall_max - shift
    bit_depth = max(1, span.bit_length())

    planes = [
        PixelPlane(
            (r.raw - shift).astype(np.uint16),
            bit_depth,
            rescale_intercept=int(r.intercept + shift * r.slope),
            rescale_slope=r.slope,
        )
        for r in records
    ]

    first = records[0]
    tags: dict = {
        "series_id": first.series_uid or Path(first.path).stem,
        "rows": int(first.raw.shape[0]),
        "cols": int(first.raw.shape[1]),
        "num_slices": len(records),
        "bits_stored": planes[0].bit_depth,
        "rescale_intercept": planes[0].rescale_intercept,
        "rescale_slope": float(planes[0].rescale_slope),
        "source_tags": _passthrough_tags(first.parsed),
    }
    modality = first.parsed.get(TAG_MODALITY)
    if modality:
        tags["modality"] = str(modality)
    photometric = first.parsed.get(TAG_PHOTOMETRIC)
    if photometric:
        tags["photometric"] = str(photometric)
    spacing = first.parsed.get(TAG_PIXEL_SPACING)
    if isinstance(spacing, list) and len(spacing) == 2:
        tags["pixel_spacing_row"] = float(spacing[0])
        tags["pixel_spacing_col"] = float(spacing[1])
    for key, tag in (
        ("slice_thickness", TAG_SLICE_THICKNESS),
        ("spacing_between_slices", TAG_SPACING_BETWEEN),
    ):
        value = first.parsed.get(tag)
        if value is not None:
            tags[key] = float(value)
    if first.position is not None:
        tags["image_position"] = [float(v) for v in first.position]
    if first.orientation is not None:
        tags["image_orientation"] = [float(v) for v in first.orientation]

    meta = MetadataDocument(FormatKind.DICOM, tags)
    affine = _series_affine(records, tags)
    if affine is not None:
        meta.set_affine(affine)
    return DecodedSeries(meta, planes), exclusions


def derive_uid(text: str) -> str:
    """Deterministic UID in the 2.25 arc from arbitrary text."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return "2.25." + str(int.from_bytes(digest[:12], "big"))


def _is_uid(text: str) -> bool:
    return (
        0 < len(text) <= 64
        and all(c.isdigit() or c == "." for c in text)
        and not text.startswith(".")
        and not text.endswith(".")
        and ".." not in text
    )


def _format_ds(value) -> str:
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        value = float(value)
    if isinstance(value, int):
        return str(value)
    text = repr(float(value))
    if len(text) > 16:
        text = f"{float(value):.10g}"
    return text


def _encode_value(vr: str, value) -> bytes:
    if isinstance(value, bytes):
        raw = value
    elif vr in ("US", "SS", "UL", "SL", "FL", "FD"):
        fmt = {"US": "H", "SS": "h", "UL": "I", "SL": "i", "FL": "f", "FD": "d"}[vr]
        items = value if isinstance(value, list) else [value]
        raw = struct.pack(f"<{len(items)}{fmt}", *items)
    else:
        items = value if isinstance(value, list) else [value]
        if vr == "DS":
            text = "\\".join(_format_ds(v) for v in items)
        elif vr == "IS":
            text = "\\".join(str(int(v)) for v in items)
        else:
            text = "\\".join(str(v) for v in items)
        raw = text.encode("latin-1")
    if len(raw) % 2:
        raw += b"\x00" if vr in ("UI", "OB", "OW", "UN") else b" "
    return raw


def _element(group: int, elem: int, vr: str, value) -> bytes:
    raw = _encode_value(vr, value)
    head = struct.pack("<HH", group, elem) + vr.encode("ascii")
    if vr in _LONG_VRS:
        return head + b"\x00\x00" + struct.pack("<I", len(raw)) + raw
    if len(raw) > 0xFFFF:
        raise ValueError(f"value of {group:04x},{elem:04x} too long for a short element")
    return head + struct.pack("<H", len(raw)) + raw


def write_dicom_slice(series: DecodedSeries, index: int) -> bytes:
    """Serialise one slice as an explicit VR little endian Part 10 file."""
    plane = series.planes[index]
    tags = series.metadata.tags
    source_tags = tags.get("source_tags", {})

    sid = str(tags.get("series_id", "series"))
    series_uid = sid if _is_uid(sid) else derive_uid(f"series/{sid}")
    sop_uid = derive_uid(f"sop/{series_uid}/{index}")
    study = source_tags.get("0020,000d")
    study_uid = (
        str(study["value"])
        if isinstance(study, dict) and _is_uid(str(study.get("value", "")))
        else derive_uid(f"study/{series_uid}")
    )
    sop_class = source_tags.get("0008,0016")
    sop_class_uid = (
        str(sop_class["value"]) if isinstance(sop_class, dict) else _SECONDARY_CAPTURE
    )

    bits_allocated = 8 if plane.bit_depth <= 8 else 16
    if bits_allocated == 8:
        pixel_vr, pixel_bytes = "OB", plane.samples.astype("<u1").tobytes()
    else:
        pixel_vr, pixel_bytes = "OW", plane.samples.astype("<u2").tobytes()

    elements: dict[tuple[int, int], tuple[str, object]] = {
        TAG_SOP_CLASS: ("UI", sop_class_uid),
        TAG_SOP_INSTANCE: ("UI", sop_uid),
        TAG_STUDY_UID: ("UI", study_uid),
        TAG_SERIES_UID: ("UI", series_uid),
        TAG_INSTANCE_NUMBER: ("IS", index + 1),
        TAG_SAMPLES_PER_PIXEL: ("US", 1),
        TAG_PHOTOMETRIC: ("CS", str(tags.get("photometric", "MONOCHROME2"))),
        TAG_ROWS: ("US", plane.rows),
        TAG_COLS: ("US", plane.cols),
        TAG_BITS_ALLOCATED: ("US", bits_allocated),
        TAG_BITS_STORED: ("US", plane.bit_depth),
        TAG_HIGH_BIT: ("US", plane.bit_depth - 1),
        TAG_PIXEL_REPRESENTATION: ("US", 0),
        TAG_RESCALE_INTERCEPT: ("DS", plane.rescale_intercept),
        TAG_RESCALE_SLOPE: ("DS", plane.rescale_slope),
        TAG_PIXEL_DATA: (pixel_vr, pixel_bytes),
    }
    if tags.get("modality") is not None:
        elements[TAG_MODALITY] = ("CS", str(tags["modality"]))
    if tags.get("pixel_spacing_row") is not None and tags.get("pixel_spacing_col") is not None:
        elements[TAG_PIXEL_SPACING] = (
            "DS",
            [tags["pixel_spacing_row"], tags["pixel_spacing_col"]],
        )
    if tags.get("slice_thickness") is not None:
        elements[TAG_SLICE_THICKNESS] = ("DS", tags["slice_thickness"])
    if tags.get("spacing_between_slices") is not None:
        elements[TAG_SPACING_BETWEEN] = ("DS", tags["spacing_between_slices"])

    affine = series.metadata.affine
    if affine is not None:
        position = affine[:3, 3] + affine[:3, 2] * index
        col_norm = np.linalg.norm(affine[:3, 0])
        row_norm = np.linalg.norm(affine[:3, 1])
        if col_norm > 0 and row_norm > 0:
            orientation = np.concatenate([affine[:3, 0] / col_norm, affine[:3, 1] / row_norm])
            elements[TAG_IMAGE_ORIENTATION] = ("DS", [float(v) for v in orientation])
        elements[TAG_IMAGE_POSITION] = ("DS", [float(v) for v in position])
    else:
        if tags.get("image_orientation") is not None:
            elements[TAG_IMAGE_ORIENTATION] = ("DS", list(tags["image_orientation"]))
        if tags.get("image_position") is not None:
            elements[TAG_IMAGE_POSITION] = ("DS", list(tags["image_position"]))

    for key, entry in source_tags.items():
        if not (isinstance(entry, dict) and "vr" in entry and "value" in entry):
            continue
        try:
            group, elem = (int(part, 16) for part in key.split(","))
        except ValueError:
            continue
        tag = (group, elem)
        if tag in elements or tag == TAG_PIXEL_DATA:
            continue
        elements[tag] = (str(entry["vr"]), entry["value"])

    body = b"".join(
        _element(group, elem, vr, value)
        for (group, elem), (vr, value) in sorted(elements.items())
    )

    meta_elements = [
        _element(0x0002, 0x0001, "OB", b"\x00\x01"),
        _element(0x0002, 0x0002, "UI", sop_class_uid),
        _element(0x0002, 0x0003, "UI", sop_uid),
        _element(0x0002, 0x0010, "UI", _EXPLICIT_LE),
        _element(0x0002, 0x0012, "UI", derive_uid("implementation/mist")),
    ]
    meta_body = b"".join(meta_elements)
    meta = _element(0x0002, 0x0000, "UL", len(meta_body)) + meta_body
    return b"\x00" * MAGIC_OFFSET + MAGIC + meta + body
