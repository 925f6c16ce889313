"""Self-describing progressive codestream for one sample plane.

Layout::

    header (32 bytes)
      0   magic  b"MIST"
      4   version (1)
      5   rows    uint32 BE
      9   cols    uint32 BE
      13  bit_depth  uint8
      14  n_levels   uint8
      15  log2(block_size) uint8
      16  rescale_intercept int64 BE
      24  rescale_slope numerator  uint32 BE
      28  rescale_slope denominator uint32 BE
    tile-part 0 .. n_levels      each: 0xFF90, index byte, payload
                                 length uint32 BE, payload
    end marker 0xFFD9

Tile-part 0 carries the coarsest approximation subband; tile-part ``j >= 1``
carries the (hl, lh, hh) detail triple that refines resolution level ``j``
to level ``j + 1``. Decoding level ``i`` therefore needs exactly the byte
prefix through tile-part ``i - 1``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

from ..errors import CorruptMarker, LevelOutOfRange, TruncatedStream
from .plane import FULL, MAX_BIT_DEPTH, DecompositionSpec, PixelPlane
from .rice import BlockReader, encode_subband, read_subband
from .transform import SubbandPyramid, forward_transform, inverse_transform

MAGIC = b"MIST"
VERSION = 1
SOT_MARKER = b"\xff\x90"
EOC_MARKER = b"\xff\xd9"
HEADER_LEN = 32
TILE_PART_HEADER_LEN = 7

_HEADER_FMT = ">4sBIIBBBqII"


@dataclass(frozen=True)
class HeaderInfo:
    """Decoded fixed header of a codestream."""

    rows: int
    cols: int
    bit_depth: int
    n_levels: int
    block_size: int
    rescale_intercept: int
    rescale_slope: Fraction

    @property
    def max_level(self) -> int:
        return self.n_levels + 1


@dataclass(frozen=True, eq=False)
class Codestream:
    """Encoded plane bytes plus the header fields they start with."""

    data: bytes
    header: HeaderInfo

    def __len__(self) -> int:
        return len(self.data)

    @property
    def max_level(self) -> int:
        return self.header.max_level


def _pack_header(plane: PixelPlane, spec: DecompositionSpec) -> bytes:
    slope = plane.rescale_slope
    if slope.numerator > 0xFFFFFFFF or slope.denominator > 0xFFFFFFFF:
        raise ValueError(f"rescale slope {slope} does not fit the header")
    return struct.pack(
        _HEADER_FMT,
        MAGIC,
        VERSION,
        plane.rows,
        plane.cols,
        plane.bit_depth,
        spec.n_levels,
        spec.block_size.bit_length() - 1,
        plane.rescale_intercept,
        slope.numerator,
        slope.denominator,
    )


def parse_header(data: bytes) -> HeaderInfo:
    """Read and sanity-check the fixed 32-byte header."""
    if len(data) < HEADER_LEN:
        raise TruncatedStream(f"stream holds {len(data)} bytes, header needs {HEADER_LEN}")
    magic, version, rows, cols, bit_depth, n_levels, bs_log2, intercept, num, den = (
        struct.unpack_from(_HEADER_FMT, data, 0)
    )
    if magic != MAGIC:
        raise CorruptMarker(f"bad magic {magic!r} at byte 0")
    if version != VERSION:
        raise CorruptMarker(f"unsupported codestream version {version}")
    if rows < 1 or cols < 1:
        raise CorruptMarker(f"invalid plane dimensions {rows}x{cols} in header")
    if not (1 <= bit_depth <= MAX_BIT_DEPTH):
        raise CorruptMarker(f"invalid bit depth {bit_depth} in header")
    if num < 1 or den < 1:
        raise CorruptMarker(f"invalid rescale slope {num}/{den} in header")
    return HeaderInfo(
        rows=rows,
        cols=cols,
        bit_depth=bit_depth,
        n_levels=n_levels,
        block_size=1 << bs_log2,
        rescale_intercept=intercept,
        rescale_slope=Fraction(num, den),
    )


def approximation_dims(rows: int, cols: int, n_levels: int) -> list[tuple[int, int]]:
    """Approximation dimensions per depth: entry ``d`` after ``d`` splits."""
    dims = [(rows, cols)]
    for _ in range(n_levels):
        r, c = dims[-1]
        dims.append(((r + 1) // 2, (c + 1) // 2))
    return dims


def detail_shapes(
    rows: int, cols: int, n_levels: int, triple: int
) -> tuple[tuple[int, int], tuple[int, int], tuple[int, int]]:
    """Shapes of (hl, lh, hh) for the coarsest-first detail ``triple``."""
    dims = approximation_dims(rows, cols, n_levels)
    parent_r, parent_c = dims[n_levels - 1 - triple]
    low_r, low_c = dims[n_levels - triple]
    high_r, high_c = parent_r - low_r, parent_c - low_c
    return (low_r, high_c), (high_r, low_c), (high_r, high_c)


def tile_part_at(data: bytes, offset: int, expected_index: int) -> tuple[int, int]:
    """Validate one tile-part header; return (payload_start, payload_end)."""
    if offset + TILE_PART_HEADER_LEN > len(data):
        raise TruncatedStream(
            f"stream ends at byte {len(data)}, before the header of tile-part {expected_index}"
        )
    if data[offset : offset + 2] != SOT_MARKER:
        raise CorruptMarker(
            f"tile-part marker absent at byte {offset} (expected tile-part {expected_index})"
        )
    index = data[offset + 2]
    if index != expected_index:
        raise CorruptMarker(f"tile-part {index} found where {expected_index} was expected")
    (length,) = struct.unpack_from(">I", data, offset + 3)
    start = offset + TILE_PART_HEADER_LEN
    if start + length > len(data):
        raise TruncatedStream(
            f"tile-part {expected_index} declares {length} payload bytes "
            f"but the stream ends at byte {len(data)}"
        )
    return start, start + length


def encode(plane: PixelPlane, spec: DecompositionSpec | None = None) -> Codestream:
    """Encode a plane losslessly into a progressive codestream."""
    if spec is None:
        spec = DecompositionSpec.for_plane(plane.rows, plane.cols)
    pyramid = forward_transform(plane, spec.n_levels)
    bs = spec.block_size

    payloads = [encode_subband(pyramid.ll, bs)]
    for hl, lh, hh in pyramid.details:
        payloads.append(
            encode_subband(hl, bs) + encode_subband(lh, bs) + encode_subband(hh, bs)
        )

    chunks = [_pack_header(plane, spec)]
    for index, payload in enumerate(payloads):
        chunks.append(SOT_MARKER + bytes([index]) + struct.pack(">I", len(payload)))
        chunks.append(payload)
    chunks.append(EOC_MARKER)
    data = b"".join(chunks)
    return Codestream(data=data, header=parse_header(data))


def _read_tile_part_bands(
    payload: bytes, shapes: list[tuple[int, int]], block_size: int, index: int
) -> list:
    reader = BlockReader(payload)
    bands = [read_subband(reader, shape, block_size) for shape in shapes]
    if reader.bytes_consumed != len(payload):
        raise CorruptMarker(
            f"tile-part {index} carries {len(payload) - reader.bytes_consumed} trailing bytes"
        )
    return bands


def decode(data: bytes | Codestream, level: int | None = FULL) -> PixelPlane:
    """Decode a codestream (or any byte prefix covering ``level``).

    ``level`` counts decodable resolutions from 1 (coarsest) to
    ``n_levels + 1`` (full, bit-exact); ``FULL``/None means the finest.
    Sub-resolution output is the partially reconstructed approximation,
    clamped into the stored sample range.
    """
    if isinstance(data, Codestream):
        data = data.data
    header = parse_header(data)
    if level is FULL:
        lvl = header.max_level
    else:
        lvl = int(level)
        if not (1 <= lvl <= header.max_level):
            raise LevelOutOfRange(
                f"level {level} outside [1, {header.max_level}] "
                f"for a {header.n_levels}-level stream"
            )

    n = header.n_levels
    dims = approximation_dims(header.rows, header.cols, n)

    offset = HEADER_LEN
    start, end = tile_part_at(data, offset, 0)
    ll = _read_tile_part_bands(data[start:end], [dims[n]], header.block_size, 0)[0]

    details = []
    for j in range(1, lvl):
        start, end = tile_part_at(data, end, j)
        shapes = list(detail_shapes(header.rows, header.cols, n, j - 1))
        hl, lh, hh = _read_tile_part_bands(data[start:end], shapes, header.block_size, j)
        details.append((hl, lh, hh))

    pyramid = SubbandPyramid(
        ll=ll,
        details=tuple(details),
        bit_depth=header.bit_depth,
        rescale_intercept=header.rescale_intercept,
        rescale_slope=header.rescale_slope,
    )
    return inverse_transform(pyramid)
