"""Local decoder for progressive codestreams.

A codestream is self-describing: a 32-byte fixed header, then one
marker-delimited tile-part per resolution tier (coarsest first), then a
two-byte end marker. Decoding resolution level ``i`` (1-based, coarsest
first) needs only the byte prefix through tile-part ``i - 1``, which is what
lets a client download a fraction of the stream and still produce a valid
image.

Header layout (big-endian)::

    0   b"MIST"
    4   version (1)
    5   rows    uint32
    9   cols    uint32
    13  bit_depth  uint8
    14  n_levels   uint8
    15  log2(block_size) uint8
    16  rescale_intercept int64
    24  rescale_slope numerator   uint32
    28  rescale_slope denominator uint32

Each tile-part is ``0xFF90``, an index byte, a uint32 payload length, and
the payload. Tile-part 0 holds the coarsest approximation subband;
tile-part ``j >= 1`` holds the (hl, lh, hh) detail triple refining level
``j`` to ``j + 1``. Payloads are block entropy codes: coefficients are
zigzag-mapped to unsigned, cut into ``block_size`` squares in raster order,
and each block is one header byte (bit 7 = raw mode, bits 0..4 = Rice
parameter or raw bit width) followed by a byte-aligned bit payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import CorruptStream, LevelOutOfRange, TruncatedPrefix

MAGIC = b"MIST"
VERSION = 1
HEADER_LEN = 32
_HEADER_FMT = ">4sBIIBBBqII"
TILE_MARKER = b"\xff\x90"
TILE_HEADER_LEN = 7
_RAW_FLAG = 0x80
_PARAM_MASK = 0x1F


@dataclass(frozen=True)
class StreamHeader:
    """Parsed fixed header of one codestream."""

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


@dataclass(frozen=True)
class DecodedSlice:
    """One decoded plane at some resolution level."""

    samples: np.ndarray
    bit_depth: int
    rescale_intercept: int
    rescale_slope: Fraction

    @property
    def rows(self) -> int:
        return int(self.samples.shape[0])

    @property
    def cols(self) -> int:
        return int(self.samples.shape[1])

    def signal(self) -> np.ndarray:
        """Samples mapped back to the original signal scale."""
        slope = self.rescale_slope
        if slope.denominator == 1:
            return self.samples.astype(np.int64) * int(slope) + self.rescale_intercept
        return self.samples.astype(np.float64) * float(slope) + self.rescale_intercept


def parse_header(data: bytes) -> StreamHeader:
    """Parse and validate the fixed 32-byte stream header."""
    if len(data) < HEADER_LEN:
        raise TruncatedPrefix(f"{len(data)} bytes cannot hold a {HEADER_LEN}-byte header")
    magic, version, rows, cols, depth, n_levels, bs_log2, intercept, num, den = (
        struct.unpack_from(_HEADER_FMT, data, 0)
    )
    if magic != MAGIC:
        raise CorruptStream(f"stream does not start with {MAGIC!r}")
    if version != VERSION:
        raise CorruptStream(f"codestream version {version} is not supported")
    if rows < 1 or cols < 1 or not (1 <= depth <= 16) or num < 1 or den < 1:
        raise CorruptStream("header carries impossible plane parameters")
    return StreamHeader(
        rows=rows,
        cols=cols,
        bit_depth=depth,
        n_levels=n_levels,
        block_size=1 << bs_log2,
        rescale_intercept=intercept,
        rescale_slope=Fraction(num, den),
    )


def _tile_extent(data: bytes, offset: int, index: int) -> tuple[int, int]:
    """Bounds of tile-part ``index``'s payload, validating its header."""
    if offset + TILE_HEADER_LEN > len(data):
        raise TruncatedPrefix(f"prefix ends before the header of tile-part {index}")
    if data[offset : offset + 2] != TILE_MARKER:
        raise CorruptStream(f"no tile-part marker at byte {offset}")
    if data[offset + 2] != index:
        raise CorruptStream(f"tile-part {data[offset + 2]} found where {index} belongs")
    (length,) = struct.unpack_from(">I", data, offset + 3)
    start = offset + TILE_HEADER_LEN
    if start + length > len(data):
        raise TruncatedPrefix(f"prefix ends inside tile-part {index}")
    return start, start + length


def _approximation_dims(rows: int, cols: int, n_levels: int) -> list[tuple[int, int]]:
    """Plane dimensions after 0..n_levels dyadic splits (ceil halving)."""
    dims = [(rows, cols)]
    for _ in range(n_levels):
        r, c = dims[-1]
        dims.append(((r + 1) // 2, (c + 1) // 2))
    return dims


class _PayloadCursor:
    """Reads consecutive coefficient blocks out of one tile-part payload."""

    def __init__(self, payload: bytes):
        self._payload = payload
        self._bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
        self._zero_positions = np.flatnonzero(self._bits == 0)
        self.position = 0  # byte offset of the next block header

    def _fixed_width(self, first_bit: int, count: int, width: int) -> np.ndarray:
        """``count`` MSB-first ``width``-bit integers starting at ``first_bit``."""
        last_bit = first_bit + count * width
        if last_bit > self._bits.size:
            raise TruncatedPrefix("payload ends inside a block's fixed-width section")
        if width == 0 or count == 0:
            return np.zeros(count, dtype=np.uint64)
        window = self._bits[first_bit:last_bit].reshape(count, width).astype(np.uint64)
        weights = np.left_shift(
            np.uint64(1), np.arange(width - 1, -1, -1, dtype=np.uint64)
        )
        return (window * weights).sum(axis=1, dtype=np.uint64)

    def next_block(self, count: int) -> np.ndarray:
        """Decode the next block of ``count`` signed coefficients."""
        if self.position >= len(self._payload):
            raise TruncatedPrefix("payload ends before the next block header")
        mode = self._payload[self.position]
        param = mode & _PARAM_MASK
        first_bit = (self.position + 1) * 8

        if mode & _RAW_FLAG:
            unsigned = self._fixed_width(first_bit, count, param)
            bits_used = count * param
        else:
            cursor = int(np.searchsorted(self._zero_positions, first_bit))
            if cursor + count > self._zero_positions.size:
                raise TruncatedPrefix("payload ends inside a block's unary section")
            terminators = self._zero_positions[cursor : cursor + count]
            quotients = (np.diff(terminators, prepend=first_bit - 1) - 1).astype(np.uint64)
            remainder_bit = int(terminators[-1]) + 1
            remainders = self._fixed_width(remainder_bit, count, param)
            unsigned = (quotients << np.uint64(param)) | remainders
            bits_used = (remainder_bit - first_bit) + count * param

        self.position += 1 + (bits_used + 7) // 8
        if self.position > len(self._payload):
            raise TruncatedPrefix("payload ends before a block's final byte")
        half = (unsigned >> np.uint64(1)).astype(np.int64)
        return np.where(unsigned & np.uint64(1), -half - 1, half)


def _read_band(cursor: _PayloadCursor, shape: tuple[int, int], block: int) -> np.ndarray:
    rows, cols = shape
    out = np.empty((rows, cols), dtype=np.int64)
    for r0 in range(0, rows, block):
        for c0 in range(0, cols, block):
            h = min(block, rows - r0)
            w = min(block, cols - c0)
            out[r0 : r0 + h, c0 : c0 + w] = cursor.next_block(h * w).reshape(h, w)
    return out


def _read_tile_bands(
    payload: bytes, shapes: list[tuple[int, int]], block: int, index: int
) -> list[np.ndarray]:
    cursor = _PayloadCursor(payload)
    bands = [_read_band(cursor, shape, block) for shape in shapes]
    if cursor.position != len(payload):
        raise CorruptStream(f"tile-part {index} carries unread trailing bytes")
    return bands


def _merge(low: np.ndarray, high: np.ndarray, axis: int) -> np.ndarray:
    """Invert one lifting split along ``axis`` in exact integer arithmetic.

    ``low`` holds the even-index samples after the update step; ``high`` the
    odd-index prediction residuals. Boundaries mirror (whole-sample symmetric
    extension), matching the split the encoder applied.
    """
    s = np.moveaxis(np.asarray(low, dtype=np.int64), axis, 0)
    d = np.moveaxis(np.asarray(high, dtype=np.int64), axis, 0)
    evens, odds = s.shape[0], d.shape[0]
    if odds == 0:
        return np.moveaxis(s.copy(), 0, axis)
    left = np.concatenate([d[:1], d[: evens - 1]])
    right = d if odds == evens else np.concatenate([d, d[-1:]])
    even_samples = s - ((left + right + 2) >> 2)
    neighbour = (
        even_samples[1:]
        if odds < evens
        else np.concatenate([even_samples[1:], even_samples[-1:]])
    )
    odd_samples = d + ((even_samples[:odds] + neighbour) >> 1)
    out = np.empty((evens + odds,) + s.shape[1:], dtype=np.int64)
    out[0::2], out[1::2] = even_samples, odd_samples
    return np.moveaxis(out, 0, axis)


def _refine(ll: np.ndarray, hl: np.ndarray, lh: np.ndarray, hh: np.ndarray) -> np.ndarray:
    """One inverse dyadic step: four subbands to the next-finer approximation."""
    low_columns = _merge(ll, lh, axis=0)
    high_columns = _merge(hl, hh, axis=0)
    return _merge(low_columns, high_columns, axis=1)


def decode_prefix(data: bytes, level: int | None = None) -> DecodedSlice:
    """Decode a codestream prefix at ``level`` (1 = coarsest, None = finest).

    The prefix must cover tile-parts ``0 .. level - 1``; anything shorter
    raises :class:`TruncatedPrefix`. Sub-resolution output is clamped into
    the stored sample range; the finest level reproduces the plane exactly.
    """
    header = parse_header(data)
    if level is None:
        level = header.max_level
    else:
        level = int(level)
        if not (1 <= level <= header.max_level):
            raise LevelOutOfRange(
                f"level {level} outside [1, {header.max_level}]"
            )

    n = header.n_levels
    dims = _approximation_dims(header.rows, header.cols, n)

    start, end = _tile_extent(data, HEADER_LEN, 0)
    plane = _read_tile_bands(data[start:end], [dims[n]], header.block_size, 0)[0]

    for j in range(1, level):
        start, end = _tile_extent(data, end, j)
        parent_r, parent_c = dims[n - j]
        low_r, low_c = dims[n - j + 1]
        high_r, high_c = parent_r - low_r, parent_c - low_c
        shapes = [(low_r, high_c), (high_r, low_c), (high_r, high_c)]
        hl, lh, hh = _read_tile_bands(data[start:end], shapes, header.block_size, j)
        plane = _refine(plane, hl, lh, hh)

    clamped = np.clip(plane, 0, (1 << header.bit_depth) - 1).astype(np.uint16)
    clamped.setflags(write=False)
    return DecodedSlice(
        samples=clamped,
        bit_depth=header.bit_depth,
        rescale_intercept=header.rescale_intercept,
        rescale_slope=header.rescale_slope,
    )
