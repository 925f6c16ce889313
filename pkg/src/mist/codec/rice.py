"""Block entropy coding of subband coefficients.

Coefficients are mapped to unsigned integers (zigzag), split into square
blocks in raster order, and each block is written as one header byte plus a
byte-aligned payload. Header bit 7 selects the mode:

* clear -- Rice code with parameter ``k`` (header bits 0..4): a unary
  quotient section (``q`` one-bits then a zero terminator per value, in
  order) followed by a remainder section of ``k`` bits per value, MSB first.
* set -- raw mode with bit width ``w`` (header bits 0..4): each value packed
  in ``w`` bits, MSB first. ``w == 0`` encodes an all-zero block in just the
  header byte.

The mode and parameter minimise the exact byte cost; ties go to Rice.
"""

from __future__ import annotations

import numpy as np

from ..errors import TruncatedStream

_RAW_FLAG = 0x80
_PARAM_MASK = 0x1F
_MAX_PARAM = 31


def _zigzag(values: np.ndarray) -> np.ndarray:
    """Map signed to unsigned: 0,-1,1,-2,2.. -> 0,1,2,3,4.."""
    v = np.asarray(values, dtype=np.int64)
    return np.where(v >= 0, v << 1, (-v << 1) - 1).astype(np.uint64)


def _unzigzag(codes: np.ndarray) -> np.ndarray:
    u = np.asarray(codes, dtype=np.uint64)
    half = (u >> np.uint64(1)).astype(np.int64)
    return np.where(u & np.uint64(1), -half - 1, half)


def _pack_msb(values: np.ndarray, width: int) -> bytes:
    """Pack each value into ``width`` bits, MSB first, zero-padded to bytes."""
    if width == 0 or values.size == 0:
        return b""
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    bits = ((values[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.ravel()).tobytes()


def encode_block(values: np.ndarray) -> bytes:
    """Encode one block of signed coefficients."""
    u = _zigzag(np.asarray(values, dtype=np.int64).ravel())
    n = int(u.size)
    if n == 0:
        raise ValueError("cannot encode an empty block")
    width = int(u.max()).bit_length()
    if width > _MAX_PARAM:
        raise ValueError(f"coefficient needs {width} bits, beyond the 31-bit block limit")

    ks = np.arange(width + 1, dtype=np.uint64)
    rice_bits = (u[None, :] >> ks[:, None]).sum(axis=1, dtype=np.uint64) + (ks + np.uint64(1)) * np.uint64(n)
    k = int(np.argmin(rice_bits))
    rice_bytes = (int(rice_bits[k]) + 7) // 8
    raw_bytes = (n * width + 7) // 8

    if raw_bytes < rice_bytes:
        return bytes([_RAW_FLAG | width]) + _pack_msb(u, width)

    q = (u >> np.uint64(k)).astype(np.int64)
    total = int(q.sum()) + n
    unary = np.ones(total, dtype=np.uint8)
    unary[np.cumsum(q + 1) - 1] = 0
    if k:
        mask = np.uint64((1 << k) - 1)
        shifts = np.arange(k - 1, -1, -1, dtype=np.uint64)
        rem = (((u & mask)[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
        stream = np.concatenate([unary, rem.ravel()])
    else:
        stream = unary
    return bytes([k]) + np.packbits(stream).tobytes()


class BlockReader:
    """Sequential block decoder over one contiguous payload buffer.

    The whole buffer is unpacked to bits once; unary runs are then parsed
    with a single sorted-search per block instead of per-bit loops.
    """

    def __init__(self, payload: bytes):
        self._buf = payload
        self._bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
        self._zeros = np.flatnonzero(self._bits == 0)
        self._pos = 0  # byte offset of the next block header

    @property
    def bytes_consumed(self) -> int:
        return self._pos

    @property
    def exhausted(self) -> bool:
        return self._pos >= len(self._buf)

    def _fixed_bits(self, start: int, count: int, width: int) -> np.ndarray:
        end = start + count * width
        if end > self._bits.size:
            raise TruncatedStream("block payload ends inside its remainder section")
        if width == 0 or count == 0:
            return np.zeros(count, dtype=np.uint64)
        window = self._bits[start:end].reshape(count, width).astype(np.uint64)
        weights = np.left_shift(np.uint64(1), np.arange(width - 1, -1, -1, dtype=np.uint64))
        return (window * weights).sum(axis=1, dtype=np.uint64)

    def read_block(self, count: int) -> np.ndarray:
        """Decode the next block of ``count`` signed coefficients."""
        if count < 1:
            raise ValueError("count must be positive")
        if self._pos >= len(self._buf):
            raise TruncatedStream("payload ends before the next block header")
        header = self._buf[self._pos]
        start = (self._pos + 1) * 8
        param = header & _PARAM_MASK

        if header & _RAW_FLAG:
            u = self._fixed_bits(start, count, param)
            used_bits = count * param
        else:
            zi = int(np.searchsorted(self._zeros, start))
            if zi + count > self._zeros.size:
                raise TruncatedStream("block payload ends inside its unary section")
            ends = self._zeros[zi : zi + count]
            q = (np.diff(ends, prepend=start - 1) - 1).astype(np.uint64)
            rem_start = int(ends[-1]) + 1
            rem = self._fixed_bits(rem_start, count, param)
            u = (q << np.uint64(param)) | rem
            used_bits = (rem_start - start) + count * param

        self._pos += 1 + (used_bits + 7) // 8
        if self._pos > len(self._buf):
            raise TruncatedStream("block payload ends before its final byte")
        return _unzigzag(u)


def encode_subband(band: np.ndarray, block_size: int) -> bytes:
    """Encode a 2-D subband block by block in raster order."""
    rows, cols = band.shape
    chunks = []
    for r0 in range(0, rows, block_size):
        for c0 in range(0, cols, block_size):
            chunks.append(encode_block(band[r0 : r0 + block_size, c0 : c0 + block_size]))
    return b"".join(chunks)


def read_subband(reader: BlockReader, shape: tuple[int, int], block_size: int) -> np.ndarray:
    """Decode a 2-D subband written by :func:`encode_subband`."""
    rows, cols = shape
    out = np.empty((rows, cols), dtype=np.int64)
    for r0 in range(0, rows, block_size):
        for c0 in range(0, cols, block_size):
            h = min(block_size, rows - r0)
            w = min(block_size, cols - c0)
            out[r0 : r0 + h, c0 : c0 + w] = reader.read_block(h * w).reshape(h, w)
    return out
