"""Hand-rolled fixture builders, independent of the package's writers."""

from __future__ import annotations

import struct

import numpy as np

EXPLICIT_LE = "1.2.840.10008.1.2.1"
IMPLICIT_LE = "1.2.840.10008.1.2"

_LONG_VRS = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "UC", "UN", "UR", "UT"}


def pad(raw: bytes, vr: str) -> bytes:
    if len(raw) % 2:
        raw += b"\x00" if vr in ("UI", "OB", "OW", "UN") else b" "
    return raw


def enc_text(value: str) -> bytes:
    return value.encode("latin-1")


def el_explicit(group: int, elem: int, vr: str, raw: bytes, length: int | None = None) -> bytes:
    raw = pad(raw, vr)
    n = len(raw) if length is None else length
    head = struct.pack("<HH", group, elem) + vr.encode()
    if vr in _LONG_VRS:
        return head + b"\x00\x00" + struct.pack("<I", n) + raw
    return head + struct.pack("<H", n) + raw


def el_implicit(group: int, elem: int, raw: bytes, length: int | None = None) -> bytes:
    raw = pad(raw, "UN")
    n = len(raw) if length is None else length
    return struct.pack("<HHI", group, elem, n) + raw


def meta_group(transfer_syntax: str, sop_instance: str = "1.2.3.4") -> bytes:
    body = b"".join(
        [
            el_explicit(0x0002, 0x0001, "OB", b"\x00\x01"),
            el_explicit(0x0002, 0x0002, "UI", enc_text("1.2.840.10008.5.1.4.1.1.2")),
            el_explicit(0x0002, 0x0003, "UI", enc_text(sop_instance)),
            el_explicit(0x0002, 0x0010, "UI", enc_text(transfer_syntax)),
        ]
    )
    return el_explicit(0x0002, 0x0000, "UL", struct.pack("<I", len(body))) + body


def part10(dataset: bytes, transfer_syntax: str = EXPLICIT_LE) -> bytes:
    return b"\x00" * 128 + b"DICM" + meta_group(transfer_syntax) + dataset


def ct_slice(
    pixels: np.ndarray,
    *,
    series_uid: str = "1.2.826.0.1.100.1",
    instance: int = 1,
    position: tuple[float, float, float] = (0.0, 0.0, 0.0),
    orientation: tuple[float, ...] = (1, 0, 0, 0, 1, 0),
    spacing: tuple[float, float] = (0.7, 0.7),
    thickness: float = 2.0,
    intercept: str = "-1024",
    slope: str = "1",
    signed: bool = True,
    transfer_syntax: str = EXPLICIT_LE,
    extra: list[bytes] | None = None,
) -> bytes:
    """A realistic single-frame CT slice, explicit or implicit VR."""
    rows, cols = pixels.shape
    dtype = "<i2" if signed else "<u2"
    pixel_bytes = np.ascontiguousarray(pixels.astype(dtype)).tobytes()

    def ds(values) -> bytes:
        if isinstance(values, (tuple, list)):
            return enc_text("\\".join(str(v) for v in values))
        return enc_text(str(values))

    if transfer_syntax == EXPLICIT_LE:
        el = lambda g, e, vr, raw: el_explicit(g, e, vr, raw)  # noqa: E731
    else:
        el = lambda g, e, vr, raw: el_implicit(g, e, raw)  # noqa: E731

    elements = [
        el(0x0008, 0x0016, "UI", enc_text("1.2.840.10008.5.1.4.1.1.2")),
        el(0x0008, 0x0018, "UI", enc_text(f"{series_uid}.{instance}")),
        el(0x0008, 0x0060, "CS", enc_text("CT")),
        el(0x0018, 0x0050, "DS", ds(thickness)),
        el(0x0020, 0x000D, "UI", enc_text("1.2.826.0.1.100.0")),
        el(0x0020, 0x000E, "UI", enc_text(series_uid)),
        el(0x0020, 0x0013, "IS", enc_text(str(instance))),
        el(0x0020, 0x0032, "DS", ds(position)),
        el(0x0020, 0x0037, "DS", ds(orientation)),
        el(0x0028, 0x0002, "US", struct.pack("<H", 1)),
        el(0x0028, 0x0004, "CS", enc_text("MONOCHROME2")),
        el(0x0028, 0x0010, "US", struct.pack("<H", rows)),
        el(0x0028, 0x0011, "US", struct.pack("<H", cols)),
        el(0x0028, 0x0030, "DS", ds(spacing)),
        el(0x0028, 0x0100, "US", struct.pack("<H", 16)),
        el(0x0028, 0x0101, "US", struct.pack("<H", 16 if signed else 12)),
        el(0x0028, 0x0102, "US", struct.pack("<H", 15 if signed else 11)),
        el(0x0028, 0x0103, "US", struct.pack("<H", 1 if signed else 0)),
        el(0x0028, 0x1052, "DS", ds(intercept)),
        el(0x0028, 0x1053, "DS", ds(slope)),
    ]
    if extra:
        elements.extend(extra)
    elements.append(el(0x7FE0, 0x0010, "OW", pixel_bytes))
    return part10(b"".join(elements), transfer_syntax)


def nifti_bytes(
    volume: np.ndarray,
    *,
    datatype: int,
    affine: np.ndarray | None = None,
    pixdim: tuple[float, float, float] = (1.0, 1.0, 1.0),
    scl_slope: float = 1.0,
    scl_inter: float = 0.0,
    byte_order: str = "<",
    qform: tuple | None = None,
    dim0: int | None = None,
    extra_dim: int = 1,
) -> bytes:
    """Hand-packed single-file volume, field by field."""
    nz, ny, nx = volume.shape
    header = bytearray(348)
    struct.pack_into(byte_order + "i", header, 0, 348)
    ndim = dim0 if dim0 is not None else 3
    struct.pack_into(
        byte_order + "8h", header, 40, ndim, nx, ny, nz, extra_dim, 1, 1, 1
    )
    struct.pack_into(byte_order + "h", header, 70, datatype)
    bitpix = {2: 8, 4: 16, 8: 32, 16: 32, 64: 64, 256: 8, 512: 16, 768: 32}[datatype]
    struct.pack_into(byte_order + "h", header, 72, bitpix)
    struct.pack_into(
        byte_order + "8f", header, 76, 1.0, pixdim[0], pixdim[1], pixdim[2], 0, 0, 0, 0
    )
    struct.pack_into(byte_order + "f", header, 108, 352.0)
    struct.pack_into(byte_order + "f", header, 112, scl_slope)
    struct.pack_into(byte_order + "f", header, 116, scl_inter)
    if qform is not None:
        b, c, d, ox, oy, oz, qfac = qform
        struct.pack_into(byte_order + "h", header, 252, 1)
        struct.pack_into(byte_order + "6f", header, 256, b, c, d, ox, oy, oz)
        struct.pack_into(byte_order + "f", header, 76, qfac)
    if affine is not None:
        struct.pack_into(byte_order + "h", header, 254, 1)
        struct.pack_into(byte_order + "4f", header, 280, *affine[0, :4])
        struct.pack_into(byte_order + "4f", header, 296, *affine[1, :4])
        struct.pack_into(byte_order + "4f", header, 312, *affine[2, :4])
    struct.pack_into("4s", header, 344, b"n+1\x00")
    dtype = {
        2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32,
        64: np.float64, 256: np.int8, 512: np.uint16, 768: np.uint32,
    }[datatype]
    data = np.ascontiguousarray(volume.astype(np.dtype(dtype).newbyteorder(byte_order)))
    return bytes(header) + b"\x00\x00\x00\x00" + data.tobytes()


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random 3x3 rotation with determinant +1."""
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q
