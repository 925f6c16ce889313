"""Single-file NIfTI-1 reader/writer built directly on the 348-byte header.

Reads ``.nii``/``.nii.gz`` in either byte order, preferring the sform affine
and falling back to the quaternion qform, then to pixel dimensions. Integer
voxel types are ingested (with a whole-volume range check); floating point
voxels and per-file scalings that cannot be folded into an integer intercept
are excluded. Writes little endian ``.nii`` with an sform affine.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..codec import MAX_BIT_DEPTH, PixelPlane
from ..errors import Excluded, ExclusionReason
from .metadata import DecodedSeries, FormatKind, MetadataDocument

HEADER_LEN = 348
_DATA_OFFSET = 352  # header + 4-byte extender
_HEADER_FMT = (
    "i 10s 18s i h B B 8h 3f h h h h 8f f f f h B B f f f f i i 80s 24s h h "
    "3f 3f 4f 4f 4f 16s 4s"
)
_MAGIC_SINGLE = b"n+1\x00"
_MAGIC_PAIR = b"ni1\x00"
_UNITS_MM = 2

_INT_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 256: np.int8, 512: np.uint16, 768: np.uint32}
_FLOAT_DTYPES = {16, 64, 1536}
_DATATYPE_FOR = {
    np.dtype(np.uint8): (2, 8),
    np.dtype(np.int16): (4, 16),
    np.dtype(np.int32): (8, 32),
    np.dtype(np.uint16): (512, 16),
}


def _unsupported(detail: str) -> Excluded:
    return Excluded(ExclusionReason.UNSUPPORTED_TYPE, detail)


@dataclass(frozen=True)
class _Header:
    byte_order: str
    dim: tuple[int, ...]
    datatype: int
    bitpix: int
    pixdim: tuple[float, ...]
    vox_offset: int
    scl_slope: float
    scl_inter: float
    qform_code: int
    sform_code: int
    quatern: tuple[float, float, float]
    qoffset: tuple[float, float, float]
    srow: np.ndarray


def _parse_header(buf: bytes) -> _Header:
    if len(buf) < HEADER_LEN:
        raise _unsupported(f"file holds {len(buf)} bytes, header needs {HEADER_LEN}")
    for order in ("<", ">"):
        (sizeof_hdr,) = struct.unpack_from(order + "i", buf, 0)
        if sizeof_hdr == HEADER_LEN:
            break
    else:
        raise _unsupported("header size field is not 348 in either byte order")
    fields = struct.unpack_from(order + _HEADER_FMT.replace(" ", ""), buf, 0)
    # Unpacked tuple indices: 7..14 dim, 19 datatype, 20 bitpix, 22..29
    # pixdim, 30 vox_offset, 31/32 scl, 44/45 q/sform codes, 46..48
    # quaternion, 49..51 qoffset, 52..63 srow, 65 magic.
    magic = fields[65]
    if magic == _MAGIC_PAIR:
        raise _unsupported("detached header/image pairs are not supported")
    if magic != _MAGIC_SINGLE:
        raise _unsupported(f"unrecognised magic {magic!r}")
    return _Header(
        byte_order=order,
        dim=tuple(int(v) for v in fields[7:15]),
        datatype=int(fields[19]),
        bitpix=int(fields[20]),
        pixdim=tuple(float(v) for v in fields[22:30]),
        vox_offset=int(fields[30]),
        scl_slope=float(fields[31]),
        scl_inter=float(fields[32]),
        qform_code=int(fields[44]),
        sform_code=int(fields[45]),
        quatern=(float(fields[46]), float(fields[47]), float(fields[48])),
        qoffset=(float(fields[49]), float(fields[50]), float(fields[51])),
        srow=np.array([fields[52:56], fields[56:60], fields[60:64]], dtype=np.float64),
    )


def _quaternion_affine(header: _Header) -> np.ndarray:
    b, c, d = header.quatern
    a_sq = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(max(a_sq, 0.0))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    qfac = -1.0 if header.pixdim[0] < 0 else 1.0
    spacing = np.array([header.pixdim[1], header.pixdim[2], header.pixdim[3] * qfac])
    affine = np.eye(4)
    affine[:3, :3] = rot * spacing[None, :]
    affine[:3, 3] = header.qoffset
    return affine


def _affine_from_header(header: _Header) -> np.ndarray:
    if header.sform_code > 0:
        affine = np.eye(4)
        affine[:3, :4] = header.srow
        return affine
    if header.qform_code > 0:
        return _quaternion_affine(header)
    affine = np.diag([header.pixdim[1] or 1.0, header.pixdim[2] or 1.0,
                      header.pixdim[3] or 1.0, 1.0])
    return affine


def read_nifti(path: str | Path) -> DecodedSeries:
    """Read one volume as a series of axial-index slices.

    Raises ``Excluded`` for voxel types or scalings the store cannot hold
    losslessly in unsigned 16-bit samples.
    """
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] == b"\x1f\x8b":
        buf = gzip.decompress(buf)
    header = _parse_header(buf)

    if header.datatype in _FLOAT_DTYPES:
        raise _unsupported("floating point voxels")
    dtype = _INT_DTYPES.get(header.datatype)
    if dtype is None:
        raise _unsupported(f"datatype code {header.datatype}")

    ndim = header.dim[0]
    if not (2 <= ndim <= 7):
        raise _unsupported(f"{ndim}-dimensional image")
    nx = max(1, header.dim[1])
    ny = max(1, header.dim[2])
    nz = max(1, header.dim[3]) if ndim >= 3 else 1
    for axis in range(4, ndim + 1):
        if header.dim[axis] > 1:
            raise _unsupported("multi-volume file (time or vector axis)")

    count = nx * ny * nz
    np_dtype = np.dtype(dtype).newbyteorder(header.byte_order)
    offset = max(header.vox_offset, _DATA_OFFSET)
    if offset + count * np_dtype.itemsize > len(buf):
        raise _unsupported(
            f"voxel payload needs {count * np_dtype.itemsize} bytes at offset {offset}, "
            f"file holds {len(buf)}"
        )
    volume = np.frombuffer(buf, dtype=np_dtype, count=count, offset=offset)
    volume = volume.reshape(nz, ny, nx).astype(np.int64)

    slope_f = header.scl_slope
    inter_f = header.scl_inter
    if np.isnan(slope_f) or slope_f in (0.0, 1.0):
        slope = Fraction(1)
    elif slope_f > 0 and np.isfinite(slope_f):
        slope = Fraction(slope_f)
    else:
        raise _unsupported(f"scale slope {slope_f} is not positive and finite")
    if np.isnan(inter_f):
        inter_f = 0.0
    if float(inter_f) != int(inter_f):
        raise _unsupported(f"non-integer scale intercept {inter_f}")
    inter = int(inter_f)

    lo = int(volume.min())
    hi = int(volume.max())
    shift = lo if lo < 0 else 0
    if shift and slope.denominator != 1:
        raise _unsupported(f"fractional slope {slope} with signed voxels")
    span = hi - shift
    if span >= (1 << MAX_BIT_DEPTH):
        raise Excluded(
            ExclusionReason.UNSUPPORTED_DEPTH,
            f"voxel values [{lo}, {hi}] span more than 16 bits",
        )
    bit_depth = max(1, span.bit_length())
    intercept = int(shift * slope) + inter

    stored = (volume - shift).astype(np.uint16)
    planes = [
        PixelPlane(stored[k], bit_depth, rescale_intercept=intercept, rescale_slope=slope)
        for k in range(nz)
    ]

    affine = _affine_from_header(header)
    name = path.name
    for suffix in (".gz", ".nii"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    tags = {
        "series_id": name,
        "rows": ny,
        "cols": nx,
        "num_slices": nz,
        "pixel_spacing_col": float(np.linalg.norm(affine[:3, 0])) or 1.0,
        "pixel_spacing_row": float(np.linalg.norm(affine[:3, 1])) or 1.0,
        "spacing_between_slices": float(np.linalg.norm(affine[:3, 2])) or 1.0,
        "bits_stored": bit_depth,
        "rescale_intercept": intercept,
        "rescale_slope": float(slope),
        "source_tags": {},
    }
    meta = MetadataDocument(FormatKind.NIFTI, tags)
    meta.set_affine(affine)
    return DecodedSeries(meta, planes)


def _materialise_volume(series: DecodedSeries) -> tuple[np.ndarray, float, float]:
    """Voxels to serialise plus the scl fields describing them."""
    planes = series.planes
    slopes = {p.rescale_slope for p in planes}
    intercepts = {p.rescale_intercept for p in planes}

    if len(slopes) == 1 and len(intercepts) == 1:
        slope = next(iter(slopes))
        intercept = next(iter(intercepts))
        stored = np.stack([p.samples.astype(np.int64) for p in planes])
        if slope == 1:
            return stored + intercept, 1.0, 0.0
        return stored, float(slope), float(intercept)

    if any(p.rescale_slope.denominator != 1 for p in planes):
        raise _unsupported(
            "per-slice fractional scaling cannot be materialised into one volume"
        )
    signal = np.stack(
        [
            p.samples.astype(np.int64) * int(p.rescale_slope) + p.rescale_intercept
            for p in planes
        ]
    )
    return signal, 1.0, 0.0


def _pick_dtype(lo: int, hi: int) -> np.dtype:
    if 0 <= lo and hi <= 0xFF:
        return np.dtype(np.uint8)
    if -(1 << 15) <= lo and hi < (1 << 15):
        return np.dtype(np.int16)
    if 0 <= lo and hi <= 0xFFFF:
        return np.dtype(np.uint16)
    return np.dtype(np.int32)


def write_nifti_bytes(series: DecodedSeries) -> bytes:
    """Serialise a series as one little endian single-file volume."""
    volume, scl_slope, scl_inter = _materialise_volume(series)
    dtype = _pick_dtype(int(volume.min()), int(volume.max()))
    datatype, bitpix = _DATATYPE_FOR[dtype]

    affine = series.metadata.affine
    if affine is None:
        tags = series.metadata.tags
        affine = np.diag(
            [
                float(tags.get("pixel_spacing_col") or 1.0),
                float(tags.get("pixel_spacing_row") or 1.0),
                float(tags.get("spacing_between_slices") or 1.0),
                1.0,
            ]
        )
    spacings = [float(np.linalg.norm(affine[:3, col])) or 1.0 for col in range(3)]

    nz, ny, nx = volume.shape
    header = struct.pack(
        "<" + _HEADER_FMT.replace(" ", ""),
        HEADER_LEN,                      # sizeof_hdr
        b"", b"",                        # data_type, db_name (unused)
        0, 0, 0, 0,                      # extents, session_error, regular, dim_info
        3, nx, ny, nz, 1, 1, 1, 1,       # dim
        0.0, 0.0, 0.0,                   # intent parameters
        0,                               # intent_code
        datatype,
        bitpix,
        0,                               # slice_start
        1.0, spacings[0], spacings[1], spacings[2], 0.0, 0.0, 0.0, 0.0,  # pixdim
        float(_DATA_OFFSET),             # vox_offset
        scl_slope,
        scl_inter,
        0, 0,                            # slice_end, slice_code
        _UNITS_MM,                       # xyzt_units
        0.0, 0.0,                        # cal_max, cal_min
        0.0, 0.0,                        # slice_duration, toffset
        0, 0,                            # glmax, glmin
        b"", b"",                        # descrip, aux_file
        0,                               # qform_code
        1,                               # sform_code
        0.0, 0.0, 0.0,                   # quatern b, c, d
        0.0, 0.0, 0.0,                   # qoffsets
        *(float(v) for v in affine[0, :4]),
        *(float(v) for v in affine[1, :4]),
        *(float(v) for v in affine[2, :4]),
        b"",                             # intent_name
        _MAGIC_SINGLE,
    )
    data = np.ascontiguousarray(volume.astype(dtype.newbyteorder("<"))).tobytes()
    return header + b"\x00\x00\x00\x00" + data
