"""Fidelity metrics between decoded sub-resolutions and the original.

The reference for a sub-resolution is the bilinearly downsampled
full-resolution plane; both images are min-max rescaled to [0, 1] before
comparison (a constant image maps to all zeros). SSIM uses uniform 7x7
windows fully inside the image and population moments; PSNR works on the
raw squared-error sum so identical images report infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from .codec import decode
from .errors import DimsMismatch, DimsOutOfRange

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03
_C1 = SSIM_K1**2
_C2 = SSIM_K2**2


def rescale_unit(image: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; constant images map to all zeros."""
    a = np.asarray(image, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def bilinear_downsample(image: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Downsample with half-pixel-center alignment.

    Output sample (i, j) interpolates the source at
    ``((i + 0.5) * rows / out_rows - 0.5, (j + 0.5) * cols / out_cols - 0.5)``,
    clamped to the source extent. Identity when dimensions match; a 2x
    reduction of an even-sized image equals 2x2 block means.
    """
    a = np.asarray(image, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {a.shape}")
    rows, cols = a.shape
    if not (1 <= out_rows <= rows) or not (1 <= out_cols <= cols):
        raise DimsOutOfRange(
            f"target {out_rows}x{out_cols} outside [1, {rows}]x[1, {cols}]"
        )
    if (out_rows, out_cols) == (rows, cols):
        return a.copy()

    src_y = np.clip((np.arange(out_rows) + 0.5) * (rows / out_rows) - 0.5, 0, rows - 1)
    src_x = np.clip((np.arange(out_cols) + 0.5) * (cols / out_cols) - 0.5, 0, cols - 1)
    y0 = np.floor(src_y).astype(np.intp)
    x0 = np.floor(src_x).astype(np.intp)
    y1 = np.minimum(y0 + 1, rows - 1)
    x1 = np.minimum(x0 + 1, cols - 1)
    wy = (src_y - y0)[:, None]
    wx = (src_x - x0)[None, :]

    top = a[np.ix_(y0, x0)] * (1 - wx) + a[np.ix_(y0, x1)] * wx
    bottom = a[np.ix_(y1, x0)] * (1 - wx) + a[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def _ssim_map(mx, my, mxx, myy, mxy):
    vx = mxx - mx * mx
    vy = myy - my * my
    cov = mxy - mx * my
    num = (2 * mx * my + _C1) * (2 * cov + _C2)
    den = (mx * mx + my * my + _C1) * (vx + vy + _C2)
    return num / den


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Mean structural similarity over uniform 7x7 interior windows.

    Inputs are expected on a [0, 1] scale. Images smaller than the window
    are compared as a single full-image window. SSIM(x, x) == 1.0 exactly.
    """
    X = np.asarray(x, dtype=np.float64)
    Y = np.asarray(y, dtype=np.float64)
    if X.shape != Y.shape:
        raise DimsMismatch(f"shape {X.shape} vs {Y.shape}")
    if X.ndim != 2 or X.size == 0:
        raise ValueError(f"expected non-empty 2-D images, got shape {X.shape}")
    rows, cols = X.shape
    if rows < SSIM_WINDOW or cols < SSIM_WINDOW:
        return float(
            _ssim_map(X.mean(), Y.mean(), (X * X).mean(), (Y * Y).mean(), (X * Y).mean())
        )

    half = SSIM_WINDOW // 2
    crop = (slice(half, rows - half), slice(half, cols - half))

    def win_mean(img):
        return uniform_filter(img, size=SSIM_WINDOW, mode="constant")[crop]

    values = _ssim_map(
        win_mean(X), win_mean(Y), win_mean(X * X), win_mean(Y * Y), win_mean(X * Y)
    )
    return float(values.mean())


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on a [0, 1] scale.

    ``10 * log10(pixel_count / squared_error_sum)``; identical images give
    ``math.inf``.
    """
    X = np.asarray(x, dtype=np.float64)
    Y = np.asarray(y, dtype=np.float64)
    if X.shape != Y.shape:
        raise DimsMismatch(f"shape {X.shape} vs {Y.shape}")
    if X.size == 0:
        raise ValueError("images must be non-empty")
    err = float(((X - Y) ** 2).sum())
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(X.size / err)


@dataclass(frozen=True)
class LevelQuality:
    """Per-level fidelity aggregated over the slices of one series."""

    level: int
    rows: int
    cols: int
    slice_count: int
    ssim_mean: float
    ssim_sd: float
    psnr_finite_mean: float | None
    psnr_finite_sd: float | None
    psnr_infinite_count: int

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "rows": self.rows,
            "cols": self.cols,
            "slice_count": self.slice_count,
            "ssim_mean": self.ssim_mean,
            "ssim_sd": self.ssim_sd,
            "psnr_finite_mean": self.psnr_finite_mean,
            "psnr_finite_sd": self.psnr_finite_sd,
            "psnr_infinite_count": self.psnr_infinite_count,
        }


@dataclass(frozen=True)
class QualityReport:
    """Fidelity of every decodable level of one stored series."""

    series_id: str
    levels: tuple[LevelQuality, ...] = field(default_factory=tuple)

    @property
    def max_level(self) -> int:
        return len(self.levels)

    def to_json_dict(self) -> dict:
        return {
            "series_id": self.series_id,
            "levels": [lq.to_json_dict() for lq in self.levels],
        }


def _aggregate(level: int, rows: int, cols: int, ssims: list, psnrs: list) -> LevelQuality:
    s = np.asarray(ssims, dtype=np.float64)
    finite = np.asarray([p for p in psnrs if math.isfinite(p)], dtype=np.float64)
    return LevelQuality(
        level=level,
        rows=rows,
        cols=cols,
        slice_count=len(ssims),
        ssim_mean=float(s.mean()),
        ssim_sd=float(s.std()),
        psnr_finite_mean=float(finite.mean()) if finite.size else None,
        psnr_finite_sd=float(finite.std()) if finite.size else None,
        psnr_infinite_count=sum(1 for p in psnrs if math.isinf(p)),
    )


def evaluate_series(store, series_id: str) -> QualityReport:
    """Compare every decodable level of a stored series against bilinearly
    downsampled full-resolution references."""
    manifest = store.manifest(series_id)
    max_level = manifest["max_level"]
    num_slices = manifest["num_slices"]

    per_level_ssim: dict[int, list[float]] = {lvl: [] for lvl in range(1, max_level + 1)}
    per_level_psnr: dict[int, list[float]] = {lvl: [] for lvl in range(1, max_level + 1)}
    dims: dict[int, tuple[int, int]] = {}

    for index in range(num_slices):
        data = store.slice_bytes(series_id, index)
        full = decode(data).samples.astype(np.float64)
        for lvl in range(1, max_level + 1):
            sub = decode(data, level=lvl)
            dims[lvl] = (sub.rows, sub.cols)
            reference = rescale_unit(bilinear_downsample(full, sub.rows, sub.cols))
            test = rescale_unit(sub.samples)
            per_level_ssim[lvl].append(ssim(reference, test))
            per_level_psnr[lvl].append(psnr(reference, test))

    levels = tuple(
        _aggregate(lvl, dims[lvl][0], dims[lvl][1], per_level_ssim[lvl], per_level_psnr[lvl])
        for lvl in range(1, max_level + 1)
    )
    return QualityReport(series_id=series_id, levels=levels)
