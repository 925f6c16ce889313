"""Reversible integer 5/3 lifting transform with symmetric extension.

Each dyadic level splits a dimension of length ``L`` into ``ceil(L/2)`` low
samples and ``floor(L/2)`` high samples. Boundaries use whole-sample
symmetric extension, so the two lifting steps invert exactly in integer
arithmetic at any plane size.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import StructuralMismatch
from .plane import PixelPlane


def _analyze(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """One lifting split along ``axis``; returns (low, high) int64 arrays."""
    x = np.moveaxis(np.asarray(x, dtype=np.int64), axis, 0)
    n = x.shape[0]
    if n == 1:
        low, high = x.copy(), x[:0].copy()
        return np.moveaxis(low, 0, axis), np.moveaxis(high, 0, axis)
    xe, xo = x[0::2], x[1::2]
    ce, fl = xe.shape[0], xo.shape[0]
    # Predict: each odd sample against the mean of its even neighbours;
    # the right neighbour of a trailing odd sample mirrors onto xe[-1].
    right = xe[1:] if fl < ce else np.concatenate([xe[1:], xe[-1:]])
    high = xo - ((xe[:fl] + right) >> 1)
    # Update: each even sample against its two detail neighbours, with
    # d[-1] -> d[0] at the head and d[fl] -> d[fl-1] at an odd-length tail.
    dl = np.concatenate([high[:1], high[: ce - 1]])
    dr = high if fl == ce else np.concatenate([high, high[-1:]])
    low = xe + ((dl + dr + 2) >> 2)
    return np.moveaxis(low, 0, axis), np.moveaxis(high, 0, axis)


def _synthesize(low: np.ndarray, high: np.ndarray, axis: int) -> np.ndarray:
    """Exact inverse of :func:`_analyze` along ``axis``."""
    s = np.moveaxis(np.asarray(low, dtype=np.int64), axis, 0)
    d = np.moveaxis(np.asarray(high, dtype=np.int64), axis, 0)
    ce, fl = s.shape[0], d.shape[0]
    if fl == 0:
        return np.moveaxis(s.copy(), 0, axis)
    dl = np.concatenate([d[:1], d[: ce - 1]])
    dr = d if fl == ce else np.concatenate([d, d[-1:]])
    xe = s - ((dl + dr + 2) >> 2)
    right = xe[1:] if fl < ce else np.concatenate([xe[1:], xe[-1:]])
    xo = d + ((xe[:fl] + right) >> 1)
    out = np.empty((ce + fl,) + s.shape[1:], dtype=np.int64)
    out[0::2], out[1::2] = xe, xo
    return np.moveaxis(out, 0, axis)


def _decompose_once(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split a plane into (ll, hl, lh, hh); hl is the column-high band."""
    lx, hx = _analyze(a, axis=1)
    ll, lh = _analyze(lx, axis=0)
    hl, hh = _analyze(hx, axis=0)
    return ll, hl, lh, hh


def _reconstruct_once(
    ll: np.ndarray, hl: np.ndarray, lh: np.ndarray, hh: np.ndarray
) -> np.ndarray:
    lx = _synthesize(ll, lh, axis=0)
    hx = _synthesize(hl, hh, axis=0)
    return _synthesize(lx, hx, axis=1)


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.int64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SubbandPyramid:
    """Coefficients of a decomposed plane, coarsest first.

    ``details[k]`` holds the ``(hl, lh, hh)`` triple that refines the
    approximation from depth ``n_levels - k`` to depth ``n_levels - k - 1``;
    ``details[-1]`` is the finest triple. A truncated pyramid (fewer detail
    triples than the plane originally had) reconstructs to the matching
    sub-resolution.
    """

    ll: np.ndarray
    details: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]
    bit_depth: int
    rescale_intercept: int = 0
    rescale_slope: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "ll", _frozen(self.ll))
        object.__setattr__(
            self,
            "details",
            tuple(tuple(_frozen(b) for b in triple) for triple in self.details),
        )
        object.__setattr__(self, "rescale_slope", Fraction(self.rescale_slope))
        self._validate_chain()

    def _validate_chain(self) -> None:
        if self.ll.ndim != 2 or self.ll.size == 0:
            raise StructuralMismatch(f"approximation must be 2-D, got shape {self.ll.shape}")
        rows, cols = self.ll.shape
        for depth, (hl, lh, hh) in enumerate(self.details):
            hr, hc = lh.shape[0], hl.shape[1]
            ok = (
                hr in (rows - 1, rows)
                and hc in (cols - 1, cols)
                and hl.shape == (rows, hc)
                and lh.shape == (hr, cols)
                and hh.shape == (hr, hc)
            )
            if not ok:
                raise StructuralMismatch(
                    f"detail triple {depth} shapes {hl.shape}/{lh.shape}/{hh.shape} "
                    f"do not refine a {rows}x{cols} approximation"
                )
            rows, cols = rows + hr, cols + hc

    @property
    def n_levels(self) -> int:
        return len(self.details)

    @property
    def shape(self) -> tuple[int, int]:
        """Dimensions of the plane the full pyramid reconstructs to."""
        rows, cols = self.ll.shape
        for hl, lh, _ in self.details:
            rows, cols = rows + lh.shape[0], cols + hl.shape[1]
        return rows, cols

    def truncated(self, keep_details: int) -> "SubbandPyramid":
        """Pyramid with only the ``keep_details`` coarsest detail triples."""
        if not (0 <= keep_details <= self.n_levels):
            raise ValueError(f"keep_details must be in [0, {self.n_levels}]")
        return SubbandPyramid(
            self.ll,
            self.details[:keep_details],
            self.bit_depth,
            self.rescale_intercept,
            self.rescale_slope,
        )


def forward_transform(plane: PixelPlane, n_levels: int) -> SubbandPyramid:
    """Decompose a plane ``n_levels`` times (0 is valid and copies)."""
    if n_levels < 0:
        raise ValueError(f"n_levels must be >= 0, got {n_levels}")
    cur = plane.samples.astype(np.int64)
    details = []
    for _ in range(n_levels):
        ll, hl, lh, hh = _decompose_once(cur)
        details.append((hl, lh, hh))
        cur = ll
    details.reverse()
    return SubbandPyramid(
        ll=cur,
        details=tuple(details),
        bit_depth=plane.bit_depth,
        rescale_intercept=plane.rescale_intercept,
        rescale_slope=plane.rescale_slope,
    )


def inverse_transform(pyramid: SubbandPyramid) -> PixelPlane:
    """Reconstruct the plane a pyramid describes.

    A complete pyramid inverts bit-exactly. A truncated pyramid yields the
    partially reconstructed approximation; its values can stray a few counts
    outside the stored range, so the result is clamped into
    ``[0, 2**bit_depth - 1]`` (a no-op for complete pyramids).
    """
    cur = pyramid.ll
    for hl, lh, hh in pyramid.details:
        cur = _reconstruct_once(cur, hl, lh, hh)
    clamped = np.clip(cur, 0, (1 << pyramid.bit_depth) - 1).astype(np.uint16)
    return PixelPlane(
        clamped,
        pyramid.bit_depth,
        rescale_intercept=pyramid.rescale_intercept,
        rescale_slope=pyramid.rescale_slope,
    )
