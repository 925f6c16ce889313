"""Shared fixtures and synthetic data generators."""

from __future__ import annotations

import numpy as np
import pytest


def bandlimited_image(rng: np.random.Generator, size: int = 512, cutoff: int = 12,
                      amplitude: int = 3000) -> np.ndarray:
    """Smooth band-limited test image with integer values in [0, amplitude].

    Built from a low-frequency half-spectrum so the content is genuinely
    smooth; rounding to integers adds the broadband dither real detectors
    show, which keeps fine-scale subbands non-degenerate.
    """
    spectrum = np.zeros((size, size // 2 + 1), dtype=np.complex128)
    block = rng.normal(size=(cutoff, cutoff)) + 1j * rng.normal(size=(cutoff, cutoff))
    spectrum[:cutoff, :cutoff] = block
    neg = rng.normal(size=(cutoff - 1, cutoff)) + 1j * rng.normal(size=(cutoff - 1, cutoff))
    spectrum[-(cutoff - 1):, :cutoff] = neg
    img = np.fft.irfft2(spectrum, s=(size, size))
    lo, hi = img.min(), img.max()
    scaled = (img - lo) / (hi - lo) * amplitude
    return np.round(scaled).astype(np.int32)


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
