"""Restoration quality: mean squared error and PSNR against a clean reference."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image_core import GrayImage


def _pixels(img) -> np.ndarray:
    return img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)


def mse(ref, test) -> float:
    a, b = _pixels(ref), _pixels(test)
    if a.shape != b.shape:
        raise ValueError(f"image sizes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.square(a - b)))


def psnr_from_mse(err: float, peak_val: float = 255.0) -> float:
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak_val**2 / err)


def psnr(ref, test, peak_val: float = 255.0) -> float:
    """PSNR in dB; ``math.inf`` for identical images."""
    return psnr_from_mse(mse(ref, test), peak_val)


@dataclass(frozen=True)
class QualityReport:
    mse: float
    psnr_db: float
    peak_val: float = 255.0

    @classmethod
    def compare(cls, ref, test, peak_val: float = 255.0) -> "QualityReport":
        err = mse(ref, test)
        return cls(err, psnr_from_mse(err, peak_val), peak_val)
