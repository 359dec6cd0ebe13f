"""Seeded salt-and-pepper corruption.

The random stream is SplitMix64 (Steele, Lea & Flood 2014; reference code by
S. Vigna).  Its n-th output depends only on ``seed + (n + 1) * GAMMA``, so the
stream for a whole image is generated in one vectorized pass and is
reproducible in any language with 64-bit unsigned arithmetic.  Pixel k (in
row-major order) consumes output k, mapped to a double in [0, 1) via its top
53 bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .amf_detector import NoiseMask
from .image_core import GrayImage

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of the SplitMix64 stream for ``seed``."""
    seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    n = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = seed + n * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def uniform01(seed: int, count: int) -> np.ndarray:
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class NoiseSpec:
    """Pepper probability ``p``, salt probability ``q`` and the impulse values."""

    p: float
    q: float
    s_min: float = 0.0
    s_max: float = 255.0
    seed: int = 0

    def __post_init__(self):
        if not (self.p >= 0 and self.q >= 0 and self.p + self.q <= 1):
            raise ValueError(f"need p >= 0, q >= 0, p + q <= 1 (got p={self.p}, q={self.q})")
        if not (0 <= self.s_min < self.s_max <= 255):
            raise ValueError(f"need 0 <= s_min < s_max <= 255 (got {self.s_min}, {self.s_max})")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def symmetric(cls, ratio: float, seed: int = 0) -> "NoiseSpec":
        """Equal salt and pepper probabilities summing to ``ratio``."""
        return cls(p=ratio / 2, q=ratio / 2, seed=seed)


def corrupt(img: GrayImage, spec: NoiseSpec) -> tuple[GrayImage, NoiseMask]:
    """Apply the noise model; returns the noisy image and the overwrite mask.

    The mask records every pixel whose draw selected an impulse, even when the
    original value already equaled that impulse.
    """
    draws = uniform01(spec.seed, img.width * img.height).reshape(img.shape)
    pepper = draws < spec.p
    salt = ~pepper & (draws < spec.p + spec.q)
    out = img.copy_pixels()
    out[pepper] = spec.s_min
    out[salt] = spec.s_max
    return GrayImage(out), NoiseMask(pepper | salt)


def noise_ratio(mask: NoiseMask) -> float:
    return mask.count / mask.flags.size
