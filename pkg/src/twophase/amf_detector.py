"""Phase one: adaptive median detection of impulse pixels."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numba
import numpy as np

from .image_core import GrayImage, PixelCoord


class NoiseMask:
    """Set of noise candidates as a boolean grid plus a row-major index.

    The index order fixes the coordinate system of every vector over the
    candidate set: ``u[k]`` belongs to pixel ``index[k]``.
    """

    def __init__(self, flags: np.ndarray):
        flags = np.array(flags, dtype=bool, copy=True)
        if flags.ndim != 2:
            raise ValueError("mask flags must be a 2-D array")
        flags.setflags(write=False)
        self.flags = flags

    @property
    def shape(self) -> tuple[int, int]:
        return self.flags.shape

    @cached_property
    def index(self) -> np.ndarray:
        """(|N|, 2) int array of (row, col), row-major."""
        idx = np.argwhere(self.flags)
        idx.setflags(write=False)
        return idx

    @cached_property
    def ordinals(self) -> np.ndarray:
        """Grid of positions in ``index``; -1 where unflagged."""
        grid = np.full(self.flags.shape, -1, dtype=np.int64)
        grid[self.flags] = np.arange(self.count)
        grid.setflags(write=False)
        return grid

    @property
    def count(self) -> int:
        return len(self.index)

    def coords(self) -> list[PixelCoord]:
        return [(int(i), int(j)) for i, j in self.index]

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, NoiseMask):
            return NotImplemented
        return np.array_equal(self.flags, other.flags)

    __hash__ = None

    def __repr__(self):
        h, w = self.shape
        return f"NoiseMask({h}x{w}, count={self.count})"

    @classmethod
    def empty(cls, shape) -> "NoiseMask":
        return cls(np.zeros(shape, dtype=bool))


def mask_index_of(mask: NoiseMask, c: PixelCoord) -> int | None:
    i, j = c
    h, w = mask.shape
    if not (0 <= i < h and 0 <= j < w):
        raise IndexError(f"pixel {c} outside mask of size {h}x{w}")
    k = int(mask.ordinals[i, j])
    return None if k < 0 else k


@dataclass(frozen=True)
class AmfConfig:
    w_max: int = 39
    s_min: float = 0.0
    s_max: float = 255.0

    def validate(self, shape: tuple[int, int]) -> None:
        if self.w_max < 3 or self.w_max % 2 == 0:
            raise ValueError(f"w_max must be an odd integer >= 3, got {self.w_max}")
        if self.w_max > min(shape):
            raise ValueError(f"w_max={self.w_max} exceeds the smaller image side {min(shape)}")
        if not self.s_min < self.s_max:
            raise ValueError("s_min must be smaller than s_max")


@numba.njit(cache=True)
def _grow_windows(pix, rows, cols, w_max, s_min, s_max, out):
    height, width = pix.shape
    buf = np.empty(w_max * w_max)
    for t in range(rows.shape[0]):
        i = rows[t]
        j = cols[t]
        for half in range(1, w_max // 2 + 1):
            r0 = max(i - half, 0)
            r1 = min(i + half + 1, height)
            c0 = max(j - half, 0)
            c1 = min(j + half + 1, width)
            n = 0
            for a in range(r0, r1):
                for b in range(c0, c1):
                    buf[n] = pix[a, b]
                    n += 1
            window = np.sort(buf[:n])
            if n % 2 == 1:
                med = window[n // 2]
            else:
                med = 0.5 * (window[n // 2 - 1] + window[n // 2])
            if s_min < med < s_max:
                out[i, j] = med
                break


def adaptive_median(img: GrayImage, cfg: AmfConfig = AmfConfig()) -> tuple[NoiseMask, GrayImage]:
    """Flag impulse-valued pixels and replace them by an adaptive window median.

    Windows are centered odd squares clipped to the image, grown from 3x3 up
    to ``cfg.w_max`` until the median lies strictly between the impulse
    values.  A flagged pixel whose windows never yield such a median keeps its
    observed value in ``u0``.
    """
    cfg.validate(img.shape)
    pix = img.pixels
    flags = (pix == cfg.s_min) | (pix == cfg.s_max)
    u0 = img.copy_pixels()
    rows, cols = np.nonzero(flags)
    if len(rows):
        _grow_windows(pix, rows.astype(np.int64), cols.astype(np.int64), cfg.w_max,
                      float(cfg.s_min), float(cfg.s_max), u0)
    return NoiseMask(flags), GrayImage(u0)


def detection_recall(detected: NoiseMask, truth: NoiseMask) -> float:
    """Fraction of ground-truth corrupted pixels that were flagged."""
    n_true = truth.count
    if n_true == 0:
        return 1.0
    return float(np.count_nonzero(detected.flags & truth.flags)) / n_true


def save_mask(mask: NoiseMask, path) -> Path:
    """Write ``mask`` as binary PBM (P4, 1 = flagged) with a ``count=`` sidecar.

    Returns the sidecar path (``<path>.txt``).
    """
    path = Path(path)
    h, w = mask.shape
    body = np.packbits(mask.flags, axis=1).tobytes()
    path.write_bytes(f"P4\n{w} {h}\n".encode("ascii") + body)
    sidecar = path.with_name(path.name + ".txt")
    sidecar.write_text(f"count={mask.count}\n")
    return sidecar


def load_mask(path) -> NoiseMask:
    data = Path(path).read_bytes()
    m = re.match(rb"P4\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError(f"{path}: not a binary PBM file")
    w, h = int(m.group(1)), int(m.group(2))
    offset = m.end()
    row_bytes = (w + 7) // 8
    payload = np.frombuffer(data[offset : offset + row_bytes * h], dtype=np.uint8)
    if payload.size != row_bytes * h:
        raise ValueError(f"{path}: truncated PBM payload")
    flags = np.unpackbits(payload.reshape(h, row_bytes), axis=1)[:, :w].astype(bool)
    return NoiseMask(flags)
