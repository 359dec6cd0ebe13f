"""Gray-scale pixel grids, 4-neighborhoods and PGM file I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PixelCoord = tuple[int, int]


class PGMError(ValueError):
    """Raised for malformed PGM input; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Real-valued gray-scale image, row-major, intensities in [0, 255].

    ``pixels`` is a (height, width) float64 array.  Values are only quantized
    to integers when written to disk.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 255.0:
            raise ValueError("pixel intensities must lie in [0, 255]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def copy_pixels(self) -> np.ndarray:
        """Writable copy of the pixel array."""
        return self.pixels.copy()

    def quantized(self) -> np.ndarray:
        return quantize(self.pixels)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


def quantize(values: np.ndarray) -> np.ndarray:
    """Round half up to the nearest integer and clamp to 0..255 (uint8)."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def neighborhood(c: PixelCoord, img_dims: tuple[int, int]) -> list[PixelCoord]:
    """In-bounds 4-neighbors of ``c`` in the order left, right, up, down."""
    i, j = c
    height, width = img_dims
    if not (0 <= i < height and 0 <= j < width):
        raise IndexError(f"pixel {c} outside image of size {height}x{width}")
    candidates = ((i, j - 1), (i, j + 1), (i - 1, j), (i + 1, j))
    return [(a, b) for a, b in candidates if 0 <= a < height and 0 <= b < width]


_TOKEN = re.compile(rb"\S+")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    # Reads ``count`` whitespace-separated tokens, skipping '#' comments.
    # Returns the tokens and the offset just past the last one.
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise PGMError("truncated header", pos)
        if data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
            continue
        m = _TOKEN.match(data, pos)
        tokens.append(m.group(0))
        pos = m.end()
    return tokens, pos


def _parse_int(tok: bytes, offset: int, what: str) -> int:
    if not tok.isdigit():
        raise PGMError(f"invalid {what} {tok!r}", offset)
    return int(tok)


def parse_pgm(data: bytes) -> GrayImage:
    """Decode P5 (binary) or P2 (ASCII) PGM bytes with maxval 255."""
    tokens, pos = _header_tokens(data, 4)
    magic, w_tok, h_tok, max_tok = tokens
    if magic not in (b"P5", b"P2"):
        raise PGMError(f"unsupported magic number {magic!r}", 0)
    width = _parse_int(w_tok, pos, "width")
    height = _parse_int(h_tok, pos, "height")
    maxval = _parse_int(max_tok, pos, "maxval")
    if width < 1 or height < 1:
        raise PGMError("image dimensions must be positive", pos)
    if maxval != 255:
        raise PGMError(f"maxval must be 255, got {maxval}", pos)
    n = width * height

    if magic == b"P5":
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise PGMError("missing whitespace after maxval", pos)
        start = pos + 1
        payload = data[start : start + n]
        if len(payload) < n:
            raise PGMError(f"truncated payload: expected {n} bytes, got {len(payload)}", start + len(payload))
        arr = np.frombuffer(payload, dtype=np.uint8)
    else:
        values = []
        for m in _TOKEN.finditer(data, pos):
            if len(values) == n:
                break
            tok = m.group(0)
            v = _parse_int(tok, m.start(), "pixel value")
            if v > 255:
                raise PGMError(f"pixel value {v} exceeds maxval", m.start())
            values.append(v)
        if len(values) < n:
            raise PGMError(f"truncated payload: expected {n} values, got {len(values)}", len(data))
        arr = np.array(values, dtype=np.uint8)
    return GrayImage(arr.reshape(height, width))


def encode_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.quantized().tobytes()


def load_pgm(path) -> GrayImage:
    return parse_pgm(Path(path).read_bytes())


def save_pgm(img: GrayImage, path) -> None:
    Path(path).write_bytes(encode_pgm(img))
