"""Image I/O, grayscale conversion, binarization, and deterministic augmentation.

Rasters move through the pipeline as plain uint8 numpy arrays wrapped in a
small dataclass. Only binary Netpbm formats are supported (PGM ``P5`` and
PPM ``P6``, maxval 255); anything else should be converted beforehand, e.g.
``magick in.png -colorspace Gray out.pgm``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GlyphPipeError


class BadMagic(GlyphPipeError):
    """File does not start with a supported Netpbm magic (P5/P6)."""


class TruncatedData(GlyphPipeError):
    """Header or pixel payload ends before the declared size."""


class UnsupportedMaxval(GlyphPipeError):
    """Only maxval 255 (one byte per sample) is supported."""


@dataclass
class Raster:
    """Pixel grid with 1 (gray) or 3 (RGB) channels, row-major uint8 samples."""

    width: int
    height: int
    channels: int
    data: np.ndarray  # shape (height, width, channels), dtype uint8

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("raster dimensions must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        expected = (self.height, self.width, self.channels)
        if self.data.shape != expected:
            if self.data.size == self.width * self.height * self.channels:
                self.data = self.data.reshape(expected)
            else:
                raise ValueError(
                    f"data size {self.data.size} != {self.width}x{self.height}x{self.channels}"
                )

    def plane(self) -> np.ndarray:
        """The (height, width) view of a 1-channel raster."""
        if self.channels != 1:
            raise ValueError("plane() requires a 1-channel raster")
        return self.data[:, :, 0]

    def copy(self) -> "Raster":
        return Raster(self.width, self.height, self.channels, self.data.copy())


@dataclass
class BinaryRaster:
    """Boolean pixel grid; True marks foreground (ink)."""

    width: int
    height: int
    bits: np.ndarray  # shape (height, width), dtype bool

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=bool)
        if self.bits.shape != (self.height, self.width):
            if self.bits.size == self.width * self.height:
                self.bits = self.bits.reshape((self.height, self.width))
            else:
                raise ValueError("bits size does not match width x height")


@dataclass
class AugSpec:
    """Deterministic augmentation recipe.

    Draws rotation in [-rotation_range, +rotation_range] degrees, scale in
    [scale_min, scale_max], a brightness shift in [-brightness_delta,
    +brightness_delta], and per-pixel Gaussian noise with sigma noise_sigma,
    all from one PCG64 stream seeded with ``seed``. There is deliberately no
    flip parameter: mirroring changes the reading direction of a glyph.
    """

    rotation_range: float = 10.0
    scale_min: float = 0.9
    scale_max: float = 1.1
    brightness_delta: float = 20.0
    noise_sigma: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rotation_range <= 45.0:
            raise ValueError("rotation_range must be within [0, 45] degrees")
        if not (0.0 < self.scale_min <= self.scale_max <= 2.0):
            raise ValueError("scale range must satisfy 0 < lo <= hi <= 2")
        if self.brightness_delta < 0 or self.noise_sigma < 0:
            raise ValueError("brightness_delta and noise_sigma must be >= 0")


def _read_header_tokens(buf: bytes, start: int, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated ASCII integers, honoring # comments."""
    tokens: list[int] = []
    i = start
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i] == ord("#"):
            while i < n and buf[i] != ord("\n"):
                i += 1
            continue
        j = i
        while j < n and not buf[j : j + 1].isspace() and buf[j] != ord("#"):
            j += 1
        if j == i:
            raise TruncatedData("header ended before all fields were read")
        try:
            tokens.append(int(buf[i:j]))
        except ValueError:
            raise TruncatedData(f"non-numeric header token {buf[i:j]!r}") from None
        i = j
    return tokens, i


def load_image(path) -> Raster:
    """Load a binary PGM (P5) or PPM (P6) file with maxval 255."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic = buf[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise BadMagic(f"unsupported magic {magic!r} (want P5 or P6)")
    (width, height, maxval), pos = _read_header_tokens(buf, 2, 3)
    if width < 1 or height < 1:
        raise TruncatedData(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} unsupported (want 255)")
    pos += 1  # exactly one whitespace byte separates maxval from the payload
    need = width * height * channels
    payload = buf[pos : pos + need]
    if len(payload) < need:
        raise TruncatedData(f"expected {need} sample bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape((height, width, channels))
    return Raster(width, height, channels, data.copy())


def save_image(raster: Raster, path) -> None:
    """Write a raster as binary PGM (1 channel) or PPM (3 channels)."""
    magic = b"P5" if raster.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, raster.width, raster.height)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(raster.data.tobytes())


def invert(raster: Raster) -> Raster:
    """Flip light-on-dark plates to the dark-on-light convention."""
    return Raster(raster.width, raster.height, raster.channels, 255 - raster.data)


def to_grayscale(r: Raster) -> Raster:
    """Rec.601 luma: round(0.299 R + 0.587 G + 0.114 B). 1-channel input is returned unchanged."""
    if r.channels == 1:
        return r
    rgb = r.data.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    gray = np.floor(luma + 0.5).astype(np.uint8)  # round half up, platform-stable
    return Raster(r.width, r.height, 1, gray[:, :, None])


def otsu_threshold(g: Raster) -> int:
    """Threshold maximizing between-class variance over the 256-bin histogram.

    Pixels below the returned threshold are foreground. Ties pick the lowest
    threshold, which also makes a constant image come out all-background
    (every threshold scores zero, so t = 0 wins and nothing is below it).
    """
    hist = np.bincount(g.plane().ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    p = hist / total
    omega = np.cumsum(p)  # omega[t] = weight of samples <= t
    mu = np.cumsum(p * np.arange(256))
    mu_total = mu[-1]
    best_t, best_var = 0, -1.0
    for t in range(256):
        w0 = omega[t - 1] if t > 0 else 0.0  # class 0: samples < t
        w1 = 1.0 - w0
        if w0 <= 0.0 or w1 <= 0.0:
            var = 0.0
        else:
            mu0 = (mu[t - 1] if t > 0 else 0.0) / w0
            mu1 = (mu_total - (mu[t - 1] if t > 0 else 0.0)) / w1
            var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return best_t


def binarize_otsu(g: Raster) -> BinaryRaster:
    """Binarize a grayscale raster; dark samples (below the Otsu threshold) become foreground."""
    t = otsu_threshold(g)
    bits = g.plane() < t
    return BinaryRaster(g.width, g.height, bits)


def augment(g: Raster, spec: AugSpec) -> Raster:
    """Rotate, scale, brighten, and add noise, deterministically under spec.seed.

    Geometry uses inverse-mapped nearest-neighbor sampling about the image
    center with white (255) fill, so an identity spec reproduces the input
    bitwise and repeated calls with the same (input, spec) agree exactly.
    """
    if g.channels != 1:
        raise ValueError("augment expects a 1-channel raster")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    theta = rng.uniform(-spec.rotation_range, spec.rotation_range)
    scale = rng.uniform(spec.scale_min, spec.scale_max)
    shift = rng.uniform(-spec.brightness_delta, spec.brightness_delta)

    src = g.plane()
    h, w = src.shape
    out = src
    if theta != 0.0 or scale != 1.0:
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        yy, xx = np.mgrid[0:h, 0:w]
        dx = xx - cx
        dy = yy - cy
        rad = math.radians(theta)
        cos_t, sin_t = math.cos(rad), math.sin(rad)
        # inverse map: rotate by -theta, divide by scale
        sx = cx + (cos_t * dx + sin_t * dy) / scale
        sy = cy + (-sin_t * dx + cos_t * dy) / scale
        ix = np.floor(sx + 0.5).astype(np.int64)
        iy = np.floor(sy + 0.5).astype(np.int64)
        inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        out = np.full((h, w), 255, dtype=np.uint8)
        out[inside] = src[iy[inside], ix[inside]]

    vals = out.astype(np.float64) + shift
    if spec.noise_sigma > 0:
        vals = vals + rng.normal(0.0, spec.noise_sigma, size=vals.shape)
    vals = np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8)
    return Raster(w, h, 1, vals[:, :, None])
