"""Raster containers, PGM/PNG I/O, connected components and bilinear resizing.

Coordinate convention used throughout the package: integer pixel (x, y)
is the unit square centered at the continuous point (x, y), so pixel
centers sit on integer coordinates and an image of width W spans
[-0.5, W - 0.5] horizontally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class MalformedImageError(Exception):
    """Raster file is structurally broken (bad header or truncated body)."""


class UnsupportedDepthError(Exception):
    """Raster file uses a bit depth other than 8 bits per sample."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale raster, row-major."""

    data: np.ndarray  # (h, w) uint8

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.uint8)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("GrayImage requires a non-empty 2-D array")
        object.__setattr__(self, "data", _readonly(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel probabilities in [0, 1], row-major."""

    data: np.ndarray  # (h, w) float64

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("ProbabilityMap requires a non-empty 2-D array")
        if np.min(a) < 0.0 or np.max(a) > 1.0:
            raise ValueError("probability values must lie in [0, 1]")
        object.__setattr__(self, "data", _readonly(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class BinaryMask:
    """Boolean raster with the dimensions of the map it was cut from."""

    data: np.ndarray  # (h, w) bool

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=bool)
        if a.ndim != 2:
            raise ValueError("BinaryMask requires a 2-D array")
        object.__setattr__(self, "data", _readonly(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class PixelRegion:
    """A set of pixels, stored as an (n, 2) array of (x, y) pairs.

    Pixels are kept in row-major scan order, which makes the smallest
    row-major index (used for deterministic region ordering) the first row.
    """

    pixels: np.ndarray  # (n, 2) int64, columns (x, y)

    def __post_init__(self):
        a = np.ascontiguousarray(self.pixels, dtype=np.int64)
        if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 1:
            raise ValueError("PixelRegion requires a non-empty (n, 2) array")
        object.__setattr__(self, "pixels", _readonly(a))

    @property
    def area(self) -> int:
        return self.pixels.shape[0]

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """Inclusive pixel bounds (x0, y0, x1, y1)."""
        xs, ys = self.pixels[:, 0], self.pixels[:, 1]
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())

    def min_row_major_index(self, width: int) -> int:
        p = self.pixels
        return int(np.min(p[:, 1] * width + p[:, 0]))

    def to_mask(self, width: int, height: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        m[self.pixels[:, 1], self.pixels[:, 0]] = True
        return m


def luma_from_rgb(rgb: np.ndarray) -> np.ndarray:
    """0.299R + 0.587G + 0.114B, rounded half-up to an integer."""
    r = rgb[..., 0].astype(np.float64)
    g = rgb[..., 1].astype(np.float64)
    b = rgb[..., 2].astype(np.float64)
    y = np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5)
    return np.clip(y, 0, 255).astype(np.uint8)


def _read_pgm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    i = 0
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < n and not buf[i : i + 1].isspace():
            i += 1
        if i == start:
            raise MalformedImageError("malformed header: truncated")
        tokens.append(buf[start:i])
    return tokens, i


def _parse_pgm(buf: bytes) -> np.ndarray:
    if buf[:2] != b"P5":
        raise MalformedImageError("malformed header: not a binary PGM (P5)")
    try:
        tokens, pos = _read_pgm_tokens(buf[2:], 3)
        width, height, maxval = (int(t) for t in tokens)
    except (ValueError, MalformedImageError) as exc:
        raise MalformedImageError(f"malformed header: {exc}") from None
    if width < 1 or height < 1:
        raise MalformedImageError("malformed header: non-positive dimensions")
    if maxval > 255:
        raise UnsupportedDepthError(f"unsupported bit depth: maxval {maxval}")
    if maxval < 1:
        raise MalformedImageError("malformed header: bad maxval")
    body = buf[2 + pos + 1 :]  # single whitespace byte after maxval
    if len(body) < width * height:
        raise MalformedImageError("malformed raster: truncated body")
    data = np.frombuffer(body[: width * height], dtype=np.uint8)
    return data.reshape(height, width)


def load_image(path) -> GrayImage:
    """Load a grayscale raster (binary PGM, or 8-bit PNG when Pillow is present).

    Color inputs are reduced with the integer luma rounding rule.
    """
    from pathlib import Path

    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such image: {p}")
    buf = p.read_bytes()
    if buf[:2] == b"P5":
        return GrayImage(_parse_pgm(buf).copy())
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return GrayImage(_load_png(p))
    raise MalformedImageError(f"malformed header: unrecognized format in {p}")


def _load_png(path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError:
        raise MalformedImageError(
            "PNG support requires Pillow (install the 'png' extra)"
        ) from None
    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8).copy()
        if img.mode in ("I", "I;16", "I;16B", "F"):
            raise UnsupportedDepthError(f"unsupported bit depth: PNG mode {img.mode}")
        return luma_from_rgb(np.asarray(img.convert("RGB")))


def save_image(image: GrayImage, path) -> None:
    """Write a binary PGM (P5); paths ending in .png go through Pillow."""
    from pathlib import Path

    p = Path(path)
    if p.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(image.data, mode="L").save(p)
        return
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    p.write_bytes(header + image.data.tobytes())


def save_probability_map(pmap: ProbabilityMap, path) -> None:
    """Serialize probabilities as 8-bit PGM with value = round(p * 255)."""
    q = np.floor(pmap.data * 255.0 + 0.5).astype(np.uint8)
    save_image(GrayImage(q), path)


def load_probability_map(path) -> ProbabilityMap:
    img = load_image(path)
    return ProbabilityMap(img.data.astype(np.float64) / 255.0)


_STRUCT4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT8 = np.ones((3, 3), dtype=bool)


def connected_components(mask: BinaryMask, connectivity: int = 8) -> list[PixelRegion]:
    """Group true pixels into regions under 4- or 8-connectivity.

    Regions partition the true-pixel set and are ordered by their smallest
    row-major pixel index; pixels within a region are in row-major order.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    structure = _STRUCT4 if connectivity == 4 else _STRUCT8
    labels, n = ndimage.label(mask.data, structure=structure)
    if n == 0:
        return []
    flat = labels.ravel()
    order = np.flatnonzero(flat)  # row-major positions of true pixels
    labs = flat[order]
    # stable sort by label keeps row-major order inside each region
    by_label = np.argsort(labs, kind="stable")
    sorted_labs = labs[by_label]
    boundaries = np.flatnonzero(np.diff(sorted_labs)) + 1
    groups = np.split(order[by_label], boundaries)
    width = mask.width
    regions = []
    for g in groups:
        xy = np.column_stack((g % width, g // width))
        regions.append(PixelRegion(xy))
    regions.sort(key=lambda r: r.min_row_major_index(width))
    return regions


def region_boundary(region: PixelRegion, width: int, height: int) -> np.ndarray:
    """Region pixels with a non-region 4-neighbor or image-border adjacency.

    Returned as an (n, 2) array of (x, y) pairs in row-major order.
    """
    mask = region.to_mask(width, height)
    interior = ndimage.binary_erosion(mask, structure=_STRUCT4, border_value=0)
    by, bx = np.nonzero(mask & ~interior)
    return np.column_stack((bx, by)).astype(np.int64)


def resize_bilinear(arr: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resize a 2-D float array with bilinear sampling (half-pixel centers)."""
    a = np.asarray(arr, dtype=np.float64)
    h, w = a.shape
    if out_w < 1 or out_h < 1:
        raise ValueError("target dimensions must be positive")
    sx = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    sy = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    x0 = np.clip(np.floor(sx), 0, w - 1).astype(np.int64)
    y0 = np.clip(np.floor(sy), 0, h - 1).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)
    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x1] * fx
    bot = a[y1][:, x0] * (1 - fx) + a[y1][:, x1] * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]


def resize_image(image: GrayImage, out_w: int, out_h: int) -> GrayImage:
    resized = resize_bilinear(image.data.astype(np.float64), out_w, out_h)
    return GrayImage(np.clip(np.floor(resized + 0.5), 0, 255).astype(np.uint8))
