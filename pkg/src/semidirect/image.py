"""Intensity images, dyadic pyramids with precomputed gradients, subpixel sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_PYRAMID_DIM = 32


@dataclass(frozen=True)
class IntensityImage:
    """Grayscale image with intensities in [0, 255] and an exposure time.

    exposure_t is in seconds; the sentinel 1.0 means unknown exposure.
    """

    intensities: np.ndarray  # (height, width) float64, row-major
    exposure_t: float = 1.0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.intensities, dtype=np.float64)
        object.__setattr__(self, "intensities", arr)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be a non-empty 2-D grid")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image intensities must be finite")
        if self.exposure_t <= 0.0:
            raise ValueError("exposure time must be positive")

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]


def central_gradients(I: np.ndarray):
    """Central-difference x/y gradient grids; the 1-pixel border is zero."""
    gx = np.zeros_like(I)
    gy = np.zeros_like(I)
    gx[:, 1:-1] = 0.5 * (I[:, 2:] - I[:, :-2])
    gy[1:-1, :] = 0.5 * (I[2:, :] - I[:-2, :])
    return gx, gy


def _box_downsample(I: np.ndarray) -> np.ndarray:
    h, w = I.shape
    trimmed = I[: h - (h % 2), : w - (w % 2)]
    return 0.25 * (trimmed[0::2, 0::2] + trimmed[1::2, 0::2]
                   + trimmed[0::2, 1::2] + trimmed[1::2, 1::2])


@dataclass
class ImagePyramid:
    """Dyadic multi-level image with per-level gradient grids.

    Level 0 is the input; each level is the 2x2 box-filtered, floor-halved
    previous level.
    """

    levels: list = field(default_factory=list)       # list[np.ndarray]
    grad_x: list = field(default_factory=list)
    grad_y: list = field(default_factory=list)
    exposure_t: float = 1.0

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def image(self, level: int = 0) -> IntensityImage:
        return IntensityImage(self.levels[level], self.exposure_t)


def build_pyramid(img: IntensityImage, n_levels: int) -> ImagePyramid:
    """Box-filter pyramid with central-difference gradients at every level."""
    if n_levels < 1:
        raise ValueError("need at least one pyramid level")
    smallest = min(img.width, img.height) >> (n_levels - 1)
    if smallest < MIN_PYRAMID_DIM:
        raise ValueError(
            f"image {img.width}x{img.height} too small for {n_levels} levels "
            f"(coarsest dimension {smallest} < {MIN_PYRAMID_DIM})")
    pyr = ImagePyramid(exposure_t=img.exposure_t)
    level = img.intensities
    for _ in range(n_levels):
        gx, gy = central_gradients(level)
        pyr.levels.append(level)
        pyr.grad_x.append(gx)
        pyr.grad_y.append(gy)
        level = _box_downsample(level)
    return pyr


def sample_bilinear(pyr: ImagePyramid, level: int, x: float, y: float):
    """Bilinearly interpolated (intensity, gx, gy) at a subpixel position.

    Returns None when the sample would touch the outer 1-pixel border, where
    gradients are undefined; callers drop the residual in that case.
    """
    I = pyr.levels[level]
    h, w = I.shape
    if not (1.0 <= x <= w - 2.0 and 1.0 <= y <= h - 2.0):
        return None
    x0, y0 = int(x), int(y)
    if x0 > w - 3:
        x0 = w - 3
    if y0 > h - 3:
        y0 = h - 3
    fx, fy = x - x0, y - y0
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy

    def interp(grid):
        return (w00 * grid[y0, x0] + w10 * grid[y0, x0 + 1]
                + w01 * grid[y0 + 1, x0] + w11 * grid[y0 + 1, x0 + 1])

    return (interp(I), interp(pyr.grad_x[level]), interp(pyr.grad_y[level]))


def sample_bilinear_batch(grid: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Vectorized bilinear interpolation of one grid (no bounds checking)."""
    h, w = grid.shape
    x0 = np.clip(x.astype(np.int64), 0, w - 2)
    y0 = np.clip(y.astype(np.int64), 0, h - 2)
    fx = x - x0
    fy = y - y0
    return (grid[y0, x0] * (1 - fx) * (1 - fy)
            + grid[y0, x0 + 1] * fx * (1 - fy)
            + grid[y0 + 1, x0] * (1 - fx) * fy
            + grid[y0 + 1, x0 + 1] * fx * fy)


def load_image(path) -> IntensityImage:
    """Read an 8-bit grayscale PGM (binary P5) or PNG; color becomes the channel mean."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., :3].mean(axis=2)
    return IntensityImage(arr)


def save_png(img: IntensityImage, path) -> None:
    from PIL import Image

    data = np.clip(np.rint(img.intensities), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")
