"""
Image geometry and intensity primitives.

Images are 2-D float32 arrays (height x width, row-major). Positive angles
rotate the content counterclockwise as displayed (row 0 at the top) about the
pixel-grid center ((W - 1) / 2, (H - 1) / 2). Samples falling outside the
source grid read as 0.
"""

import logging
import math
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .exceptions import ArgumentError, ConfigurationError, DataError, DimensionError

logger = logging.getLogger(__name__)

# Normal(0, pi^2 / 16) has standard deviation pi / 4
NORMAL_ANGLE_STD = math.pi / 4


class Interpolation(str, Enum):
    NEAREST = 'nearest'
    BILINEAR = 'bilinear'


class AngleDistribution(str, Enum):
    """
    Rotation distributions used to build the corpora.
    NORMAL is Normal(0, pi^2/16) (rotated MNIST), UNIFORM is Uniform[0, 2pi)
    (synthetic projections).
    """
    NORMAL = 'normal'
    UNIFORM = 'uniform'

    @property
    def circular(self) -> bool:
        return self is AngleDistribution.UNIFORM


def parse_distribution(dist: Union[str, AngleDistribution]) -> AngleDistribution:
    try:
        return AngleDistribution(dist)
    except ValueError:
        raise ConfigurationError(f"Unknown angle distribution: {dist!r}") from None


def parse_interpolation(mode: Union[str, Interpolation]) -> Interpolation:
    try:
        return Interpolation(mode)
    except ValueError:
        raise ConfigurationError(f"Unknown interpolation mode: {mode!r}") from None


def wrap_angle(theta):
    """Canonical form of an angle in [-pi, pi). Works on scalars and arrays."""
    wrapped = np.mod(np.asarray(theta, dtype=np.float64) + math.pi, 2 * math.pi) - math.pi
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def _check_square(img: np.ndarray) -> None:
    if img.ndim != 2 or img.size == 0:
        raise DimensionError(f"Expected a non-empty 2-D image, got shape {img.shape}")
    if img.shape[0] != img.shape[1]:
        raise DimensionError(f"Rotation needs a square image, got {img.shape[0]}x{img.shape[1]}")


def _source_coordinates(size: int, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Inverse map: for every output pixel, the (row, col) position it samples
    in the source image.
    """
    center = (size - 1) / 2.0
    offsets = np.arange(size, dtype=np.float64) - center
    v, u = np.meshgrid(offsets, offsets, indexing='ij')  # v: rows (down), u: cols (right)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    src_u = cos_t * u - sin_t * v
    src_v = sin_t * u + cos_t * v
    return src_v + center, src_u + center


def rotate_image(img: np.ndarray, theta: float, mode: Union[str, Interpolation] = Interpolation.BILINEAR) -> np.ndarray:
    """
    Rotate a square image counterclockwise by theta radians about its center.

    Bilinear mode is used everywhere in training; nearest mode reproduces the
    exact pixel permutation for multiples of pi/2. theta = 0 returns the input
    values bit-exactly in either mode.
    """
    img = np.asarray(img)
    _check_square(img)
    if not math.isfinite(theta):
        raise ArgumentError(f"Rotation angle must be finite, got {theta}")
    mode = parse_interpolation(mode)

    rows, cols = _source_coordinates(img.shape[0], float(theta))
    # grid-constant: zero padding outside the grid, interpolated up to the border
    out = ndimage.map_coordinates(
        img.astype(np.float64, copy=False),
        [rows, cols],
        order=0 if mode is Interpolation.NEAREST else 1,
        mode='grid-constant',
        cval=0.0,
    )
    return out.astype(np.float32)


def rotate_batch(images: np.ndarray, thetas: np.ndarray, mode: Union[str, Interpolation] = Interpolation.BILINEAR) -> np.ndarray:
    """Rotate each image of an (N, H, W) stack by its own angle."""
    images = np.asarray(images)
    thetas = np.asarray(thetas, dtype=np.float64).reshape(-1)
    if images.ndim != 3 or images.shape[0] != thetas.shape[0]:
        raise DimensionError(
            f"Expected an (N, H, W) stack with N angles, got {images.shape} and {thetas.shape[0]} angles"
        )
    out = np.empty(images.shape, dtype=np.float32)
    for i, (img, theta) in enumerate(zip(images, thetas)):
        out[i] = rotate_image(img, float(theta), mode)
    return out


def sample_angle(dist: Union[str, AngleDistribution], rng: np.random.Generator, size: Optional[int] = None):
    """
    Draw rotation angle(s) in radians from the requested distribution.
    Returns a float when size is None, otherwise an array of the given size.
    """
    dist = parse_distribution(dist)
    if dist is AngleDistribution.NORMAL:
        draw = rng.normal(0.0, NORMAL_ANGLE_STD, size)
    else:
        draw = rng.uniform(0.0, 2 * math.pi, size)
    return float(draw) if size is None else np.asarray(draw, dtype=np.float64)


def normalize(img: np.ndarray) -> np.ndarray:
    """
    Per-image min-max map onto [0, 1].
    Constant images map to all zeros. Idempotent.
    """
    values = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DataError("Cannot normalize an image with non-finite pixels")
    if values.size == 0:
        return values.astype(np.float32)
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.float32)
    out = (values - lo) / (hi - lo)
    return out.astype(np.float32)
