"""
Training corpora: rotated MNIST and a synthetic projection stack.

Each sample carries the rotated (and, for the projection stack, noisy) input,
the canonical clean target and the ground-truth rotation angle. Every
sample's randomness comes from its own generator seeded with
(seed, split, index), so builds are reproducible and parallelizable.
"""

import gzip
import logging
import math
import os
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator, Optional, Union

import numpy as np
from pydantic import Field, PositiveInt, model_validator
from tqdm import tqdm

from .exceptions import (
    ChecksumError,
    ConfigurationError,
    DataError,
    DatasetMissingError,
    DimensionError,
    FormatError,
    SymmetricPhantomError,
    TruncationError,
    VersionError,
)
from .imaging import AngleDistribution, normalize, rotate_image, sample_angle
from .validation import ValidatedModel

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CACHE_MAGIC = b'RIAE'
CACHE_VERSION = 1
# magic, version, source tag, split tag, count, height, width
CACHE_HEADER = struct.Struct('<4sIBBQII')
CACHE_FOOTER = struct.Struct('<I')

FULL_SPLIT_SIZES = {
    'rotated-mnist': (60_000, 10_000),
    'synth-5hdb': (16_000, 4_000),
}

# symmetry check: every rotation must differ from the phantom by this factor
# over the interpolation round-trip error
SYMMETRY_MARGIN = 10.0
SYMMETRY_SWEEP_ANGLES = 64


class SourceTag(str, Enum):
    ROTATED_MNIST = 'rotated-mnist'
    SYNTH_5HDB = 'synth-5hdb'

    @property
    def distribution(self) -> AngleDistribution:
        if self is SourceTag.ROTATED_MNIST:
            return AngleDistribution.NORMAL
        return AngleDistribution.UNIFORM

    @property
    def code(self) -> int:
        return {SourceTag.ROTATED_MNIST: 1, SourceTag.SYNTH_5HDB: 2}[self]

    @classmethod
    def from_code(cls, code: int) -> 'SourceTag':
        for tag in cls:
            if tag.code == code:
                return tag
        raise FormatError(f"Unknown source tag code {code}")


class SplitTag(str, Enum):
    TRAIN = 'train'
    TEST = 'test'

    @property
    def code(self) -> int:
        return 0 if self is SplitTag.TRAIN else 1

    @classmethod
    def from_code(cls, code: int) -> 'SplitTag':
        if code not in (0, 1):
            raise FormatError(f"Unknown split tag code {code}")
        return SplitTag.TRAIN if code == 0 else SplitTag.TEST


def _tag(enum_cls, value):
    try:
        return enum_cls(value)
    except ValueError:
        raise ConfigurationError(f"Unknown {enum_cls.__name__}: {value!r}") from None


@dataclass(frozen=True)
class LabeledSample:
    input: np.ndarray
    target: np.ndarray
    theta: float


@dataclass(eq=False)
class DatasetSplit:
    """
    An ordered, immutable collection of labeled samples stored as stacked
    arrays: inputs and targets are (N, H, W) float32, thetas (N,) float64.
    """
    inputs: np.ndarray
    targets: np.ndarray
    thetas: np.ndarray
    split_tag: SplitTag
    source_tag: SourceTag

    def __post_init__(self):
        self.split_tag = _tag(SplitTag, self.split_tag)
        self.source_tag = _tag(SourceTag, self.source_tag)
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float32)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float32)
        self.thetas = np.ascontiguousarray(self.thetas, dtype=np.float64).reshape(-1)
        if self.inputs.ndim != 3 or self.inputs.shape != self.targets.shape:
            raise DimensionError(
                f"Inputs {self.inputs.shape} and targets {self.targets.shape} must be matching (N, H, W) stacks"
            )
        if self.thetas.shape[0] != self.inputs.shape[0]:
            raise DimensionError(f"Expected {self.inputs.shape[0]} angles, got {self.thetas.shape[0]}")
        for array in (self.inputs, self.targets, self.thetas):
            array.flags.writeable = False

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __getitem__(self, index: int) -> LabeledSample:
        return LabeledSample(self.inputs[index], self.targets[index], float(self.thetas[index]))

    def __iter__(self) -> Iterator[LabeledSample]:
        for index in range(len(self)):
            yield self[index]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        return (
            self.split_tag is other.split_tag
            and self.source_tag is other.source_tag
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.targets, other.targets)
            and np.array_equal(self.thetas.view(np.uint64), other.thetas.view(np.uint64))
        )

    @property
    def height(self) -> int:
        return self.inputs.shape[1]

    @property
    def width(self) -> int:
        return self.inputs.shape[2]

    @property
    def distribution(self) -> AngleDistribution:
        return self.source_tag.distribution

    def subset(self, indices) -> 'DatasetSplit':
        indices = np.asarray(indices, dtype=np.int64)
        return DatasetSplit(
            self.inputs[indices], self.targets[indices], self.thetas[indices], self.split_tag, self.source_tag
        )


def sample_rng(seed: int, split_tag: Union[str, SplitTag], index: int) -> np.random.Generator:
    """Generator for one sample; train and test streams never overlap."""
    split_tag = _tag(SplitTag, split_tag)
    return np.random.default_rng([int(seed), split_tag.code, int(index)])


def cache_filename(source_tag: Union[str, SourceTag], split_tag: Union[str, SplitTag]) -> str:
    return f"{_tag(SourceTag, source_tag).value}-{_tag(SplitTag, split_tag).value}.riae"


# ---------------------------------------------------------------------------
# IDX ingestion
# ---------------------------------------------------------------------------

def load_idx(path: Union[str, Path]) -> np.ndarray:
    """
    Parse an IDX file (optionally gzip-compressed, by `.gz` suffix).

    Image files (magic 0x00000803) return an (N, rows, cols) float32 stack
    scaled into [0, 1]; label files (magic 0x00000801) return the (N,) label
    bytes as uint8.
    """
    path = Path(path)
    opener = gzip.open if path.suffix == '.gz' else open
    with opener(path, 'rb') as handle:
        data = handle.read()

    if len(data) < 4:
        raise TruncationError(path, 4, len(data))
    (magic,) = struct.unpack('>I', data[:4])

    if magic == IDX_IMAGES_MAGIC:
        if len(data) < 16:
            raise TruncationError(path, 16, len(data))
        count, rows, cols = struct.unpack('>III', data[4:16])
        expected = count * rows * cols
        payload = data[16:]
        if len(payload) < expected:
            raise TruncationError(path, expected, len(payload))
        if len(payload) > expected:
            raise FormatError(f"{path}: {len(payload) - expected} trailing bytes after the declared payload")
        pixels = np.frombuffer(payload, dtype=np.uint8, count=expected).reshape(count, rows, cols)
        logger.info(f"Loaded {count} images of {rows}x{cols} from {path}")
        return pixels.astype(np.float32) / np.float32(255.0)

    if magic == IDX_LABELS_MAGIC:
        if len(data) < 8:
            raise TruncationError(path, 8, len(data))
        (count,) = struct.unpack('>I', data[4:8])
        payload = data[8:]
        if len(payload) < count:
            raise TruncationError(path, count, len(payload))
        if len(payload) > count:
            raise FormatError(f"{path}: {len(payload) - count} trailing bytes after the declared payload")
        logger.info(f"Loaded {count} labels from {path}")
        return np.frombuffer(payload, dtype=np.uint8, count=count).copy()

    raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")


# ---------------------------------------------------------------------------
# Sample generation
# ---------------------------------------------------------------------------

def _generate(count: int, shape: tuple, make_sample: Callable[[int], tuple], workers: int, progress: bool, desc: str):
    """Run make_sample(index) -> (input, target, theta) for every index, stacking results in index order."""
    inputs = np.empty((count, *shape), dtype=np.float32)
    targets = np.empty((count, *shape), dtype=np.float32)
    thetas = np.empty(count, dtype=np.float64)
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    results = executor.map(make_sample, range(count)) if executor else map(make_sample, range(count))
    try:
        for index, (image, target, theta) in enumerate(tqdm(results, total=count, desc=desc, disable=not progress, leave=False)):
            inputs[index] = image
            targets[index] = target
            thetas[index] = theta
    finally:
        if executor is not None:
            executor.shutdown()
    return inputs, targets, thetas


def build_rotated_mnist(raw: np.ndarray, split_tag: Union[str, SplitTag], seed: int,
                        workers: int = 1, progress: bool = False) -> DatasetSplit:
    """
    Rotate every raw digit by theta ~ Normal(0, pi^2/16).
    The target is the original digit; the input its bilinear rotation.
    """
    raw = np.asarray(raw, dtype=np.float32)
    if raw.ndim != 3 or raw.shape[1] != raw.shape[2]:
        raise DimensionError(f"Expected an (N, S, S) stack of square images, got {raw.shape}")
    if raw.size and (raw.min() < 0.0 or raw.max() > 1.0 or not np.all(np.isfinite(raw))):
        raise DataError("Raw images must be finite and lie in [0, 1]")
    split_tag = _tag(SplitTag, split_tag)

    def make_sample(index: int):
        rng = sample_rng(seed, split_tag, index)
        theta = sample_angle(AngleDistribution.NORMAL, rng)
        return rotate_image(raw[index], theta), raw[index], theta

    inputs, targets, thetas = _generate(
        len(raw), raw.shape[1:], make_sample, workers, progress, f"rotated-mnist/{split_tag.value}"
    )
    split = DatasetSplit(inputs, targets, thetas, split_tag, SourceTag.ROTATED_MNIST)
    validate_split(split, seed=seed)
    logger.info(f"Built rotated MNIST {split_tag.value} split with {len(split)} samples")
    return split


class Blob(ValidatedModel):
    center_x: float
    center_y: float
    amplitude: float
    std: float = Field(gt=0)


class PhantomSpec(ValidatedModel):
    """
    A procedural asymmetric particle: a sum of isotropic Gaussian blobs.
    Centers and std are in pixels; noise_std is on the normalized intensity scale.
    """
    blob_count: PositiveInt
    blob_params: list[Blob]
    image_size: PositiveInt = 40
    noise_std: float = Field(default=0.1, ge=0)
    seed: int = 17

    @model_validator(mode='after')
    def _blob_count_matches(self):
        if len(self.blob_params) != self.blob_count:
            raise ValueError(f"blob_count is {self.blob_count} but {len(self.blob_params)} blobs were given")
        return self

    @classmethod
    def procedural(cls, blob_count: int = 7, seed: int = 17, image_size: int = 40,
                   noise_std: float = 0.1) -> 'PhantomSpec':
        """Draw blob positions, amplitudes and widths from a seeded generator."""
        if blob_count < 1 or image_size < 1:
            raise ConfigurationError(f"blob_count and image_size must be positive, got {blob_count} and {image_size}")
        rng = np.random.default_rng(seed)
        center = (image_size - 1) / 2.0
        blobs = []
        for _ in range(blob_count):
            radius = rng.uniform(0.1, 0.3) * image_size
            phi = rng.uniform(0.0, 2 * math.pi)
            blobs.append(Blob(
                center_x=center + radius * math.cos(phi),
                center_y=center + radius * math.sin(phi),
                amplitude=rng.uniform(0.4, 1.0),
                std=rng.uniform(0.05, 0.08) * image_size,
            ))
        return cls(blob_count=blob_count, blob_params=blobs, image_size=image_size, noise_std=noise_std, seed=seed)


def render_phantom(spec: PhantomSpec) -> np.ndarray:
    """Sum the blobs on the image grid, then normalize to [0, 1]."""
    grid = np.arange(spec.image_size, dtype=np.float64)
    yy, xx = np.meshgrid(grid, grid, indexing='ij')
    image = np.zeros((spec.image_size, spec.image_size), dtype=np.float64)
    for blob in spec.blob_params:
        sq_dist = (xx - blob.center_x) ** 2 + (yy - blob.center_y) ** 2
        image += blob.amplitude * np.exp(-sq_dist / (2.0 * blob.std ** 2))
    return normalize(image)


@dataclass(frozen=True)
class SymmetryReport:
    angles: np.ndarray
    mse: np.ndarray
    roundtrip_error: float

    @property
    def min_mse(self) -> float:
        return float(self.mse.min())

    @property
    def margin(self) -> float:
        """How many times the smallest rotation MSE exceeds the round-trip error."""
        if self.roundtrip_error == 0:
            return math.inf
        return self.min_mse / self.roundtrip_error

    @property
    def asymmetric(self) -> bool:
        return bool(np.all(self.mse > SYMMETRY_MARGIN * self.roundtrip_error))


def symmetry_sweep(phantom: np.ndarray, n_angles: int = SYMMETRY_SWEEP_ANGLES) -> SymmetryReport:
    """
    MSE between the phantom and its rotation for the non-zero angles of an
    n_angles grid over the circle (n_angles divisible by 4 includes the
    quarter turns), plus the mean bilinear round-trip error over the same grid.
    """
    angles = 2 * math.pi * np.arange(1, n_angles) / n_angles
    mse = np.empty(angles.shape[0])
    roundtrip = np.empty(angles.shape[0])
    base = phantom.astype(np.float64)
    for i, theta in enumerate(angles):
        rotated = rotate_image(phantom, float(theta))
        mse[i] = np.mean((rotated.astype(np.float64) - base) ** 2)
        restored = rotate_image(rotated, -float(theta))
        roundtrip[i] = np.mean((restored.astype(np.float64) - base) ** 2)
    return SymmetryReport(angles=angles, mse=mse, roundtrip_error=float(roundtrip.mean()))


def check_asymmetry(phantom: np.ndarray) -> SymmetryReport:
    report = symmetry_sweep(phantom)
    if not report.asymmetric:
        worst = float(report.angles[int(np.argmin(report.mse))])
        raise SymmetricPhantomError(
            f"Phantom is nearly symmetric under a rotation of {worst:.4f} rad "
            f"(MSE {report.min_mse:.3g} vs round-trip error {report.roundtrip_error:.3g}); "
            "its angle would be unidentifiable"
        )
    logger.info(f"Phantom asymmetry margin {report.margin:.1f}x over the interpolation round-trip error")
    return report


def project(phantom: np.ndarray, theta: float, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    """One simulated observation: normalize(rotate(phantom, theta) + noise)."""
    rotated = rotate_image(phantom, theta).astype(np.float64)
    if noise_std > 0:
        rotated = rotated + rng.normal(0.0, noise_std, rotated.shape)
    return normalize(rotated)


def split_indices(count: int, n_train: int, n_test: int) -> tuple[range, range]:
    """
    Partition `count` sample indices into a train range followed by a test
    range. The two sizes must add up to `count`.
    """
    if min(count, n_train, n_test) < 0:
        raise ConfigurationError(f"Split sizes must be non-negative, got count={count}, train={n_train}, test={n_test}")
    if n_train + n_test != count:
        raise ConfigurationError(f"train ({n_train}) + test ({n_test}) must equal count ({count})")
    return range(0, n_train), range(n_train, count)


def synth_projection_stack(spec: PhantomSpec, count: int, split_tag: Union[str, SplitTag], seed: int,
                           workers: int = 1, progress: bool = False, first_index: int = 0) -> DatasetSplit:
    """
    Render the phantom once, then draw `count` rotated noisy observations with
    theta ~ Uniform[0, 2pi). The target of every sample is the phantom itself.
    Sample i draws from the generator of index first_index + i.
    """
    if count < 0:
        raise ConfigurationError(f"count must be non-negative, got {count}")
    split_tag = _tag(SplitTag, split_tag)
    phantom = render_phantom(spec)
    check_asymmetry(phantom)

    def make_sample(index: int):
        rng = sample_rng(seed, split_tag, first_index + index)
        theta = sample_angle(AngleDistribution.UNIFORM, rng)
        return project(phantom, theta, spec.noise_std, rng), phantom, theta

    inputs, targets, thetas = _generate(
        count, phantom.shape, make_sample, workers, progress, f"synth-5hdb/{split_tag.value}"
    )
    split = DatasetSplit(inputs, targets, thetas, split_tag, SourceTag.SYNTH_5HDB)
    validate_split(split, seed=seed)
    logger.info(f"Built synthetic projection {split_tag.value} split with {count} samples of {spec.image_size}x{spec.image_size}")
    return split


def rerotate(targets: np.ndarray, source_tag: Union[str, SourceTag], rng: np.random.Generator,
             noise_std: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Fresh inputs for a batch of canonical targets, for per-epoch re-rotation.
    Returns (inputs, thetas).
    """
    source_tag = _tag(SourceTag, source_tag)
    thetas = sample_angle(source_tag.distribution, rng, len(targets))
    inputs = np.empty(np.shape(targets), dtype=np.float32)
    for i, (target, theta) in enumerate(zip(targets, thetas)):
        if source_tag is SourceTag.SYNTH_5HDB:
            inputs[i] = project(target, float(theta), noise_std, rng)
        else:
            inputs[i] = rotate_image(target, float(theta))
    return inputs, thetas


def validate_split(split: DatasetSplit, fraction: float = 0.01, seed: int = 0) -> None:
    """Check the labeled-sample invariants on a random subset of the split."""
    if len(split) == 0:
        return
    rng = np.random.default_rng([int(seed), 0x5EED])
    n_checked = max(1, math.ceil(len(split) * fraction))
    for index in rng.choice(len(split), size=min(n_checked, len(split)), replace=False):
        sample = split[int(index)]
        for name, image in (('input', sample.input), ('target', sample.target)):
            if not np.all(np.isfinite(image)):
                raise DataError(f"Sample {index}: non-finite {name} pixels")
            if image.min() < 0.0 or image.max() > 1.0:
                raise DataError(f"Sample {index}: {name} pixels outside [0, 1]")
        if not math.isfinite(sample.theta):
            raise DataError(f"Sample {index}: non-finite angle")


# ---------------------------------------------------------------------------
# Cache files
# ---------------------------------------------------------------------------

def _record_dtype(height: int, width: int) -> np.dtype:
    return np.dtype([('target', '<f4', (height, width)), ('input', '<f4', (height, width)), ('theta', '<f8')])


def cache_dataset(split: DatasetSplit, path: Union[str, Path]) -> Path:
    """Write a split to a little-endian cache file (atomically replaced)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = np.zeros(len(split), dtype=_record_dtype(split.height, split.width))
    records['target'] = split.targets
    records['input'] = split.inputs
    records['theta'] = split.thetas
    payload = records.tobytes()

    header = CACHE_HEADER.pack(
        CACHE_MAGIC, CACHE_VERSION, split.source_tag.code, split.split_tag.code,
        len(split), split.height, split.width,
    )
    footer = CACHE_FOOTER.pack(zlib.crc32(payload))

    tmp_path = path.with_name(path.name + '.tmp')
    with open(tmp_path, 'wb') as handle:
        handle.write(header)
        handle.write(payload)
        handle.write(footer)
    os.replace(tmp_path, path)
    logger.info(f"Cached {len(split)} {split.source_tag.value}/{split.split_tag.value} samples to {path}")
    return path


def load_cache(path: Union[str, Path]) -> DatasetSplit:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < CACHE_HEADER.size:
        raise TruncationError(path, CACHE_HEADER.size, len(data))

    magic, version, source_code, split_code, count, height, width = CACHE_HEADER.unpack_from(data)
    if magic != CACHE_MAGIC:
        raise FormatError(f"{path}: not a dataset cache (magic {magic!r})")
    if version != CACHE_VERSION:
        raise VersionError(f"{path}: cache format version {version} is not supported (expected {CACHE_VERSION})")
    source_tag = SourceTag.from_code(source_code)
    split_tag = SplitTag.from_code(split_code)

    dtype = _record_dtype(height, width)
    payload_size = count * dtype.itemsize
    expected = CACHE_HEADER.size + payload_size + CACHE_FOOTER.size
    if len(data) < expected:
        raise TruncationError(path, expected, len(data))
    if len(data) > expected:
        raise FormatError(f"{path}: {len(data) - expected} unexpected trailing bytes")

    payload = data[CACHE_HEADER.size:CACHE_HEADER.size + payload_size]
    (stored_crc,) = CACHE_FOOTER.unpack_from(data, CACHE_HEADER.size + payload_size)
    actual_crc = zlib.crc32(payload)
    if stored_crc != actual_crc:
        raise ChecksumError(f"{path}: checksum mismatch (stored {stored_crc:08x}, computed {actual_crc:08x})")

    records = np.frombuffer(payload, dtype=dtype, count=count)
    return DatasetSplit(
        inputs=records['input'].astype(np.float32),
        targets=records['target'].astype(np.float32),
        thetas=records['theta'].astype(np.float64),
        split_tag=split_tag,
        source_tag=source_tag,
    )


def load_split(path: Union[str, Path], expected_split: Optional[Union[str, SplitTag]] = None) -> DatasetSplit:
    """Load a cached split, failing with DatasetMissingError when the file is absent."""
    path = Path(path)
    if not path.is_file():
        raise DatasetMissingError(f"Dataset file not found: {path}")
    split = load_cache(path)
    if expected_split is not None and split.split_tag is not _tag(SplitTag, expected_split):
        logger.warning(f"{path} holds a {split.split_tag.value} split, expected {_tag(SplitTag, expected_split).value}")
    return split
