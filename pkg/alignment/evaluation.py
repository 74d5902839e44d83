"""
Reconstruction and angle metrics, and image grids for qualitative figures.

Every metric is a pure function of (model, split): inference runs in eval
mode without gradients, and reductions use exactly rounded sums so the
reported numbers do not depend on sample order.
"""

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import torch
from PIL import Image

from .checkpoints import load_model
from .datasets import DatasetSplit
from .exceptions import ArgumentError, DimensionError
from .imaging import rotate_batch, wrap_angle
from .networks import RotationInvariantAutoencoder

logger = logging.getLogger(__name__)

INFERENCE_BATCH_SIZE = 256
GRID_GUTTER = 2
CANONICALIZATION_IMAGES = 20
CANONICALIZATION_ANGLES = 8

ModelSource = Union[RotationInvariantAutoencoder, str, Path]


@dataclass(frozen=True)
class MetricsReport:
    avg_mse_per_pixel: float
    avg_mse_pixel_sum: float
    worst_mse_per_pixel: float
    worst_index: int
    angle_mae: float
    angle_mse: float
    n_samples: int
    echo_mse_per_pixel: float
    wrapped_angles: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        names = [f.name for f in fields(self)]
        writer.writerow(names)
        writer.writerow([getattr(self, name) for name in names])
        return buffer.getvalue()

    def write(self, directory: Union[str, Path]) -> tuple[Path, Path]:
        """Write metrics.json and metrics.csv into directory."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        json_path = directory / 'metrics.json'
        csv_path = directory / 'metrics.csv'
        json_path.write_text(self.to_json() + '\n')
        csv_path.write_text(self.to_csv())
        return json_path, csv_path


class WorstCase(NamedTuple):
    index: int
    mse: float
    input: np.ndarray
    target: np.ndarray
    reconstruction: np.ndarray


class InferenceResult(NamedTuple):
    theta_hat: float
    reconstruction: np.ndarray


class GridRow(NamedTuple):
    label: str
    images: Sequence[np.ndarray]


@dataclass(frozen=True)
class CanonicalizationReport:
    """Agreement of the reconstructions of one image under several input rotations."""
    pairwise_mse: float
    reconstruction_mse: float
    n_images: int
    n_angles: int

    @property
    def ratio(self) -> float:
        if self.reconstruction_mse == 0:
            return 0.0 if self.pairwise_mse == 0 else math.inf
        return self.pairwise_mse / self.reconstruction_mse


def _as_model(source: ModelSource) -> RotationInvariantAutoencoder:
    if isinstance(source, RotationInvariantAutoencoder):
        return source
    return load_model(source)


def _check_size(model: RotationInvariantAutoencoder, height: int, width: int) -> None:
    size = model.spec.input_size
    if (height, width) != (size, size):
        raise DimensionError(f"Model expects {size}x{size} images, the data is {height}x{width}")


@torch.no_grad()
def run_model(model: RotationInvariantAutoencoder, images: np.ndarray,
              batch_size: int = INFERENCE_BATCH_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Encode and decode an (N, H, W) stack. Returns (theta_hat (N,), reconstructions (N, H, W))."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 3:
        raise DimensionError(f"Expected an (N, H, W) stack, got shape {images.shape}")
    _check_size(model, images.shape[1], images.shape[2])
    model.eval()
    theta_hat = np.empty(images.shape[0], dtype=np.float64)
    reconstructions = np.empty(images.shape, dtype=np.float32)
    for start in range(0, images.shape[0], batch_size):
        chunk = torch.from_numpy(np.ascontiguousarray(images[start:start + batch_size])).unsqueeze(1)
        code, x_hat = model.reconstruct(chunk)
        theta_hat[start:start + len(chunk)] = code.theta_hat.double().numpy()
        reconstructions[start:start + len(chunk)] = x_hat.squeeze(1).numpy()
    return theta_hat, reconstructions


def per_image_mse(targets: np.ndarray, reconstructions: np.ndarray) -> np.ndarray:
    """Mean over pixels of (target - reconstruction)^2, one value per image, in float64."""
    targets = np.asarray(targets, dtype=np.float64)
    reconstructions = np.asarray(reconstructions, dtype=np.float64)
    if targets.shape != reconstructions.shape:
        raise DimensionError(f"Targets {targets.shape} and reconstructions {reconstructions.shape} differ")
    return ((targets - reconstructions) ** 2).reshape(targets.shape[0], -1).mean(axis=1)


def angle_differences(thetas, theta_hat, wrapped: bool) -> np.ndarray:
    diff = np.asarray(thetas, dtype=np.float64) - np.asarray(theta_hat, dtype=np.float64)
    return np.asarray(wrap_angle(diff)) if wrapped else diff


def angle_stats(thetas, theta_hat, wrapped: bool) -> tuple[float, float]:
    """(mean |d|, mean d^2) of the angle differences."""
    diff = angle_differences(thetas, theta_hat, wrapped)
    if diff.size == 0:
        raise ArgumentError("Angle statistics need at least one sample")
    return math.fsum(np.abs(diff)) / diff.size, math.fsum(diff ** 2) / diff.size


def echo_mse(split: DatasetSplit) -> float:
    """Per-pixel MSE of returning the input unchanged, the do-nothing baseline."""
    if len(split) == 0:
        raise ArgumentError("Cannot compute the echo baseline of an empty split")
    return math.fsum(per_image_mse(split.targets, split.inputs)) / len(split)


def summarize(mse: np.ndarray, thetas, theta_hat, height: int, width: int,
              wrapped: bool, echo_mse_per_pixel: float = math.nan) -> MetricsReport:
    mse = np.asarray(mse, dtype=np.float64)
    if mse.size == 0:
        raise ArgumentError("Cannot summarize an empty split")
    avg = math.fsum(mse) / mse.size
    # argmax returns the first maximum, so ties go to the lowest index
    worst_index = int(np.argmax(mse))
    angle_mae, angle_mse = angle_stats(thetas, theta_hat, wrapped)
    return MetricsReport(
        avg_mse_per_pixel=avg,
        avg_mse_pixel_sum=avg * height * width,
        worst_mse_per_pixel=float(mse[worst_index]),
        worst_index=worst_index,
        angle_mae=angle_mae,
        angle_mse=angle_mse,
        n_samples=int(mse.size),
        echo_mse_per_pixel=echo_mse_per_pixel,
        wrapped_angles=wrapped,
    )


def evaluate(model: ModelSource, split: DatasetSplit) -> MetricsReport:
    """Reconstruction MSE (mean and worst), angle error and the echo baseline over a split."""
    model = _as_model(model)
    if len(split) == 0:
        raise ArgumentError("Cannot evaluate an empty split")
    _check_size(model, split.height, split.width)
    theta_hat, reconstructions = run_model(model, split.inputs)
    report = summarize(
        per_image_mse(split.targets, reconstructions),
        split.thetas,
        theta_hat,
        split.height,
        split.width,
        wrapped=split.distribution.circular,
        echo_mse_per_pixel=echo_mse(split),
    )
    logger.info(
        f"Evaluated {report.n_samples} samples: avg MSE {report.avg_mse_per_pixel:.5f}, "
        f"worst {report.worst_mse_per_pixel:.5f} (#{report.worst_index}), "
        f"angle MAE {report.angle_mae:.4f} rad, echo baseline {report.echo_mse_per_pixel:.5f}"
    )
    return report


def worst_case(model: ModelSource, split: DatasetSplit) -> WorstCase:
    model = _as_model(model)
    if len(split) == 0:
        raise ArgumentError("Cannot pick the worst case of an empty split")
    _check_size(model, split.height, split.width)
    _, reconstructions = run_model(model, split.inputs)
    mse = per_image_mse(split.targets, reconstructions)
    index = int(np.argmax(mse))
    return WorstCase(
        index=index,
        mse=float(mse[index]),
        input=split.inputs[index],
        target=split.targets[index],
        reconstruction=reconstructions[index],
    )


def angle_error(model: ModelSource, split: DatasetSplit) -> tuple[float, float]:
    """(MAE, MSE) of the predicted angle; wrapped differences for circular data."""
    model = _as_model(model)
    if len(split) == 0:
        raise ArgumentError("Cannot compute the angle error of an empty split")
    _check_size(model, split.height, split.width)
    theta_hat, _ = run_model(model, split.inputs)
    return angle_stats(split.thetas, theta_hat, wrapped=split.distribution.circular)


def infer(model: ModelSource, image: np.ndarray) -> InferenceResult:
    """Predicted angle and canonical reconstruction for one image."""
    model = _as_model(model)
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 2:
        raise DimensionError(f"Expected a single 2-D image, got shape {image.shape}")
    theta_hat, reconstructions = run_model(model, image[np.newaxis])
    return InferenceResult(theta_hat=float(theta_hat[0]), reconstruction=reconstructions[0])


def sweep_angles(n_angles: int = CANONICALIZATION_ANGLES) -> np.ndarray:
    return 2 * math.pi * np.arange(n_angles) / n_angles


def canonicalization(model: ModelSource, split: DatasetSplit, n_images: int = CANONICALIZATION_IMAGES,
                     n_angles: int = CANONICALIZATION_ANGLES) -> CanonicalizationReport:
    """
    Rotate each of the first n_images targets to n_angles evenly spaced
    angles, reconstruct all of them, and compare the mean pairwise MSE among
    reconstructions of the same image with the mean reconstruction-vs-target
    MSE. A model with a fixed output orientation has a small pairwise MSE.
    """
    model = _as_model(model)
    if n_angles < 2:
        raise ArgumentError(f"Need at least two angles, got {n_angles}")
    n_images = min(n_images, len(split))
    if n_images == 0:
        raise ArgumentError("Cannot measure canonicalization on an empty split")
    _check_size(model, split.height, split.width)

    angles = sweep_angles(n_angles)
    pairwise, reconstruction = [], []
    for index in range(n_images):
        target = split.targets[index]
        rotated = rotate_batch(np.repeat(target[np.newaxis], n_angles, axis=0), angles)
        _, outputs = run_model(model, rotated)
        reconstruction.extend(per_image_mse(np.repeat(target[np.newaxis], n_angles, axis=0), outputs))
        for i in range(n_angles):
            for j in range(i + 1, n_angles):
                pairwise.append(float(np.mean((outputs[i].astype(np.float64) - outputs[j]) ** 2)))

    return CanonicalizationReport(
        pairwise_mse=math.fsum(pairwise) / len(pairwise),
        reconstruction_mse=math.fsum(reconstruction) / len(reconstruction),
        n_images=n_images,
        n_angles=n_angles,
    )


def sample_rows(model: ModelSource, split: DatasetSplit, indices: Sequence[int]) -> list[GridRow]:
    """Ground truth, input and reconstruction rows for the selected samples."""
    model = _as_model(model)
    indices = [int(i) for i in indices]
    if not indices:
        raise ArgumentError("Select at least one sample to render")
    inputs = split.inputs[indices]
    _, reconstructions = run_model(model, inputs)
    return [
        GridRow('ground truth', list(split.targets[indices])),
        GridRow('input', list(inputs)),
        GridRow('reconstruction', list(reconstructions)),
    ]


def sweep_rows(model: ModelSource, target: np.ndarray, n_angles: int = CANONICALIZATION_ANGLES) -> list[GridRow]:
    """One object under n_angles input rotations: target, rotated inputs, reconstructions."""
    model = _as_model(model)
    target = np.asarray(target, dtype=np.float32)
    rotated = rotate_batch(np.repeat(target[np.newaxis], n_angles, axis=0), sweep_angles(n_angles))
    _, reconstructions = run_model(model, rotated)
    return [
        GridRow('ground truth', [target] * n_angles),
        GridRow('input', list(rotated)),
        GridRow('reconstruction', list(reconstructions)),
    ]


def to_bytes(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats to 8-bit gray, rounding to nearest; values outside are clipped."""
    return np.rint(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def render_grid(rows: Sequence[Union[GridRow, Sequence[np.ndarray]]], path: Union[str, Path],
                gutter: int = GRID_GUTTER) -> Path:
    """
    Tile rows of equally sized images into one 8-bit grayscale PNG, with
    white gutters of `gutter` pixels between cells.
    """
    image_rows = [list(row.images if isinstance(row, GridRow) else row) for row in rows]
    if not image_rows or not image_rows[0]:
        raise ArgumentError("A grid needs at least one non-empty row")
    n_cols = len(image_rows[0])
    if any(len(row) != n_cols for row in image_rows):
        raise DimensionError("All grid rows must have the same number of images")
    shape = np.shape(image_rows[0][0])
    if len(shape) != 2 or any(np.shape(image) != shape for row in image_rows for image in row):
        raise DimensionError("All grid images must be 2-D and of the same size")

    height, width = shape
    n_rows = len(image_rows)
    canvas = np.full(
        (n_rows * height + (n_rows - 1) * gutter, n_cols * width + (n_cols - 1) * gutter), 255, dtype=np.uint8,
    )
    for r, row in enumerate(image_rows):
        for c, image in enumerate(row):
            top = r * (height + gutter)
            left = c * (width + gutter)
            canvas[top:top + height, left:left + width] = to_bytes(image)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(canvas).save(path, format='PNG')
    logger.info(f"Wrote {n_rows}x{n_cols} grid to {path}")
    return path


def load_image(path: Union[str, Path], size: Optional[int] = None) -> np.ndarray:
    """Read an image file as grayscale floats in [0, 1]; optionally require a square size."""
    with Image.open(path) as handle:
        image = np.asarray(handle.convert('L'), dtype=np.float32) / np.float32(255.0)
    if size is not None and image.shape != (size, size):
        raise DimensionError(f"{path} is {image.shape[0]}x{image.shape[1]}, the model expects {size}x{size}")
    return image


def save_image(image: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_bytes(image)).save(path, format='PNG')
    return path
