import shutil
import tempfile
from pathlib import Path

import numpy as np

from alignment.config import TrainConfig
from alignment.datasets import Blob, PhantomSpec, render_phantom

TINY_NETWORK = {'content_dim': 4, 'encoder_channels': [4, 8], 'critic_channels': [4, 8]}


def fake_digits(count=12, size=28, seed=0):
    """Blocky strokes on a dark background, in [0, 1]."""
    rng = np.random.default_rng(seed)
    digits = np.zeros((count, size, size), dtype=np.float32)
    for digit in digits:
        top, left = rng.integers(4, size // 2, 2)
        digit[top:top + 10, left:left + 3] = 1.0
        digit[top:top + 3, left:left + 8] = 0.7
    return digits


def tiny_config(root: Path, **overrides) -> TrainConfig:
    values = {
        'epochs': 2,
        'batch_size': 4,
        'threads': 1,
        'checkpoint_every': 1,
        'lr_decay_epoch': 1,
        'output_dir': root / 'run',
        'train_path': root / 'rotated-mnist-train.riae',
        'network': TINY_NETWORK,
    }
    values.update(overrides)
    return TrainConfig(**values)


class TempDirMixin:

    def setUp(self):
        super().setUp()
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)
        super().tearDown()


def smooth_image(size=32):
    """Wide blobs, so bilinear resampling loses little."""
    c = (size - 1) / 2
    spec = PhantomSpec(
        blob_count=3,
        blob_params=[
            Blob(center_x=c + 5, center_y=c - 3, amplitude=1.0, std=4.0),
            Blob(center_x=c - 6, center_y=c + 2, amplitude=0.6, std=4.0),
            Blob(center_x=c + 1, center_y=c + 7, amplitude=0.8, std=4.0),
        ],
        image_size=size,
    )
    return render_phantom(spec)


def inscribed_disk(size):
    """Mask of the disk of radius size/2 - 2 about the grid center."""
    c = (size - 1) / 2
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - c) ** 2 + (xx - c) ** 2 <= (size / 2 - 2) ** 2
