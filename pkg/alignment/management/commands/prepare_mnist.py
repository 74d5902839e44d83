from pathlib import Path

from django.conf import settings

from alignment.datasets import SourceTag, build_rotated_mnist, cache_dataset, cache_filename, load_idx
from alignment.exceptions import DatasetMissingError, FormatError
from alignment.management.base import PipelineCommand

MNIST_FILES = {
    'train': ('train-images-idx3-ubyte', 'train-labels-idx1-ubyte'),
    'test': ('t10k-images-idx3-ubyte', 't10k-labels-idx1-ubyte'),
}


def find_idx(directory: Path, name: str, required: bool = True):
    """Locate an IDX file, plain or gzip-compressed."""
    for candidate in (directory / name, directory / f"{name}.gz"):
        if candidate.is_file():
            return candidate
    if required:
        raise DatasetMissingError(f"MNIST file {name}[.gz] not found in {directory}")
    return None


class Command(PipelineCommand):
    help = 'Build the rotated MNIST train and test caches from the raw IDX files'

    def add_pipeline_arguments(self, parser):
        parser.add_argument('--source', type=Path, default=settings.CANON_POSE_DATA / 'mnist',
                            help='Directory holding the MNIST IDX files (optionally .gz)')
        parser.add_argument('--out', type=Path, default=settings.CANON_POSE_DATA, help='Output directory for the caches')
        parser.add_argument('--seed', type=int, default=0, help='Rotation seed')
        parser.add_argument('--limit-train', type=int, default=None, help='Use only the first N training digits')
        parser.add_argument('--limit-test', type=int, default=None, help='Use only the first N test digits')

    def run(self, *args, **options):
        source = options['source']
        limits = {'train': options['limit_train'], 'test': options['limit_test']}

        for split_tag, (images_name, labels_name) in MNIST_FILES.items():
            raw = load_idx(find_idx(source, images_name))
            labels_path = find_idx(source, labels_name, required=False)
            if labels_path is not None:
                labels = load_idx(labels_path)
                if len(labels) != len(raw):
                    raise FormatError(f"{labels_path} holds {len(labels)} labels for {len(raw)} images")
            if limits[split_tag] is not None:
                raw = raw[:limits[split_tag]]

            split = build_rotated_mnist(raw, split_tag, options['seed'], workers=self.workers, progress=self.progress)
            path = cache_dataset(split, options['out'] / cache_filename(SourceTag.ROTATED_MNIST, split_tag))
            self.success(f"Wrote {len(split)} {split_tag} samples to {path}")
