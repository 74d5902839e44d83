from pathlib import Path

from django.conf import settings

from alignment.datasets import (
    FULL_SPLIT_SIZES,
    PhantomSpec,
    SourceTag,
    cache_dataset,
    cache_filename,
    split_indices,
    synth_projection_stack,
)
from alignment.management.base import PipelineCommand

TRAIN_SIZE, TEST_SIZE = FULL_SPLIT_SIZES['synth-5hdb']


class Command(PipelineCommand):
    help = 'Simulate rotated, noisy projections of a procedural phantom and cache the train and test splits'

    def add_pipeline_arguments(self, parser):
        parser.add_argument('--count', type=int, default=TRAIN_SIZE + TEST_SIZE, help='Total number of projections')
        parser.add_argument('--train', type=int, default=TRAIN_SIZE, help='Projections in the training split')
        parser.add_argument('--test', type=int, default=TEST_SIZE, help='Projections in the test split')
        parser.add_argument('--size', type=int, default=40, help='Image side length in pixels')
        parser.add_argument('--noise', type=float, default=0.1, help='Std of the additive Gaussian noise')
        parser.add_argument('--blobs', type=int, default=7, help='Gaussian blobs in the phantom')
        parser.add_argument('--phantom-seed', type=int, default=17, help='Seed of the phantom geometry')
        parser.add_argument('--seed', type=int, default=0, help='Seed of the projection angles and noise')
        parser.add_argument('--out', type=Path, default=settings.CANON_POSE_DATA, help='Output directory for the caches')

    def run(self, *args, **options):
        train_range, test_range = split_indices(options['count'], options['train'], options['test'])
        spec = PhantomSpec.procedural(
            blob_count=options['blobs'],
            seed=options['phantom_seed'],
            image_size=options['size'],
            noise_std=options['noise'],
        )

        for split_tag, indices in (('train', train_range), ('test', test_range)):
            split = synth_projection_stack(
                spec, len(indices), split_tag, options['seed'],
                workers=self.workers, progress=self.progress, first_index=indices.start,
            )
            path = cache_dataset(split, options['out'] / cache_filename(SourceTag.SYNTH_5HDB, split_tag))
            self.success(f"Wrote {len(split)} {split_tag} projections to {path}")
