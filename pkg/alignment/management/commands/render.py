from pathlib import Path

from alignment.checkpoints import load_model
from alignment.datasets import load_split
from alignment.evaluation import render_grid, sample_rows, sweep_rows, worst_case
from alignment.exceptions import ArgumentError
from alignment.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Render ground truth, input and reconstruction rows of a checkpoint as a PNG grid'

    def add_pipeline_arguments(self, parser):
        parser.add_argument('--checkpoint', type=Path, required=True, help='Checkpoint to render')
        parser.add_argument('--data', type=Path, required=True, help='Cached split to draw samples from')
        parser.add_argument('--out', type=Path, required=True, help='PNG file to write')
        parser.add_argument('--count', type=int, default=8, help='Number of sample columns')
        parser.add_argument('--start', type=int, default=0, help='Index of the first sample')
        parser.add_argument('--worst', action='store_true', help='Put the worst-reconstructed sample in the first column')
        parser.add_argument('--sweep', type=int, default=None, metavar='INDEX',
                            help='Instead of samples, show the target of INDEX under --count evenly spaced rotations')

    def run(self, *args, **options):
        model = load_model(options['checkpoint'])
        split = load_split(options['data'])
        count, start = options['count'], options['start']
        if count < 1:
            raise ArgumentError(f"--count must be at least 1, got {count}")

        if options['sweep'] is not None:
            index = options['sweep']
            if not 0 <= index < len(split):
                raise ArgumentError(f"--sweep index {index} is outside the split (0..{len(split) - 1})")
            rows = sweep_rows(model, split.targets[index], n_angles=count)
        else:
            indices = list(range(start, min(start + count, len(split))))
            if options['worst']:
                worst = worst_case(model, split)
                self.success(f"Worst case #{worst.index} with MSE {worst.mse:.5f}")
                indices = [worst.index] + [i for i in indices if i != worst.index][:count - 1]
            if not indices:
                raise ArgumentError(f"--start {start} is past the end of the split ({len(split)} samples)")
            rows = sample_rows(model, split, indices)

        path = render_grid(rows, options['out'])
        labels = ', '.join(row.label for row in rows)
        self.success(f"Wrote {path} (rows: {labels})")
