import json
from pathlib import Path

from alignment import registry
from alignment.checkpoints import load_model
from alignment.datasets import load_split
from alignment.evaluation import canonicalization, evaluate
from alignment.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Compute reconstruction and angle metrics of a checkpoint on a cached split'

    def add_pipeline_arguments(self, parser):
        parser.add_argument('--checkpoint', type=Path, required=True, help='Checkpoint to evaluate')
        parser.add_argument('--data', type=Path, required=True, help='Cached split to evaluate on')
        parser.add_argument('--out', type=Path, default=None,
                            help="Directory for metrics.json and metrics.csv (default: the checkpoint's directory)")
        parser.add_argument('--canonicalization', action='store_true',
                            help='Also measure how consistently rotated copies of one image are reconstructed')

    def run(self, *args, **options):
        model = load_model(options['checkpoint'])
        split = load_split(options['data'])
        report = evaluate(model, split)

        out = options['out'] or options['checkpoint'].parent
        json_path, csv_path = report.write(out)
        if options['canonicalization']:
            consistency = canonicalization(model, split)
            (out / 'canonicalization.json').write_text(json.dumps({
                'pairwise_mse': consistency.pairwise_mse,
                'reconstruction_mse': consistency.reconstruction_mse,
                'ratio': consistency.ratio,
                'n_images': consistency.n_images,
                'n_angles': consistency.n_angles,
            }, indent=2) + '\n')
            self.success(f"Canonicalization ratio {consistency.ratio:.3f}")

        registry.record_evaluation(options['checkpoint'], options['data'], report)
        self.success(
            f"avg MSE {report.avg_mse_per_pixel:.5f} (echo baseline {report.echo_mse_per_pixel:.5f}), "
            f"worst {report.worst_mse_per_pixel:.5f} at #{report.worst_index}, "
            f"angle MAE {report.angle_mae:.4f} rad; wrote {json_path} and {csv_path}"
        )
