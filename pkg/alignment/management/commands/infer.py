import json
from pathlib import Path

from alignment.checkpoints import load_model
from alignment.datasets import load_split
from alignment.evaluation import infer, load_image, save_image
from alignment.exceptions import ArgumentError
from alignment.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Predict the rotation angle and canonical reconstruction of a single image'

    def add_pipeline_arguments(self, parser):
        parser.add_argument('--checkpoint', type=Path, required=True, help='Trained checkpoint')
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--image', type=Path, help='Grayscale image file of the model input size')
        source.add_argument('--data', type=Path, help='Cached split to take the image from (with --index)')
        parser.add_argument('--index', type=int, default=0, help='Sample index when reading from --data')
        parser.add_argument('--out', type=Path, default=None, help='Write the canonical reconstruction to this PNG')

    def run(self, *args, **options):
        model = load_model(options['checkpoint'])
        if options['image'] is not None:
            image = load_image(options['image'], size=model.spec.input_size)
        else:
            split = load_split(options['data'])
            index = options['index']
            if not 0 <= index < len(split):
                raise ArgumentError(f"--index {index} is outside the split (0..{len(split) - 1})")
            image = split.inputs[index]

        result = infer(model, image)
        output = {'theta_hat': result.theta_hat}
        if options['out'] is not None:
            output['reconstruction'] = str(save_image(result.reconstruction, options['out']))
        self.stdout.write(json.dumps(output))
