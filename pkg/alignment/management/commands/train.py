import argparse
from pathlib import Path

from django.conf import settings

from alignment import registry
from alignment.config import TrainConfig, build_config
from alignment.datasets import cache_filename
from alignment.exceptions import CanonPoseError, TrainingHaltedError
from alignment.management.base import PipelineCommand
from alignment.training import train


def _default(name: str):
    return TrainConfig.model_fields[name].default


class Command(PipelineCommand):
    help = (
        'Train the rotation-invariant autoencoder. Values come from built-in defaults, '
        'then --config, then --override key=value, then the explicit flags below.'
    )

    def add_pipeline_arguments(self, parser):
        parser.add_argument('--config', type=Path, default=None, help='TOML or JSON file mirroring the training configuration')
        parser.add_argument('--override', action='append', default=[], metavar='KEY=VALUE',
                            help='Override one configuration value; dotted keys reach nested sections (weights.w_adv=0)')
        parser.add_argument('--resume', type=Path, default=None, help='Continue from this checkpoint')

        flags = parser.add_argument_group('configuration flags (take precedence over --config and --override)')
        suppress = argparse.SUPPRESS
        flags.add_argument('--dataset', choices=['rotated-mnist', 'synth-5hdb'], default=suppress,
                           help=f"Corpus (default: {_default('dataset')})")
        flags.add_argument('--train-data', dest='train_path', type=Path, default=suppress,
                           help='Training cache (default: <CANON_POSE_DATA>/<dataset>-train.riae)')
        flags.add_argument('--test-data', dest='test_path', type=Path, default=suppress,
                           help='Test cache (default: <CANON_POSE_DATA>/<dataset>-test.riae)')
        flags.add_argument('--output', dest='output_dir', type=Path, default=suppress,
                           help='Run directory for checkpoints and the step log (default: <CANON_POSE_OUTPUT>/<dataset>)')
        flags.add_argument('--epochs', type=int, default=suppress, help=f"Training epochs (default: {_default('epochs')})")
        flags.add_argument('--lr', type=float, default=suppress, help=f"Learning rate (default: {_default('lr')})")
        flags.add_argument('--lr-decay-epoch', type=int, default=suppress,
                           help=f"Epoch from which the learning rate is decayed (default: {_default('lr_decay_epoch')})")
        flags.add_argument('--lr-decay-factor', type=float, default=suppress,
                           help=f"Factor applied to the learning rate from the decay epoch on (default: {_default('lr_decay_factor')})")
        flags.add_argument('--weight-decay', type=float, default=suppress,
                           help=f"AdamW weight decay (default: {_default('weight_decay')})")
        flags.add_argument('--batch-size', type=int, default=suppress, help=f"Batch size (default: {_default('batch_size')})")
        flags.add_argument('--critic-every', dest='decoder_steps_per_critic_step', type=int, default=suppress,
                           help=f"Decoder steps per critic step (default: {_default('decoder_steps_per_critic_step')})")
        flags.add_argument('--clip', dest='clip_c', type=float, default=suppress,
                           help=f"Critic weight clipping bound (default: {_default('clip_c')})")
        flags.add_argument('--seed', type=int, default=suppress, help=f"Seed (default: {_default('seed')})")
        flags.add_argument('--checkpoint-every', type=int, default=suppress,
                           help=f"Epochs between checkpoints (default: {_default('checkpoint_every')})")
        flags.add_argument('--rerotate', dest='rerotate_each_epoch', action='store_const', const=True, default=suppress,
                           help='Draw fresh input rotations every epoch')
        flags.add_argument('--paper-literal-adv', '--literal-adv-signs', dest='literal_adv_signs', action='store_const',
                           const=True, default=suppress,
                           help='Use the adversarial objectives with their written signs instead of the Wasserstein convention')

    def build(self, options) -> TrainConfig:
        names = [
            'dataset', 'train_path', 'test_path', 'output_dir', 'epochs', 'lr', 'lr_decay_epoch', 'batch_size',
            'decoder_steps_per_critic_step', 'clip_c', 'seed', 'checkpoint_every', 'rerotate_each_epoch',
            'literal_adv_signs', 'weight_decay', 'lr_decay_factor', 'threads',
        ]
        flags = {name: options.get(name) for name in names}
        flags = {name: str(value) if isinstance(value, Path) else value for name, value in flags.items()}
        cfg = build_config(options['config'], options['override'], flags)

        defaults = {}
        if 'threads' not in cfg.model_fields_set:
            defaults['threads'] = self.threads
        if cfg.train_path is None:
            defaults['train_path'] = settings.CANON_POSE_DATA / cache_filename(cfg.dataset, 'train')
        if cfg.test_path is None:
            defaults['test_path'] = settings.CANON_POSE_DATA / cache_filename(cfg.dataset, 'test')
        if cfg.output_dir is None:
            defaults['output_dir'] = settings.CANON_POSE_OUTPUT / cfg.dataset
        return cfg.model_copy(update=defaults)

    def run(self, *args, **options):
        cfg = self.build(options)
        registry.record_training_start(cfg)
        try:
            result = train(cfg, resume=options['resume'], progress=self.progress)
        except TrainingHaltedError as e:
            registry.record_training_end(cfg, 'halted', error=str(e))
            raise
        except CanonPoseError as e:
            registry.record_training_end(cfg, 'failed', error=str(e))
            raise

        registry.record_training_end(
            cfg, 'completed', result.epochs_completed, result.steps, checkpoint=result.checkpoint_path,
        )
        self.success(
            f"Trained {result.epochs_completed} epochs ({result.steps} steps); "
            f"checkpoint {result.checkpoint_path}, log {result.log_path}"
        )
