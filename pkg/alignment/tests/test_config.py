import json
import shutil
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from alignment.config import TrainConfig, apply_overrides, build_config
from alignment.exceptions import ConfigurationError


class TrainConfigTest(SimpleTestCase):

    def test_defaults_follow_the_published_schedule(self):
        cfg = TrainConfig()
        self.assertEqual(cfg.epochs, 300)
        self.assertEqual(cfg.lr, 1e-4)
        self.assertEqual(cfg.lr_decay_epoch, 200)
        self.assertEqual(cfg.lr_decay_factor, 0.1)
        self.assertEqual(cfg.weight_decay, 1e-5)
        self.assertEqual(cfg.decoder_steps_per_critic_step, 4)
        self.assertEqual(cfg.batch_size, 128)
        self.assertEqual(cfg.clip_c, 0.01)
        self.assertEqual(cfg.adam_betas, (0.5, 0.9))
        self.assertEqual((cfg.weights.w_angle, cfg.weights.w_rec, cfg.weights.w_adv), (1.0, 1.0, 1.0))

    def test_invariants(self):
        for bad in ({'epochs': 0}, {'lr': 0}, {'lr_decay_factor': 0}, {'lr_decay_factor': 1.5},
                    {'decoder_steps_per_critic_step': 0}, {'clip_c': -0.01}):
            with self.subTest(bad=bad), self.assertRaises(ConfigurationError):
                build_config(flags=bad)

    def test_unknown_key(self):
        with self.assertRaises(ConfigurationError):
            build_config(overrides=['epoch=3'])

    def test_deterministic_mode(self):
        self.assertTrue(TrainConfig(threads=1).deterministic)
        self.assertFalse(TrainConfig().deterministic)


class LayeringTest(SimpleTestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_toml_file(self):
        path = self.tmp / 'cfg.toml'
        path.write_text('epochs = 30\nseed = 7\n\n[weights]\nw_adv = 0.5\n\n[network]\ncontent_dim = 16\n')
        cfg = build_config(path)
        self.assertEqual((cfg.epochs, cfg.seed), (30, 7))
        self.assertEqual(cfg.weights.w_adv, 0.5)
        self.assertEqual(cfg.weights.w_rec, 1.0)
        self.assertEqual(cfg.network.content_dim, 16)

    def test_json_file(self):
        path = self.tmp / 'cfg.json'
        path.write_text(json.dumps({'batch_size': 64, 'dataset': 'synth-5hdb'}))
        cfg = build_config(path)
        self.assertEqual(cfg.batch_size, 64)
        self.assertEqual(cfg.dataset, 'synth-5hdb')

    def test_precedence(self):
        path = self.tmp / 'cfg.toml'
        path.write_text('epochs = 30\nbatch_size = 32\nseed = 1\n')
        cfg = build_config(path, overrides=['epochs=5', 'batch_size=16'], flags={'epochs': 2, 'seed': None})
        self.assertEqual(cfg.epochs, 2)  # flag beats override
        self.assertEqual(cfg.batch_size, 16)  # override beats file
        self.assertEqual(cfg.seed, 1)  # unset flag leaves the file value

    def test_dotted_override(self):
        cfg = build_config(overrides=['weights.w_angle=0', 'wrap=true', 'train_path=data/x.riae'])
        self.assertEqual(cfg.weights.w_angle, 0.0)
        self.assertIs(cfg.wrap, True)
        self.assertEqual(cfg.train_path, Path('data/x.riae'))

    def test_malformed_override(self):
        with self.assertRaises(ConfigurationError):
            build_config(overrides=['epochs'])

    def test_apply_overrides_does_not_mutate_input(self):
        values = {'weights': {'w_adv': 1.0}}
        apply_overrides(values, ['weights.w_adv=0'])
        self.assertEqual(values, {'weights': {'w_adv': 1.0}})

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            build_config(self.tmp / 'absent.toml')

    def test_unparseable_file(self):
        path = self.tmp / 'broken.toml'
        path.write_text('epochs = = 3\n')
        with self.assertRaises(ConfigurationError):
            build_config(path)
