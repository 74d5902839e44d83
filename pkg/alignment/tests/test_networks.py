import shutil
import tempfile
from pathlib import Path

import torch
import torch.nn.functional as F
from django.test import SimpleTestCase
from torch import nn
from torch.autograd import gradcheck

from alignment.checkpoints import Checkpoint, checkpoint_filename, load_checkpoint, load_model, save_checkpoint
from alignment.exceptions import CheckpointError, ConfigurationError, DimensionError, NumericError, ResumeError
from alignment.networks import (
    INIT_STD,
    LatentCode,
    NetworkSpec,
    RotationInvariantAutoencoder,
    downsampled_sizes,
    join_latent,
    split_latent,
)

GRADCHECK = {'eps': 1e-5, 'atol': 1e-6, 'rtol': 1e-4}


def toy_spec(**overrides):
    values = {'input_size': 8, 'content_dim': 3, 'encoder_channels': [2, 4], 'critic_channels': [2, 3]}
    values.update(overrides)
    return NetworkSpec(**values)


def scrambled(model: nn.Module, seed: int = 0) -> nn.Module:
    """Unit-scale weights and biases in float64, so no activation sits on a LeakyReLU kink."""
    generator = torch.Generator().manual_seed(seed)
    model.double()
    with torch.no_grad():
        for param in model.parameters():
            param.copy_(torch.randn(param.shape, generator=generator, dtype=torch.float64) * 0.5)
    return model


class NetworkSpecTest(SimpleTestCase):

    def test_defaults(self):
        spec = NetworkSpec(input_size=28)
        self.assertEqual(spec.content_dim, 32)
        self.assertEqual(spec.latent_width, 33)
        self.assertEqual(spec.negative_slope, 0.2)

    def test_downsampled_sizes(self):
        self.assertEqual(downsampled_sizes(28, 4), [28, 14, 7, 3, 1])
        self.assertEqual(downsampled_sizes(40, 4), [40, 20, 10, 5, 2])

    def test_too_many_layers_for_input(self):
        with self.assertRaises(ConfigurationError):
            NetworkSpec(input_size=4, encoder_channels=[4, 4, 4, 4])


class ShapesTest(SimpleTestCase):

    def test_mnist_and_projection_sizes(self):
        for size in (28, 40):
            model = RotationInvariantAutoencoder(NetworkSpec(input_size=size, content_dim=8))
            batch = torch.rand(3, 1, size, size)
            code, x_hat = model.reconstruct(batch)
            self.assertEqual(tuple(code.theta_hat.shape), (3,))
            self.assertEqual(tuple(code.z.shape), (3, 8))
            self.assertEqual(tuple(x_hat.shape), (3, 1, size, size))
            self.assertTrue(bool(((x_hat > 0) & (x_hat < 1)).all()))
            self.assertEqual(tuple(model.criticize(batch).shape), (3,))

    def test_wrong_image_size(self):
        model = RotationInvariantAutoencoder(toy_spec())
        with self.assertRaises(DimensionError):
            model.encode(torch.rand(2, 1, 9, 9))
        with self.assertRaises(DimensionError):
            model.criticize(torch.rand(2, 8, 8))

    def test_decoder_only_accepts_content_codes(self):
        model = RotationInvariantAutoencoder(toy_spec())
        with self.assertRaises(DimensionError):
            model.decode(torch.rand(2, 4))

    def test_non_finite_encoder_output(self):
        model = RotationInvariantAutoencoder(toy_spec())
        batch = torch.rand(2, 1, 8, 8)
        batch[0, 0, 0, 0] = float('nan')
        with self.assertRaises(NumericError):
            model.encode(batch)

    def test_latent_split_and_join(self):
        raw = torch.arange(8.0).reshape(2, 4)
        code = split_latent(raw, 3)
        self.assertEqual(code.theta_hat.tolist(), [0.0, 4.0])
        self.assertEqual(code.z.tolist(), [[1.0, 2.0, 3.0], [5.0, 6.0, 7.0]])
        self.assertTrue(torch.equal(join_latent(code), raw))
        with self.assertRaises(DimensionError):
            split_latent(raw, 4)

    def test_initialization(self):
        model = RotationInvariantAutoencoder(NetworkSpec(input_size=28))
        for name, param in model.named_parameters():
            if name.endswith('bias'):
                self.assertEqual(float(param.abs().max()), 0.0, name)
            else:
                self.assertLessEqual(float(param.abs().max()), 2 * INIT_STD + 1e-7, name)

    def test_clip(self):
        model = scrambled(RotationInvariantAutoencoder(toy_spec()))
        model.critic.clip_(0.01)
        self.assertLessEqual(model.critic.max_abs_weight(), 0.01)
        self.assertGreater(model.encoder.head.weight.abs().max().item(), 0.01)

    def test_blank_image_gives_zero_angle(self):
        model = RotationInvariantAutoencoder(NetworkSpec(input_size=28))
        code = model.encode(torch.zeros(2, 1, 28, 28))
        self.assertTrue(torch.equal(code.theta_hat, torch.zeros(2)))

    def test_identical_codes_decode_identically(self):
        model = RotationInvariantAutoencoder(toy_spec())
        images = model.decode(torch.randn(1, 3).repeat(4, 1))
        for image in images[1:]:
            torch.testing.assert_close(image, images[0], rtol=0, atol=1e-7)

    def test_clipped_critic_scores_are_bounded(self):
        c = 0.01
        model = scrambled(RotationInvariantAutoencoder(toy_spec()))
        model.critic.clip_(c)
        bound = 1.0  # pixels lie in [0, 1]
        for layer in [*model.critic.features, model.critic.score]:
            if isinstance(layer, nn.Conv2d):
                bound = c * layer.in_channels * layer.kernel_size[0] * layer.kernel_size[1] * bound + c
            elif isinstance(layer, nn.Linear):
                bound = c * layer.in_features * bound + c
        batch = torch.cat([torch.rand(14, 1, 8, 8, dtype=torch.float64), torch.zeros(1, 1, 8, 8, dtype=torch.float64),
                           torch.ones(1, 1, 8, 8, dtype=torch.float64)])
        scores = model.criticize(batch)
        self.assertTrue(bool(torch.isfinite(scores).all()))
        self.assertLessEqual(float(scores.abs().max()), bound)


class GradientCheckTest(SimpleTestCase):

    def setUp(self):
        torch.manual_seed(0)

    def test_conv2d(self):
        x = torch.rand(2, 2, 8, 8, dtype=torch.float64, requires_grad=True)
        w = torch.randn(3, 2, 4, 4, dtype=torch.float64, requires_grad=True)
        b = torch.randn(3, dtype=torch.float64, requires_grad=True)
        self.assertTrue(gradcheck(lambda x, w, b: F.conv2d(x, w, b, stride=2, padding=1), (x, w, b), **GRADCHECK))

    def test_conv_transpose2d(self):
        for output_padding in (0, 1):
            x = torch.rand(2, 3, 3, 3, dtype=torch.float64, requires_grad=True)
            w = torch.randn(3, 2, 4, 4, dtype=torch.float64, requires_grad=True)
            b = torch.randn(2, dtype=torch.float64, requires_grad=True)

            def layer(x, w, b):
                return F.conv_transpose2d(x, w, b, stride=2, padding=1, output_padding=output_padding)

            self.assertTrue(gradcheck(layer, (x, w, b), **GRADCHECK))

    def test_linear(self):
        x = torch.rand(4, 6, dtype=torch.float64, requires_grad=True)
        w = torch.randn(3, 6, dtype=torch.float64, requires_grad=True)
        b = torch.randn(3, dtype=torch.float64, requires_grad=True)
        self.assertTrue(gradcheck(F.linear, (x, w, b), **GRADCHECK))

    def test_leaky_relu(self):
        # keep inputs away from the kink at 0
        x = torch.rand(20, dtype=torch.float64) + 0.1
        x = (x * torch.where(torch.arange(20) % 2 == 0, 1.0, -1.0).double()).requires_grad_()
        self.assertTrue(gradcheck(lambda x: F.leaky_relu(x, 0.2), (x,), **GRADCHECK))

    def test_encoder(self):
        model = scrambled(RotationInvariantAutoencoder(toy_spec()))
        x = torch.rand(2, 1, 8, 8, dtype=torch.float64, requires_grad=True)
        self.assertTrue(gradcheck(model.encoder, (x,), **GRADCHECK))

    def test_decoder(self):
        model = scrambled(RotationInvariantAutoencoder(toy_spec(input_size=7)), seed=1)
        z = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
        self.assertTrue(gradcheck(model.decoder, (z,), **GRADCHECK))

    def test_critic(self):
        model = scrambled(RotationInvariantAutoencoder(toy_spec()), seed=2)
        x = torch.rand(2, 1, 8, 8, dtype=torch.float64, requires_grad=True)
        self.assertTrue(gradcheck(model.critic, (x,), **GRADCHECK))


class CheckpointTest(SimpleTestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.model = RotationInvariantAutoencoder(toy_spec())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def checkpoint(self, **extra):
        return Checkpoint(
            spec=self.model.spec,
            encoder=self.model.encoder.state_dict(),
            decoder=self.model.decoder.state_dict(),
            critic=self.model.critic.state_dict(),
            **extra,
        )

    def test_round_trip(self):
        path = save_checkpoint(self.checkpoint(epoch=3, step=12, consecutive_aborts=1), self.tmp / checkpoint_filename(3))
        self.assertEqual(path.name, 'checkpoint_epoch0003.pt')
        loaded = load_checkpoint(path)
        self.assertEqual((loaded.epoch, loaded.step, loaded.consecutive_aborts), (3, 12, 1))
        self.assertEqual(loaded.spec, self.model.spec)

        restored = load_model(path)
        self.assertFalse(restored.training)
        batch = torch.rand(2, 1, 8, 8)
        self.model.eval()
        with torch.no_grad():
            self.assertTrue(torch.equal(restored.reconstruct(batch)[1], self.model.reconstruct(batch)[1]))

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.tmp / 'missing.pt')

    def test_not_a_checkpoint(self):
        torch.save({'format': 'something-else'}, self.tmp / 'other.pt')
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.tmp / 'other.pt')

    def test_version_mismatch(self):
        path = save_checkpoint(self.checkpoint(), self.tmp / 'ckpt.pt')
        payload = torch.load(path, weights_only=True)
        payload['version'] = 999
        torch.save(payload, path)
        with self.assertRaises(ResumeError):
            load_checkpoint(path)

    def test_invalid_stored_spec(self):
        path = save_checkpoint(self.checkpoint(), self.tmp / 'ckpt.pt')
        payload = torch.load(path, weights_only=True)
        payload['spec']['content_dim'] = 0
        torch.save(payload, path)
        with self.assertRaises(CheckpointError):
            load_checkpoint(path)

    def test_parameters_must_match_spec(self):
        other = RotationInvariantAutoencoder(toy_spec(content_dim=5))
        checkpoint = Checkpoint(
            spec=self.model.spec,
            encoder=other.encoder.state_dict(),
            decoder=other.decoder.state_dict(),
            critic=other.critic.state_dict(),
        )
        with self.assertRaises(CheckpointError):
            checkpoint.build_model()

    def test_latent_code_is_a_named_tuple(self):
        code = LatentCode(theta_hat=torch.zeros(2), z=torch.ones(2, 3))
        self.assertEqual(join_latent(code).shape, (2, 4))
