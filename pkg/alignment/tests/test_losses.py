import math

import torch
from django.test import SimpleTestCase
from torch.autograd import gradcheck

from alignment.exceptions import ArgumentError, ConfigurationError, DimensionError
from alignment.losses import (
    LossWeights,
    angle_loss,
    critic_loss,
    decoder_adv_loss,
    recon_loss,
    total_loss,
    wrapped_difference,
)

GRADCHECK = {'eps': 1e-5, 'atol': 1e-6, 'rtol': 1e-4}


def t(*values):
    return torch.tensor(values, dtype=torch.float64)


class AngleLossTest(SimpleTestCase):

    def test_exact_prediction_costs_nothing(self):
        self.assertEqual(float(angle_loss(t(0.3, -1.2), t(0.3, -1.2))), 0.0)

    def test_one_radian(self):
        self.assertAlmostEqual(float(angle_loss(t(1.0), t(0.0))), math.e - 1, places=6)
        self.assertAlmostEqual(float(angle_loss(t(-0.5), t(0.5))), math.e - 1, places=6)

    def test_wrapped_difference_across_zero(self):
        loss = angle_loss(t(0.1), t(2 * math.pi - 0.1), wrap=True)
        self.assertAlmostEqual(float(loss), math.exp(0.2) - 1, places=6)

    def test_full_turn_is_free_only_when_wrapped(self):
        self.assertAlmostEqual(float(angle_loss(t(2 * math.pi), t(0.0), wrap=True)), 0.0, places=12)
        self.assertAlmostEqual(float(angle_loss(t(2 * math.pi), t(0.0))), math.exp(2 * math.pi) - 1, places=6)

    def test_wrapped_loss_is_bounded(self):
        theta_hat = torch.linspace(-20, 20, 401, dtype=torch.float64)
        losses = torch.expm1(wrapped_difference(torch.zeros_like(theta_hat), theta_hat).abs())
        self.assertLessEqual(float(losses.max()), math.exp(math.pi) - 1 + 1e-9)

    def test_batch_mean(self):
        self.assertAlmostEqual(float(angle_loss(t(1.0, 0.0), t(0.0, 0.0))), (math.e - 1) / 2, places=6)

    def test_zero_subgradient_at_exact_prediction(self):
        theta_hat = t(0.7).requires_grad_()
        angle_loss(t(0.7), theta_hat).backward()
        self.assertEqual(float(theta_hat.grad), 0.0)

    def test_gradients(self):
        theta = t(0.2, -1.0, 2.5)
        theta_hat = t(0.9, -0.4, 1.0).requires_grad_()
        for wrap in (False, True):
            self.assertTrue(gradcheck(lambda th: angle_loss(theta, th, wrap=wrap), (theta_hat,), **GRADCHECK))


class ReconLossTest(SimpleTestCase):

    def test_identical_images(self):
        x = torch.rand(3, 1, 4, 4, dtype=torch.float64)
        self.assertEqual(float(recon_loss(x, x.clone())), 0.0)

    def test_single_pixel(self):
        x = torch.zeros(1, 1, 4, 4, dtype=torch.float64)
        x_hat = x.clone()
        x_hat[0, 0, 1, 2] = 0.5
        self.assertAlmostEqual(float(recon_loss(x, x_hat)), 1.0, places=6)

    def test_two_pixels(self):
        x = torch.zeros(1, 1, 4, 4, dtype=torch.float64)
        x_hat = x.clone()
        x_hat[0, 0, 0, 0] = 0.3
        x_hat[0, 0, 3, 3] = -0.4
        self.assertAlmostEqual(float(recon_loss(x, x_hat)), 1.2, places=6)

    def test_squared_variant(self):
        x = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
        x_hat = x.clone()
        x_hat[0, 0, 0, 0] = 0.3
        x_hat[0, 0, 1, 1] = 0.4
        self.assertAlmostEqual(float(recon_loss(x, x_hat, squared_l2=True)), 0.25 + 0.7, places=6)

    def test_mean_over_images(self):
        x = torch.zeros(2, 1, 2, 2, dtype=torch.float64)
        x_hat = x.clone()
        x_hat[0, 0, 0, 0] = 0.5
        self.assertAlmostEqual(float(recon_loss(x, x_hat)), 0.5, places=6)

    def test_triangle_bound(self):
        generator = torch.Generator().manual_seed(3)
        x, y, z = (torch.rand(4, 1, 5, 5, generator=generator, dtype=torch.float64) for _ in range(3))
        self.assertLessEqual(float(recon_loss(x, z)), float(recon_loss(x, y) + recon_loss(y, z)) + 1e-12)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            recon_loss(torch.zeros(2, 1, 4, 4), torch.zeros(2, 1, 4, 5))

    def test_finite_gradient_at_zero_difference(self):
        x = torch.rand(2, 1, 3, 3, dtype=torch.float64)
        x_hat = x.clone().requires_grad_()
        recon_loss(x, x_hat).backward()
        self.assertTrue(bool(torch.isfinite(x_hat.grad).all()))
        self.assertEqual(float(x_hat.grad.abs().max()), 0.0)

    def test_gradients(self):
        generator = torch.Generator().manual_seed(0)
        x = torch.rand(2, 1, 3, 3, generator=generator, dtype=torch.float64)
        x_hat = (x + 0.1 + torch.rand(2, 1, 3, 3, generator=generator, dtype=torch.float64)).requires_grad_()
        for squared in (False, True):
            self.assertTrue(gradcheck(lambda xh: recon_loss(x, xh, squared_l2=squared), (x_hat,), **GRADCHECK))


class AdversarialLossTest(SimpleTestCase):

    def test_critic_loss(self):
        self.assertEqual(float(critic_loss(t(0.4, -2.0), t(0.4, -2.0))), 0.0)
        self.assertEqual(float(critic_loss(t(1, 1), t(0, 0))), -1.0)
        self.assertEqual(float(critic_loss(t(0), t(2))), 2.0)

    def test_critic_loss_is_antisymmetric(self):
        real, fake = t(0.3, 1.7, -0.2), t(-1.1, 0.5, 2.0)
        self.assertAlmostEqual(float(critic_loss(real, fake)), -float(critic_loss(fake, real)), places=12)

    def test_printed_sign_convention(self):
        self.assertEqual(float(critic_loss(t(1, 1), t(0, 0), literal_signs=True)), 1.0)
        self.assertEqual(float(decoder_adv_loss(t(1, 3), literal_signs=True)), 2.0)

    def test_decoder_adv_loss(self):
        self.assertEqual(float(decoder_adv_loss(t(0, 0))), 0.0)
        self.assertEqual(float(decoder_adv_loss(t(1, 3))), -2.0)
        self.assertEqual(float(decoder_adv_loss(t(-1))), 1.0)

    def test_empty_batches(self):
        with self.assertRaises(ArgumentError):
            critic_loss(t(), t())
        with self.assertRaises(ArgumentError):
            decoder_adv_loss(t())

    def test_batch_size_mismatch(self):
        with self.assertRaises(DimensionError):
            critic_loss(t(1, 2), t(1))

    def test_gradients(self):
        real = t(0.5, -0.3, 1.2).requires_grad_()
        fake = t(0.1, 0.9, -0.8).requires_grad_()
        self.assertTrue(gradcheck(critic_loss, (real, fake), **GRADCHECK))
        self.assertTrue(gradcheck(decoder_adv_loss, (fake,), **GRADCHECK))


class TotalLossTest(SimpleTestCase):

    def test_unit_weights(self):
        self.assertEqual(total_loss(0.0, 0.0, 0.0).total, 0.0)
        self.assertEqual(total_loss(1.0, 2.0, 3.0).total, 6.0)

    def test_adversarial_term_ablated(self):
        breakdown = total_loss(1.0, 2.0, 3.0, LossWeights(w_adv=0.0))
        self.assertEqual(breakdown.total, 3.0)
        self.assertEqual(breakdown.adv_decoder, 3.0)

    def test_critic_loss_is_reported_not_summed(self):
        breakdown = total_loss(1.0, 2.0, 3.0, adv_critic=10.0)
        self.assertEqual(breakdown.total, 6.0)
        self.assertEqual(breakdown.adv_critic, 10.0)

    def test_negative_weight_rejected(self):
        with self.assertRaises(ConfigurationError):
            LossWeights(w_rec=-1.0)

    def test_detached_gives_floats(self):
        breakdown = total_loss(t(1.0)[0], t(2.0)[0], t(3.0)[0]).detached()
        self.assertEqual(breakdown.total, 6.0)
        self.assertIsNone(breakdown.adv_critic)
        self.assertIsInstance(breakdown.angle, float)
