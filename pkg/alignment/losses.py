"""
Training objectives.

angle_loss      exp(|theta - theta_hat|) - 1, optionally on the wrapped difference
recon_loss      ||x - x_hat||_2 + ||x - x_hat||_1 per image, batch mean
critic_loss     Wasserstein critic objective, mean(fake) - mean(real)
decoder_adv_loss  -mean(fake)
total_loss      weighted sum of angle, reconstruction and decoder adversarial terms

All batch reductions are arithmetic means. At the kinks (zero difference) the
subgradient is 0.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import torch
from pydantic import NonNegativeFloat

from .exceptions import ArgumentError, DimensionError
from .validation import ValidatedModel

logger = logging.getLogger(__name__)

Number = Union[float, torch.Tensor]


class LossWeights(ValidatedModel):
    w_angle: NonNegativeFloat = 1.0
    w_rec: NonNegativeFloat = 1.0
    w_adv: NonNegativeFloat = 1.0


@dataclass
class LossBreakdown:
    angle: Number
    rec: Number
    adv_decoder: Number
    adv_critic: Optional[Number]  # None when the critic was not updated
    total: Number

    def detached(self) -> 'LossBreakdown':
        """Plain floats, for logging."""
        def value(x):
            if x is None:
                return None
            return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)
        return LossBreakdown(*(value(getattr(self, name)) for name in ('angle', 'rec', 'adv_decoder', 'adv_critic', 'total')))


def _tensor(value, like=None) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    dtype = like.dtype if isinstance(like, torch.Tensor) else torch.float64
    return torch.as_tensor(value, dtype=dtype)


def wrapped_difference(theta: torch.Tensor, theta_hat: torch.Tensor) -> torch.Tensor:
    """Signed geodesic distance on the circle, atan2(sin(a - b), cos(a - b))."""
    diff = theta - theta_hat
    return torch.atan2(torch.sin(diff), torch.cos(diff))


def angle_loss(theta, theta_hat, wrap: bool = False) -> torch.Tensor:
    theta_hat = _tensor(theta_hat, theta)
    theta = _tensor(theta, theta_hat).to(theta_hat.dtype)
    diff = wrapped_difference(theta, theta_hat) if wrap else theta - theta_hat
    return torch.expm1(diff.abs()).mean()


def _safe_norm(squared: torch.Tensor) -> torch.Tensor:
    # sqrt with a zero subgradient at 0 instead of inf * 0
    positive = squared > 0
    root = squared.clamp_min(torch.finfo(squared.dtype).tiny).sqrt()
    return torch.where(positive, root, torch.zeros_like(root))


def recon_loss(x: torch.Tensor, x_hat: torch.Tensor, squared_l2: bool = False) -> torch.Tensor:
    """
    Per image: Euclidean norm of the pixel difference plus its L1 norm
    (the squared Euclidean norm when squared_l2 is set); mean over the batch.
    """
    if x.shape != x_hat.shape:
        raise DimensionError(f"Reconstruction shape {tuple(x_hat.shape)} does not match target {tuple(x.shape)}")
    if x.ndim == 0 or x.shape[0] == 0:
        raise ArgumentError("Reconstruction loss needs a non-empty batch")
    diff = (x - x_hat).reshape(x.shape[0], -1)
    squared = (diff ** 2).sum(dim=1)
    l2 = squared if squared_l2 else _safe_norm(squared)
    l1 = diff.abs().sum(dim=1)
    return (l2 + l1).mean()


def _check_scores(scores: torch.Tensor, name: str) -> None:
    if scores.numel() == 0:
        raise ArgumentError(f"{name} scores are empty")


def critic_loss(scores_real, scores_fake, literal_signs: bool = False) -> torch.Tensor:
    """
    The quantity the critic minimizes: mean(fake) - mean(real).
    literal_signs takes the written objective as is: mean(real) - mean(fake).
    """
    scores_real = _tensor(scores_real)
    scores_fake = _tensor(scores_fake, scores_real)
    _check_scores(scores_real, 'Real')
    _check_scores(scores_fake, 'Fake')
    if scores_real.shape != scores_fake.shape:
        raise DimensionError(f"Real and fake batches differ: {tuple(scores_real.shape)} vs {tuple(scores_fake.shape)}")
    gap = scores_fake.mean() - scores_real.mean()
    return -gap if literal_signs else gap


def decoder_adv_loss(scores_fake, literal_signs: bool = False) -> torch.Tensor:
    """-mean(fake): the decoder pushes its critic scores up. literal_signs gives +mean(fake)."""
    scores_fake = _tensor(scores_fake)
    _check_scores(scores_fake, 'Fake')
    mean = scores_fake.mean()
    return mean if literal_signs else -mean


def weighted_total(angle: Number, rec: Number, adv_decoder: Number, weights: LossWeights) -> Number:
    return weights.w_angle * angle + weights.w_rec * rec + weights.w_adv * adv_decoder


def total_loss(angle: Number, rec: Number, adv_decoder: Number, weights: LossWeights = None,
               adv_critic: Optional[Number] = None) -> LossBreakdown:
    """
    Combine the autoencoder objectives. The critic loss is carried along for
    reporting only; the critic is optimized on its own objective.
    """
    weights = weights or LossWeights()
    return LossBreakdown(
        angle=angle,
        rec=rec,
        adv_decoder=adv_decoder,
        adv_critic=adv_critic,
        total=weighted_total(angle, rec, adv_decoder, weights),
    )
