"""
Encoder, decoder and critic networks.

The encoder maps an image to 1 + D latent values: index 0 is the predicted
rotation angle, the remaining D values are the content code z. Only z reaches
the decoder; the critic only ever sees images.
"""

import logging
from typing import NamedTuple

import torch
from pydantic import Field, PositiveInt, model_validator
from torch import nn

from .exceptions import DimensionError, NumericError
from .validation import ValidatedModel

logger = logging.getLogger(__name__)

KERNEL_SIZE = 4
STRIDE = 2
PADDING = 1
INIT_STD = 0.02


class NetworkSpec(ValidatedModel):
    input_size: PositiveInt
    content_dim: PositiveInt = 32
    encoder_channels: list[PositiveInt] = Field(default_factory=lambda: [32, 64, 128, 256], min_length=1)
    critic_channels: list[PositiveInt] = Field(default_factory=lambda: [32, 64, 128], min_length=1)
    negative_slope: float = Field(default=0.2, ge=0)

    @model_validator(mode='after')
    def _fits_input(self):
        for name, channels in (('encoder', self.encoder_channels), ('critic', self.critic_channels)):
            sizes = downsampled_sizes(self.input_size, len(channels))
            if sizes[-1] < 1:
                raise ValueError(
                    f"{name} with {len(channels)} strided layers cannot downsample a "
                    f"{self.input_size}px input (sizes {sizes})"
                )
        return self

    @property
    def latent_width(self) -> int:
        return 1 + self.content_dim


def conv_output_size(size: int) -> int:
    return (size + 2 * PADDING - KERNEL_SIZE) // STRIDE + 1


def downsampled_sizes(input_size: int, layers: int) -> list[int]:
    """Spatial size after each strided convolution, input size first."""
    sizes = [input_size]
    for _ in range(layers):
        sizes.append(conv_output_size(sizes[-1]) if sizes[-1] > 0 else 0)
    return sizes


class LatentCode(NamedTuple):
    theta_hat: torch.Tensor  # (B,)
    z: torch.Tensor  # (B, D)


def split_latent(raw: torch.Tensor, content_dim: int) -> LatentCode:
    """Column 0 is the angle, columns 1..D the content code."""
    if raw.ndim != 2 or raw.shape[1] != 1 + content_dim:
        raise DimensionError(f"Expected latent vectors of width {1 + content_dim}, got shape {tuple(raw.shape)}")
    return LatentCode(theta_hat=raw[:, 0], z=raw[:, 1:])


def join_latent(code: LatentCode) -> torch.Tensor:
    return torch.cat([code.theta_hat.unsqueeze(1), code.z], dim=1)


def init_weights(module: nn.Module) -> None:
    """Truncated-normal weights (std 0.02, cut at two std), zero biases."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.trunc_normal_(module.weight, mean=0.0, std=INIT_STD, a=-2 * INIT_STD, b=2 * INIT_STD)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def _check_images(batch: torch.Tensor, input_size: int) -> None:
    if batch.ndim != 4 or batch.shape[1] != 1 or batch.shape[2] != input_size or batch.shape[3] != input_size:
        raise DimensionError(
            f"Expected a batch of shape (B, 1, {input_size}, {input_size}), got {tuple(batch.shape)}"
        )


def _conv_stack(channels: list[int], negative_slope: float) -> nn.Sequential:
    layers = []
    in_channels = 1
    for out_channels in channels:
        layers.append(nn.Conv2d(in_channels, out_channels, KERNEL_SIZE, STRIDE, PADDING))
        layers.append(nn.LeakyReLU(negative_slope))
        in_channels = out_channels
    return nn.Sequential(*layers)


class Encoder(nn.Module):
    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        final_size = downsampled_sizes(spec.input_size, len(spec.encoder_channels))[-1]
        self.features = _conv_stack(spec.encoder_channels, spec.negative_slope)
        self.head = nn.Linear(spec.encoder_channels[-1] * final_size * final_size, spec.latent_width)
        self.apply(init_weights)

    def forward(self, batch: torch.Tensor) -> torch.Tensor:
        _check_images(batch, self.spec.input_size)
        return self.head(self.features(batch).flatten(1))


class Decoder(nn.Module):
    """
    Mirror of the encoder: an affine map from z to the encoder's final feature
    map, then transposed convolutions back to the input size, squashed into
    (0, 1).
    """

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        sizes = downsampled_sizes(spec.input_size, len(spec.encoder_channels))
        self.seed_channels = spec.encoder_channels[-1]
        self.seed_size = sizes[-1]
        self.project = nn.Linear(spec.content_dim, self.seed_channels * self.seed_size ** 2)

        out_channels = list(reversed(spec.encoder_channels[:-1])) + [1]
        layers = []
        in_channels = self.seed_channels
        # sizes[::-1] walks back up: each layer doubles, plus 1 where the encoder floored an odd size
        for target_size, source_size, channels in zip(sizes[-2::-1], sizes[:0:-1], out_channels):
            output_padding = target_size - 2 * source_size
            layers.append(nn.ConvTranspose2d(
                in_channels, channels, KERNEL_SIZE, STRIDE, PADDING, output_padding=output_padding,
            ))
            if channels != 1:
                layers.append(nn.LeakyReLU(spec.negative_slope))
            in_channels = channels
        self.act = nn.LeakyReLU(spec.negative_slope)
        self.upsample = nn.Sequential(*layers)
        self.apply(init_weights)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 2 or z.shape[1] != self.spec.content_dim:
            raise DimensionError(f"Expected content codes of width {self.spec.content_dim}, got shape {tuple(z.shape)}")
        seed = self.act(self.project(z)).view(-1, self.seed_channels, self.seed_size, self.seed_size)
        logits = self.upsample(seed)
        # clamp keeps outputs strictly inside (0, 1) where float32 sigmoid saturates
        eps = torch.finfo(logits.dtype).eps
        return torch.sigmoid(logits).clamp(eps, 1.0 - eps)


class Critic(nn.Module):
    """Wasserstein critic: strided convolutions then an affine map to one unbounded score."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        final_size = downsampled_sizes(spec.input_size, len(spec.critic_channels))[-1]
        self.features = _conv_stack(spec.critic_channels, spec.negative_slope)
        self.score = nn.Linear(spec.critic_channels[-1] * final_size * final_size, 1)
        self.apply(init_weights)

    def forward(self, batch: torch.Tensor) -> torch.Tensor:
        _check_images(batch, self.spec.input_size)
        return self.score(self.features(batch).flatten(1)).squeeze(1)

    @torch.no_grad()
    def clip_(self, c: float) -> None:
        for param in self.parameters():
            param.clamp_(-c, c)

    def max_abs_weight(self) -> float:
        return max(float(param.detach().abs().max()) for param in self.parameters())


class RotationInvariantAutoencoder(nn.Module):
    """The three networks of one model, built from a single NetworkSpec."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        self.encoder = Encoder(spec)
        self.decoder = Decoder(spec)
        self.critic = Critic(spec)

    def encode(self, batch: torch.Tensor) -> LatentCode:
        raw = self.encoder(batch)
        if not torch.isfinite(raw).all():
            raise NumericError("Encoder produced non-finite activations")
        return split_latent(raw, self.spec.content_dim)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        return self.decoder(z)

    def criticize(self, batch: torch.Tensor) -> torch.Tensor:
        return self.critic(batch)

    def reconstruct(self, batch: torch.Tensor) -> tuple[LatentCode, torch.Tensor]:
        code = self.encode(batch)
        return code, self.decode(code.z)

    def autoencoder_parameters(self):
        yield from self.encoder.parameters()
        yield from self.decoder.parameters()
