"""
Versioned checkpoint container.

A checkpoint holds the NetworkSpec, the encoder, decoder and critic
parameters, both optimizer states, the epoch and step counters, the training
configuration and every rng state needed to continue a run exactly.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import torch

from .exceptions import CheckpointError, ConfigurationError, ResumeError
from .networks import NetworkSpec, RotationInvariantAutoencoder

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'canon-pose-checkpoint'
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    spec: NetworkSpec
    encoder: dict
    decoder: dict
    critic: dict
    epoch: int = 0
    step: int = 0
    autoencoder_optimizer: Optional[dict] = None
    critic_optimizer: Optional[dict] = None
    config: dict = field(default_factory=dict)
    numpy_rng: Optional[dict] = None
    torch_rng: Optional[torch.Tensor] = None
    consecutive_aborts: int = 0

    def build_model(self) -> RotationInvariantAutoencoder:
        model = RotationInvariantAutoencoder(self.spec)
        try:
            model.encoder.load_state_dict(self.encoder)
            model.decoder.load_state_dict(self.decoder)
            model.critic.load_state_dict(self.critic)
        except RuntimeError as e:
            raise CheckpointError(f"Checkpoint parameters do not match the stored network spec: {e}") from e
        return model


def checkpoint_filename(epoch: int) -> str:
    return f"checkpoint_epoch{epoch:04d}.pt"


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload: dict[str, Any] = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'spec': checkpoint.spec.model_dump(),
        'encoder': checkpoint.encoder,
        'decoder': checkpoint.decoder,
        'critic': checkpoint.critic,
        'epoch': checkpoint.epoch,
        'step': checkpoint.step,
        'autoencoder_optimizer': checkpoint.autoencoder_optimizer,
        'critic_optimizer': checkpoint.critic_optimizer,
        'config': checkpoint.config,
        'numpy_rng': checkpoint.numpy_rng,
        'torch_rng': checkpoint.torch_rng,
        'consecutive_aborts': checkpoint.consecutive_aborts,
    }
    tmp_path = path.with_name(path.name + '.tmp')
    torch.save(payload, tmp_path)
    os.replace(tmp_path, path)
    logger.info(f"Saved checkpoint for epoch {checkpoint.epoch} to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location='cpu', weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if not isinstance(payload, dict) or payload.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a canon_pose checkpoint")
    if payload.get('version') != CHECKPOINT_VERSION:
        raise ResumeError(
            f"{path}: checkpoint version {payload.get('version')} is not supported (expected {CHECKPOINT_VERSION})"
        )
    try:
        spec = NetworkSpec(**payload['spec'])
    except ConfigurationError as e:
        raise CheckpointError(f"{path}: stored network spec is invalid: {e}") from e
    return Checkpoint(
        spec=spec,
        encoder=payload['encoder'],
        decoder=payload['decoder'],
        critic=payload['critic'],
        epoch=payload['epoch'],
        step=payload['step'],
        autoencoder_optimizer=payload['autoencoder_optimizer'],
        critic_optimizer=payload['critic_optimizer'],
        config=payload['config'],
        numpy_rng=payload['numpy_rng'],
        torch_rng=payload['torch_rng'],
        consecutive_aborts=payload.get('consecutive_aborts', 0),
    )


def load_model(path: Union[str, Path]) -> RotationInvariantAutoencoder:
    """Load a checkpoint and return its model in evaluation mode."""
    model = load_checkpoint(path).build_model()
    model.eval()
    return model
