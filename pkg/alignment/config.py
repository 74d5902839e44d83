"""
Training configuration.

TrainConfig mirrors the config file field for field (TOML or JSON). Values
are layered: built-in defaults, then the config file, then `key=value`
overrides, then explicit CLI flags.
"""

import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Iterable, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

from .exceptions import ConfigurationError
from .losses import LossWeights

logger = logging.getLogger(__name__)


class NetworkSettings(BaseModel):
    model_config = ConfigDict(extra='forbid')

    content_dim: PositiveInt = 32
    encoder_channels: list[PositiveInt] = Field(default_factory=lambda: [32, 64, 128, 256], min_length=1)
    critic_channels: list[PositiveInt] = Field(default_factory=lambda: [32, 64, 128], min_length=1)
    negative_slope: float = Field(default=0.2, ge=0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    # schedule
    epochs: int = Field(default=300, ge=1)
    lr: PositiveFloat = 1e-4
    lr_decay_epoch: int = Field(default=200, ge=0)
    lr_decay_factor: float = Field(default=0.1, gt=0, le=1)
    weight_decay: float = Field(default=1e-5, ge=0)
    adam_betas: tuple[float, float] = (0.5, 0.9)
    decoder_steps_per_critic_step: int = Field(default=4, ge=1)
    batch_size: PositiveInt = 128
    clip_c: PositiveFloat = 0.01
    seed: int = 0

    # objectives
    weights: LossWeights = Field(default_factory=LossWeights)
    wrap: Optional[bool] = None  # None: wrap for circular (uniform-angle) data only
    squared_l2: bool = False
    literal_adv_signs: bool = False

    # data
    dataset: Literal['rotated-mnist', 'synth-5hdb'] = 'rotated-mnist'
    train_path: Optional[Path] = None
    test_path: Optional[Path] = None
    rerotate_each_epoch: bool = False
    noise_std: float = Field(default=0.1, ge=0)

    # outputs
    output_dir: Optional[Path] = None
    checkpoint_every: PositiveInt = 10
    log_name: str = 'train_log.csv'

    network: NetworkSettings = Field(default_factory=NetworkSettings)

    # 0: all cores; 1: single-threaded determinism mode
    threads: int = Field(default=0, ge=0)
    loader_queue_size: PositiveInt = 4

    @model_validator(mode='after')
    def _decay_within_schedule(self):
        if self.lr_decay_epoch > self.epochs:
            logger.warning(f"lr_decay_epoch {self.lr_decay_epoch} is beyond the last epoch; lr never decays")
        return self

    @property
    def deterministic(self) -> bool:
        return self.threads == 1


def _read_file(path: Path) -> dict:
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix == '.json':
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigurationError(f"Cannot parse config file {path}: {e}") from e


def _parse_value(raw: str) -> Any:
    """JSON literals where possible (numbers, booleans, lists), plain strings otherwise."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _set_path(values: dict, key: str, value: Any) -> None:
    target = values
    *parents, leaf = key.split('.')
    for parent in parents:
        target = target.setdefault(parent, {})
        if not isinstance(target, dict):
            raise ConfigurationError(f"Cannot set {key!r}: {parent} is not a section")
    target[leaf] = value


def apply_overrides(values: dict, overrides: Iterable[str]) -> dict:
    """Apply `key=value` strings; dotted keys address nested sections (weights.w_adv=0)."""
    values = json.loads(json.dumps(values, default=str))
    for override in overrides:
        key, sep, raw = override.partition('=')
        if not sep or not key.strip():
            raise ConfigurationError(f"Override must look like key=value, got {override!r}")
        _set_path(values, key.strip(), _parse_value(raw.strip()))
    return values


def build_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = (),
                 flags: Optional[dict] = None) -> TrainConfig:
    """
    Layer defaults < config file < overrides < explicit flags into a
    validated TrainConfig. Flags with value None are treated as not given;
    dotted flag names address nested sections.
    """
    values: dict = _read_file(Path(path)) if path else {}
    values = apply_overrides(values, overrides)
    for key, value in (flags or {}).items():
        if value is not None:
            _set_path(values, key, value)
    try:
        return TrainConfig(**values)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid training configuration: {e}") from e
