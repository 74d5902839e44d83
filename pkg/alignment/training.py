"""
Alternating optimization of the autoencoder and the critic.

Every step updates the encoder and decoder on the weighted sum of the angle,
reconstruction and decoder adversarial losses. Every
`decoder_steps_per_critic_step`-th step the critic is additionally updated on
its Wasserstein objective (real = canonical targets, fake = reconstructions
with gradients blocked) and its weights are clipped into [-clip_c, clip_c].
"""

import csv
import logging
import math
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Union

import numpy as np
import torch
from tqdm import tqdm

from .checkpoints import Checkpoint, checkpoint_filename, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .datasets import DatasetSplit, SourceTag, load_split, rerotate
from .exceptions import ArgumentError, ConfigurationError, NumericError, ResumeError, TrainingHaltedError
from .losses import LossBreakdown, angle_loss, critic_loss, decoder_adv_loss, recon_loss, total_loss
from .networks import NetworkSpec, RotationInvariantAutoencoder

logger = logging.getLogger(__name__)

MAX_CONSECUTIVE_ABORTS = 3

LOG_COLUMNS = ['epoch', 'step', 'angle', 'rec', 'adv_decoder', 'adv_critic', 'total', 'lr', 'seconds']


def configure_threads(threads: int) -> None:
    """0 keeps torch's default (all cores); 1 also switches on deterministic kernels."""
    if threads > 0:
        torch.set_num_threads(threads)
    if threads == 1:
        torch.use_deterministic_algorithms(True)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Single step decay: lr before lr_decay_epoch, lr * lr_decay_factor from then on."""
    if not 0 <= epoch < cfg.epochs:
        raise ArgumentError(f"Epoch {epoch} is outside the schedule [0, {cfg.epochs})")
    if epoch < cfg.lr_decay_epoch:
        return cfg.lr
    return cfg.lr * cfg.lr_decay_factor


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray
    thetas: np.ndarray


@dataclass
class TrainLogRecord:
    epoch: int
    step: int
    losses: LossBreakdown
    lr: float
    seconds: float
    aborted: bool = False

    @property
    def critic_updated(self) -> bool:
        return self.losses.adv_critic is not None

    def to_row(self) -> list:
        def fmt(value):
            return '' if value is None else f"{value:.9g}"
        losses = self.losses
        return [
            self.epoch, self.step, fmt(losses.angle), fmt(losses.rec), fmt(losses.adv_decoder),
            fmt(losses.adv_critic), fmt(losses.total), fmt(self.lr), f"{self.seconds:.3f}",
        ]


class TrainLog:
    """
    CSV log, one row per step. On resume, rows past the checkpoint's step
    are dropped so the file continues exactly where the checkpoint left off.
    """

    def __init__(self, path: Union[str, Path], resume_step: Optional[int] = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        kept: list[list[str]] = []
        if resume_step is not None and self.path.is_file():
            with open(self.path, newline='') as handle:
                reader = csv.reader(handle)
                next(reader, None)
                kept = [row for row in reader if row and int(row[1]) <= resume_step]
        self._handle = open(self.path, 'w', newline='')
        self._writer = csv.writer(self._handle)
        self._writer.writerow(LOG_COLUMNS)
        self._writer.writerows(kept)

    def write(self, record: TrainLogRecord) -> None:
        self._writer.writerow(record.to_row())

    def flush(self) -> None:
        self._handle.flush()

    def close(self) -> None:
        self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path: Union[str, Path]) -> list[dict]:
    with open(path, newline='') as handle:
        return list(csv.DictReader(handle))


_DONE = object()


class BatchPrefetcher:
    """Prepares one epoch's batches on a worker thread and hands them over through a bounded queue."""

    def __init__(self, make_batch: Callable[[int], Batch], batch_count: int, queue_size: int):
        self._make_batch = make_batch
        self._batch_count = batch_count
        self._queue: queue.Queue = queue.Queue(maxsize=queue_size)
        self._stop = threading.Event()
        self._error: Optional[BaseException] = None
        self._thread = threading.Thread(target=self._run, name='batch-prefetcher', daemon=True)

    def _run(self) -> None:
        try:
            for index in range(self._batch_count):
                if self._stop.is_set():
                    return
                self._queue.put(self._make_batch(index))
        except BaseException as e:
            self._error = e
        finally:
            self._queue.put(_DONE)

    def __iter__(self) -> Iterator[Batch]:
        self._thread.start()
        try:
            while True:
                item = self._queue.get()
                if item is _DONE:
                    break
                yield item
        finally:
            self._stop.set()
            while self._thread.is_alive():
                try:
                    self._queue.get(timeout=0.1)
                except queue.Empty:
                    pass
            self._thread.join()
        if self._error is not None:
            raise self._error


class Trainer:
    """
    Owns the model, both optimizers, the step counter and the data rng of one
    training run. Parameters are only ever touched from the calling thread.
    """

    def __init__(self, cfg: TrainConfig, model: RotationInvariantAutoencoder, source_tag: Union[str, SourceTag]):
        self.cfg = cfg
        self.model = model
        self.source_tag = SourceTag(source_tag)
        self.wrap = cfg.wrap if cfg.wrap is not None else self.source_tag.distribution.circular
        self.autoencoder_optimizer = torch.optim.AdamW(
            list(model.autoencoder_parameters()), lr=cfg.lr, betas=cfg.adam_betas, weight_decay=cfg.weight_decay,
        )
        self.critic_optimizer = torch.optim.AdamW(
            model.critic.parameters(), lr=cfg.lr, betas=cfg.adam_betas, weight_decay=cfg.weight_decay,
        )
        self.model.critic.clip_(cfg.clip_c)
        self.rng = np.random.default_rng(cfg.seed)
        self.epoch = 0
        self.step = 0
        self.consecutive_aborts = 0
        self.lr = lr_at(0, cfg)
        self._started = time.perf_counter()

    @property
    def halted(self) -> bool:
        return self.consecutive_aborts >= MAX_CONSECUTIVE_ABORTS

    def begin_epoch(self, epoch: int) -> None:
        self.epoch = epoch
        self.lr = lr_at(epoch, self.cfg)
        for optimizer in (self.autoencoder_optimizer, self.critic_optimizer):
            for group in optimizer.param_groups:
                group['lr'] = self.lr
        self.model.train()

    def epoch_batches(self, split: DatasetSplit) -> Iterator[Batch]:
        """Shuffle with the run's rng; re-rotate targets when the augmentation variant is on."""
        order = self.rng.permutation(len(split))
        batch_size = self.cfg.batch_size
        batch_count = math.ceil(len(split) / batch_size)

        def make_batch(index: int) -> Batch:
            chosen = order[index * batch_size:(index + 1) * batch_size]
            targets = split.targets[chosen]
            if self.cfg.rerotate_each_epoch:
                inputs, thetas = rerotate(targets, split.source_tag, self.rng, self.cfg.noise_std)
            else:
                inputs, thetas = split.inputs[chosen], split.thetas[chosen]
            return Batch(inputs=inputs, targets=targets, thetas=thetas)

        if self.cfg.deterministic:
            return (make_batch(index) for index in range(batch_count))
        return iter(BatchPrefetcher(make_batch, batch_count, self.cfg.loader_queue_size))

    @staticmethod
    def _tensors(batch: Batch) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        inputs = torch.from_numpy(np.ascontiguousarray(batch.inputs, dtype=np.float32)).unsqueeze(1)
        targets = torch.from_numpy(np.ascontiguousarray(batch.targets, dtype=np.float32)).unsqueeze(1)
        thetas = torch.from_numpy(np.asarray(batch.thetas, dtype=np.float32))
        return inputs, targets, thetas

    def autoencoder_objective(self, inputs: torch.Tensor, targets: torch.Tensor,
                              thetas: torch.Tensor) -> tuple[LossBreakdown, torch.Tensor]:
        """Autoencoder losses and reconstructions. The graph reaches encoder and decoder only."""
        cfg = self.cfg
        self.model.critic.requires_grad_(False)
        try:
            code, x_hat = self.model.reconstruct(inputs)
            losses = total_loss(
                angle_loss(thetas, code.theta_hat, wrap=self.wrap),
                recon_loss(targets, x_hat, squared_l2=cfg.squared_l2),
                decoder_adv_loss(self.model.criticize(x_hat), literal_signs=cfg.literal_adv_signs),
                cfg.weights,
            )
        finally:
            self.model.critic.requires_grad_(True)
        if not torch.isfinite(losses.total):
            raise NumericError(f"Non-finite autoencoder loss {float(losses.total)}")
        return losses, x_hat

    def critic_objective(self, targets: torch.Tensor, fakes: torch.Tensor) -> torch.Tensor:
        loss = critic_loss(
            self.model.criticize(targets),
            self.model.criticize(fakes.detach()),
            literal_signs=self.cfg.literal_adv_signs,
        )
        if not torch.isfinite(loss):
            raise NumericError(f"Non-finite critic loss {float(loss)}")
        return loss

    def _step_autoencoder(self, losses: LossBreakdown) -> None:
        self.autoencoder_optimizer.zero_grad(set_to_none=True)
        losses.total.backward()
        self.autoencoder_optimizer.step()

    def _step_critic(self, loss: torch.Tensor) -> None:
        self.critic_optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.critic_optimizer.step()
        self.model.critic.clip_(self.cfg.clip_c)

    def autoencoder_update(self, inputs: torch.Tensor, targets: torch.Tensor,
                           thetas: torch.Tensor) -> tuple[LossBreakdown, torch.Tensor]:
        """One optimizer step of encoder and decoder; the critic's weights are left untouched."""
        losses, x_hat = self.autoencoder_objective(inputs, targets, thetas)
        self._step_autoencoder(losses)
        return losses.detached(), x_hat.detach()

    def critic_update(self, targets: torch.Tensor, fakes: torch.Tensor) -> float:
        """One critic step on (real = targets, fake = detached reconstructions), then weight clipping."""
        loss = self.critic_objective(targets, fakes)
        self._step_critic(loss)
        return float(loss.detach())

    def train_step(self, batch: Batch) -> TrainLogRecord:
        """
        Run one decoder step (plus the critic step when it is due) and return
        its log record. A non-finite loss aborts the step; check `halted`
        afterwards.
        """
        self.step += 1
        inputs, targets, thetas = self._tensors(batch)
        critic_due = self.step % self.cfg.decoder_steps_per_critic_step == 0
        # Both objectives are checked before either optimizer steps, so an
        # aborted step leaves every network as it was.
        try:
            losses, reconstructions = self.autoencoder_objective(inputs, targets, thetas)
            critic = self.critic_objective(targets, reconstructions) if critic_due else None
        except NumericError as e:
            self.consecutive_aborts += 1
            logger.warning(
                f"Aborted step {self.step} in epoch {self.epoch} "
                f"({self.consecutive_aborts} in a row): {e}"
            )
            nan = float('nan')
            losses = LossBreakdown(nan, nan, nan, nan if critic_due else None, nan)
            aborted = True
        else:
            self._step_autoencoder(losses)
            if critic is not None:
                self._step_critic(critic)
            losses = losses.detached()
            losses.adv_critic = float(critic.detach()) if critic is not None else None
            self.consecutive_aborts = 0
            aborted = False
        return TrainLogRecord(
            epoch=self.epoch, step=self.step, losses=losses, lr=self.lr,
            seconds=time.perf_counter() - self._started, aborted=aborted,
        )

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            spec=self.model.spec,
            encoder=self.model.encoder.state_dict(),
            decoder=self.model.decoder.state_dict(),
            critic=self.model.critic.state_dict(),
            epoch=self.epoch,
            step=self.step,
            autoencoder_optimizer=self.autoencoder_optimizer.state_dict(),
            critic_optimizer=self.critic_optimizer.state_dict(),
            config=self.cfg.model_dump(mode='json'),
            numpy_rng=self.rng.bit_generator.state,
            torch_rng=torch.get_rng_state(),
            consecutive_aborts=self.consecutive_aborts,
        )

    def restore(self, checkpoint: Checkpoint) -> None:
        if checkpoint.spec != self.model.spec:
            raise ResumeError(
                f"Checkpoint network {checkpoint.spec.model_dump()} does not match "
                f"the configured network {self.model.spec.model_dump()}"
            )
        restored = checkpoint.build_model()
        self.model.load_state_dict(restored.state_dict())
        if checkpoint.autoencoder_optimizer is not None:
            self.autoencoder_optimizer.load_state_dict(checkpoint.autoencoder_optimizer)
        if checkpoint.critic_optimizer is not None:
            self.critic_optimizer.load_state_dict(checkpoint.critic_optimizer)
        if checkpoint.numpy_rng is not None:
            self.rng.bit_generator.state = checkpoint.numpy_rng
        if checkpoint.torch_rng is not None:
            torch.set_rng_state(checkpoint.torch_rng)
        self.epoch = checkpoint.epoch
        self.step = checkpoint.step
        self.consecutive_aborts = checkpoint.consecutive_aborts


@dataclass
class TrainResult:
    checkpoint_path: Optional[Path]
    log_path: Path
    epochs_completed: int
    steps: int
    records: list[TrainLogRecord] = field(default_factory=list)


def _epoch_summary(records: list[TrainLogRecord]) -> str:
    completed = [r for r in records if not r.aborted]
    if not completed:
        return "no completed steps"
    mean = {
        name: float(np.mean([getattr(r.losses, name) for r in completed]))
        for name in ('angle', 'rec', 'adv_decoder', 'total')
    }
    critic_updates = sum(1 for r in completed if r.critic_updated)
    return (
        f"angle {mean['angle']:.4f}, rec {mean['rec']:.4f}, adv {mean['adv_decoder']:.4f}, "
        f"total {mean['total']:.4f}, {critic_updates} critic updates"
    )


def train(cfg: TrainConfig, resume: Optional[Union[str, Path]] = None, progress: bool = False) -> TrainResult:
    """
    Run the full schedule (or its remainder when resuming), writing the step
    log and checkpoints into cfg.output_dir.
    """
    if cfg.output_dir is None:
        raise ConfigurationError("output_dir must be set")
    if cfg.train_path is None:
        raise ConfigurationError("train_path must be set")
    configure_threads(cfg.threads)

    split = load_split(cfg.train_path, expected_split='train')
    if len(split) == 0:
        raise ConfigurationError(f"Training split {cfg.train_path} is empty")

    torch.manual_seed(cfg.seed)
    spec = NetworkSpec(input_size=split.height, **cfg.network.model_dump())
    model = RotationInvariantAutoencoder(spec)
    trainer = Trainer(cfg, model, split.source_tag)

    checkpoint_path: Optional[Path] = None
    if resume is not None:
        checkpoint_path = Path(resume)
        trainer.restore(load_checkpoint(checkpoint_path))
        logger.info(f"Resuming from {checkpoint_path} at epoch {trainer.epoch}, step {trainer.step}")

    output_dir = Path(cfg.output_dir)
    log_path = output_dir / cfg.log_name
    records: list[TrainLogRecord] = []
    logger.info(
        f"Training on {len(split)} {split.source_tag.value} samples of {split.height}x{split.width} "
        f"for {cfg.epochs} epochs (batch {cfg.batch_size}, wrap={trainer.wrap})"
    )

    with TrainLog(log_path, resume_step=trainer.step if resume is not None else None) as log:
        epochs = tqdm(range(trainer.epoch, cfg.epochs), desc='epochs', disable=not progress)
        for epoch in epochs:
            trainer.begin_epoch(epoch)
            epoch_records = []
            for batch in trainer.epoch_batches(split):
                record = trainer.train_step(batch)
                log.write(record)
                epoch_records.append(record)
                if trainer.halted:
                    log.flush()
                    raise TrainingHaltedError(
                        f"Training halted after {MAX_CONSECUTIVE_ABORTS} consecutive aborted steps "
                        f"(epoch {epoch}, step {trainer.step})"
                    )
            log.flush()
            records.extend(epoch_records)
            trainer.epoch = epoch + 1
            logger.info(f"Epoch {epoch + 1}/{cfg.epochs} lr {trainer.lr:.2e}: {_epoch_summary(epoch_records)}")

            if trainer.epoch % cfg.checkpoint_every == 0 or trainer.epoch == cfg.epochs:
                checkpoint_path = save_checkpoint(trainer.checkpoint(), output_dir / checkpoint_filename(trainer.epoch))

    return TrainResult(
        checkpoint_path=checkpoint_path,
        log_path=log_path,
        epochs_completed=trainer.epoch,
        steps=trainer.step,
        records=records,
    )
