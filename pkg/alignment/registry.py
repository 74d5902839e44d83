"""
Bookkeeping of training runs and evaluations in the Django database.

Every function here is best effort: a missing, unmigrated or unreachable
database is logged as a warning and never stops the pipeline.
"""

import logging
from pathlib import Path
from typing import Optional, Union

from django.db import DatabaseError

from .config import TrainConfig
from .evaluation import MetricsReport
from .models import EvaluationRecord, TrainingRun

logger = logging.getLogger(__name__)


def _key(path: Union[str, Path]) -> str:
    return str(Path(path).resolve())


def record_training_start(cfg: TrainConfig) -> Optional[TrainingRun]:
    try:
        run, created = TrainingRun.objects.update_or_create(
            output_dir=_key(cfg.output_dir),
            defaults={
                'dataset': cfg.dataset,
                'status': 'running',
                'seed': cfg.seed,
                'epochs_planned': cfg.epochs,
                'config': cfg.model_dump(mode='json'),
                'error': '',
            },
        )
    except DatabaseError as e:
        logger.warning(f"Run registry unavailable, not recording training start: {e}")
        return None
    logger.debug(f"{'Registered' if created else 'Updated'} training run {run.run_id}")
    return run


def record_training_end(cfg: TrainConfig, status: str, epochs_completed: int = 0, steps: int = 0,
                        checkpoint: Optional[Union[str, Path]] = None, error: str = '') -> Optional[TrainingRun]:
    """Store the outcome of a run: 'completed', 'halted' or 'failed'."""
    defaults = {
        'dataset': cfg.dataset,
        'status': status,
        'seed': cfg.seed,
        'epochs_planned': cfg.epochs,
        'epochs_completed': epochs_completed,
        'steps': steps,
        'config': cfg.model_dump(mode='json'),
        'error': error,
    }
    if checkpoint is not None:
        defaults['last_checkpoint'] = _key(checkpoint)
    try:
        run, _ = TrainingRun.objects.update_or_create(output_dir=_key(cfg.output_dir), defaults=defaults)
    except DatabaseError as e:
        logger.warning(f"Run registry unavailable, not recording training end: {e}")
        return None
    return run


def record_evaluation(checkpoint: Union[str, Path], data_path: Union[str, Path],
                      report: MetricsReport) -> Optional[EvaluationRecord]:
    """Upsert the metrics of one checkpoint on one data file, linked to its run when known."""
    try:
        run = TrainingRun.objects.filter(output_dir=_key(Path(checkpoint).parent)).first()
        record, _ = EvaluationRecord.objects.update_or_create(
            checkpoint=_key(checkpoint),
            data_path=_key(data_path),
            defaults={
                'run': run,
                'n_samples': report.n_samples,
                'avg_mse_per_pixel': report.avg_mse_per_pixel,
                'worst_mse_per_pixel': report.worst_mse_per_pixel,
                'angle_mae': report.angle_mae,
                'metrics': report.to_dict(),
            },
        )
    except DatabaseError as e:
        logger.warning(f"Run registry unavailable, not recording evaluation: {e}")
        return None
    return record
