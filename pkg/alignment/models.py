import uuid
from django.db import models
from django.utils import timezone


class TrainingRun(models.Model):
    """
    One training run, keyed by its output directory. Re-running into the
    same directory updates the row instead of adding another.
    """
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('halted', 'Halted (non-finite losses)'),
        ('failed', 'Failed'),
    ]

    DATASET_CHOICES = [
        ('rotated-mnist', 'Rotated MNIST'),
        ('synth-5hdb', 'Synthetic projections'),
    ]

    run_id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    output_dir = models.CharField(max_length=500, unique=True)
    dataset = models.CharField(max_length=20, choices=DATASET_CHOICES)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')
    seed = models.IntegerField(default=0)
    epochs_planned = models.PositiveIntegerField()
    epochs_completed = models.PositiveIntegerField(default=0)
    steps = models.PositiveIntegerField(default=0)
    config = models.JSONField(default=dict)
    last_checkpoint = models.CharField(max_length=500, blank=True)
    error = models.TextField(blank=True)
    started_at = models.DateTimeField(default=timezone.now)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-started_at']

    def __str__(self):
        return f"{self.dataset} run in {self.output_dir} ({self.status}, {self.epochs_completed}/{self.epochs_planned} epochs)"


class EvaluationRecord(models.Model):
    run = models.ForeignKey(TrainingRun, on_delete=models.SET_NULL, blank=True, null=True, related_name='evaluations')
    checkpoint = models.CharField(max_length=500)
    data_path = models.CharField(max_length=500)
    n_samples = models.PositiveIntegerField()
    avg_mse_per_pixel = models.FloatField()
    worst_mse_per_pixel = models.FloatField()
    angle_mae = models.FloatField()
    metrics = models.JSONField(default=dict, help_text="Full metrics report as written to metrics.json")
    evaluated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-evaluated_at']
        unique_together = ['checkpoint', 'data_path']

    def __str__(self):
        return f"{self.checkpoint} on {self.data_path}: avg MSE {self.avg_mse_per_pixel:.5f}"
