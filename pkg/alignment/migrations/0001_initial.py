# Generated by Django 5.2.7 on 2026-10-17 09:12

import django.db.models.deletion
import django.utils.timezone
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('run_id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('output_dir', models.CharField(max_length=500, unique=True)),
                ('dataset', models.CharField(choices=[('rotated-mnist', 'Rotated MNIST'), ('synth-5hdb', 'Synthetic projections')], max_length=20)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('halted', 'Halted (non-finite losses)'), ('failed', 'Failed')], default='running', max_length=20)),
                ('seed', models.IntegerField(default=0)),
                ('epochs_planned', models.PositiveIntegerField()),
                ('epochs_completed', models.PositiveIntegerField(default=0)),
                ('steps', models.PositiveIntegerField(default=0)),
                ('config', models.JSONField(default=dict)),
                ('last_checkpoint', models.CharField(blank=True, max_length=500)),
                ('error', models.TextField(blank=True)),
                ('started_at', models.DateTimeField(default=django.utils.timezone.now)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-started_at'],
            },
        ),
        migrations.CreateModel(
            name='EvaluationRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('checkpoint', models.CharField(max_length=500)),
                ('data_path', models.CharField(max_length=500)),
                ('n_samples', models.PositiveIntegerField()),
                ('avg_mse_per_pixel', models.FloatField()),
                ('worst_mse_per_pixel', models.FloatField()),
                ('angle_mae', models.FloatField()),
                ('metrics', models.JSONField(default=dict, help_text='Full metrics report as written to metrics.json')),
                ('evaluated_at', models.DateTimeField(auto_now=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='evaluations', to='alignment.trainingrun')),
            ],
            options={
                'ordering': ['-evaluated_at'],
                'unique_together': {('checkpoint', 'data_path')},
            },
        ),
    ]
