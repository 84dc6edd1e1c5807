# Generated by Django 5.2.7 on 2026-10-18 09:12

import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("scenario_name", models.CharField(max_length=200)),
                ("seed", models.IntegerField()),
                (
                    "created",
                    models.DateTimeField(
                        default=django.utils.timezone.now, verbose_name="date run"
                    ),
                ),
                ("report_path", models.CharField(max_length=500)),
                ("baseline_nmse_db", models.FloatField()),
                ("cascade_nmse_db", models.FloatField()),
                ("shoulder_no_dpd_db", models.FloatField()),
                ("shoulder_with_dpd_db", models.FloatField()),
                ("iterations", models.IntegerField(default=0)),
            ],
            options={
                "ordering": ["-created"],
            },
        ),
        migrations.CreateModel(
            name="RunArtifact",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("kind", models.CharField(max_length=50)),
                ("path", models.CharField(max_length=500)),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="artifacts",
                        to="predistortion.experimentrun",
                    ),
                ),
            ],
        ),
    ]
