from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    scenario_name = models.CharField(max_length=200)
    seed = models.IntegerField()
    created = models.DateTimeField("date run", default=timezone.now)
    report_path = models.CharField(max_length=500)
    baseline_nmse_db = models.FloatField()
    cascade_nmse_db = models.FloatField()
    shoulder_no_dpd_db = models.FloatField()
    shoulder_with_dpd_db = models.FloatField()
    iterations = models.IntegerField(default=0)  # type: ignore[arg-type]

    class Meta:
        ordering = ["-created"]

    def __str__(self):  # type: ignore[arg-type]
        return f"{self.scenario_name} (seed {self.seed})"

    def nmse_improvement_db(self) -> float:
        return self.baseline_nmse_db - self.cascade_nmse_db

    def shoulder_improvement_db(self) -> float:
        return self.shoulder_with_dpd_db - self.shoulder_no_dpd_db


class RunArtifact(models.Model):
    run = models.ForeignKey(
        ExperimentRun, on_delete=models.CASCADE, related_name="artifacts"
    )
    kind = models.CharField(max_length=50)
    path = models.CharField(max_length=500)

    def __str__(self):  # type: ignore[arg-type]
        return self.path
