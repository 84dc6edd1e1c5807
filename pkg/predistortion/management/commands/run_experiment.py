from django.core.management.base import BaseCommand

from predistortion.experiments import (
    load_experiment_config,
    record_run,
    run_experiment,
)

from ._errors import reported_errors


class Command(BaseCommand):
    help = "Train a predistorter for a scenario config and write its artifacts"

    def add_arguments(self, parser):
        parser.add_argument("config", help="scenario YAML file")
        parser.add_argument("--seed", type=int, help="override waveform and training seeds")
        parser.add_argument("--out", help="override the output directory")
        parser.add_argument(
            "--no-record",
            action="store_true",
            help="do not store the run in the run registry",
        )

    def handle(self, *args, **options):
        with reported_errors(f"run {options['config']}"):
            cfg = load_experiment_config(
                options["config"], seed=options["seed"], out=options["out"]
            )
            report = run_experiment(cfg)
        if not options["no_record"]:
            record_run(report)

        summary = report.summary
        self.stdout.write(
            f"{report.scenario_name}: NMSE {summary['baseline_nmse_db']:.2f} dB -> "
            f"{summary['cascade_nmse_db']:.2f} dB, shoulder "
            f"{summary['shoulder_no_dpd_db']:.2f} dB -> "
            f"{summary['shoulder_with_dpd_db']:.2f} dB"
        )
        self.stdout.write(self.style.SUCCESS(f"Report written to {report.path}"))
