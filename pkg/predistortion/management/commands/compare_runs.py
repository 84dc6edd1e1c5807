from django.core.management.base import BaseCommand

from predistortion.experiments import compare_runs

from ._errors import reported_errors


class Command(BaseCommand):
    help = "Compare the summary metrics of two run reports"

    def add_arguments(self, parser):
        parser.add_argument("report_a", help="report.yaml or run directory")
        parser.add_argument("report_b", help="report.yaml or run directory")
        parser.add_argument("--out", help="write <out>.csv and <out>.txt")

    def handle(self, *args, **options):
        with reported_errors("compare"):
            comparison = compare_runs(options["report_a"], options["report_b"])
        self.stdout.write(comparison.to_text(), ending="")
        if options["out"]:
            for path in comparison.write(options["out"]):
                self.stdout.write(f"Wrote {path}")
