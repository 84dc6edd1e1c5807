from django.conf import settings
from django.core.management.base import BaseCommand

from predistortion.experiments import export_lut_file

from ._errors import reported_errors


class Command(BaseCommand):
    help = "Export every entry of a saved predistorter as an L-entry LUT"

    def add_arguments(self, parser):
        parser.add_argument("predistorter", help="saved .dpd file")
        parser.add_argument("size", nargs="?", type=int, default=settings.DPD_LUT_SIZE)
        parser.add_argument("--out", help="output directory")

    def handle(self, *args, **options):
        with reported_errors(f"export {options['predistorter']}"):
            written = export_lut_file(
                options["predistorter"], options["size"], out=options["out"]
            )
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(written)} LUT files"))
