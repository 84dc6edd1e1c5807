import logging
from contextlib import contextmanager

from django.core.management.base import CommandError

from predistortion.exceptions import EXIT_CODES, DpdError

logger = logging.getLogger("predistortion.commands")


@contextmanager
def reported_errors(action: str):
    """Turn library errors into a categorised CommandError with its exit code."""
    try:
        yield
    except DpdError as e:
        logger.error(f"{action} failed: {e}")
        raise CommandError(
            f"error[{e.category}]: {e}", returncode=EXIT_CODES[e.category]
        ) from e
