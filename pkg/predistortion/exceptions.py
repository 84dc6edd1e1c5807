"""
Exception hierarchy for predistortion computations and experiment plumbing
"""

from typing import Optional


class DpdError(Exception):
    """Base class; `category` is the machine-readable error kind."""

    category = "dpd"


class SequenceLengthError(DpdError):
    category = "length"


class DomainError(DpdError):
    category = "domain"


class BasisRankError(DpdError):
    category = "rank"

    def __init__(self, message: str, moment_index: int):
        super().__init__(message)
        self.moment_index = moment_index


class NormalizationError(DpdError):
    category = "normalization"


class StructureError(DpdError):
    category = "structure"


class FileFormatError(DpdError):
    category = "parse"

    def __init__(
        self,
        message: str,
        offset: Optional[int] = None,
        entry: Optional[str] = None,
    ):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
        self.entry = entry


class VersionMismatchError(FileFormatError):
    category = "version"


class ConfigurationError(DpdError):
    category = "config"


class ZeroPowerError(DpdError):
    category = "zero-power"


class BandSelectionError(DpdError):
    category = "band"


# Exit codes used by the management commands, one per category.
EXIT_CODES = {
    "dpd": 1,
    "length": 3,
    "domain": 4,
    "rank": 5,
    "normalization": 6,
    "structure": 7,
    "parse": 8,
    "version": 9,
    "config": 10,
    "zero-power": 11,
    "band": 12,
}
