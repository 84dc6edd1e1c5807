"""
Complex baseband sequences and operators induced from multivariate kernels
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import FileFormatError, SequenceLengthError

logger = logging.getLogger(__name__)

# Excitation used to measure operator gain.
GAIN_EXCITATION_LENGTH = 4096
GAIN_EXCITATION_SEED = 2024

Kernel = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ComplexSequence:
    """
    Finite block of complex baseband samples

    `sample_rate` is metadata only; every computation works in samples.
    """

    samples: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.complex128).ravel()
        if samples.size < 1:
            raise SequenceLengthError("a sequence needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise SequenceLengthError("sequence contains NaN or Inf samples")
        if not self.sample_rate > 0:
            raise SequenceLengthError(
                f"sample rate must be positive, got {self.sample_rate}"
            )
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    def __getitem__(self, item):
        return self.samples[item]

    @property
    def envelope(self) -> np.ndarray:
        return np.abs(self.samples)

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray) -> "ComplexSequence":
        return ComplexSequence(samples, self.sample_rate)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        table = np.column_stack(
            [np.arange(len(self)), self.samples.real, self.samples.imag]
        )
        np.savetxt(
            path,
            table,
            delimiter=",",
            header="index,re,im",
            comments="",
            fmt=["%d", "%.17g", "%.17g"],
        )
        return path

    @classmethod
    def from_csv(
        cls, path: Union[str, Path], sample_rate: float = 1.0
    ) -> "ComplexSequence":
        path = Path(path)
        with path.open() as handle:
            header = handle.readline().strip()
        if header != "index,re,im":
            raise FileFormatError(f"{path}: expected header 'index,re,im'", offset=0)
        try:
            table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as e:
            raise FileFormatError(f"{path}: {e}") from e
        if table.shape[1] != 3:
            raise FileFormatError(f"{path}: expected 3 columns")
        return cls(table[:, 1] + 1j * table[:, 2], sample_rate)

    def to_binary(self, path: Union[str, Path]) -> Path:
        # re0, im0, re1, im1, ... as little-endian float64
        path = Path(path)
        path.write_bytes(self.samples.astype("<c16").tobytes())
        return path

    @classmethod
    def from_binary(
        cls, path: Union[str, Path], sample_rate: float = 1.0
    ) -> "ComplexSequence":
        raw = Path(path).read_bytes()
        if len(raw) % 16:
            raise FileFormatError(
                f"{path}: truncated interleaved capture",
                offset=len(raw) - len(raw) % 16,
            )
        return cls(np.frombuffer(raw, dtype="<c16"), sample_rate)


def tap_matrix(samples: np.ndarray, memory_depth: int) -> np.ndarray:
    """
    Stack the delayed copies needed by a conventional-form operator.

    Row q of the result holds x[n - q] for every output index, so column j
    is (x[j+Q-1], x[j+Q-2], ..., x[j]).
    """
    samples = np.asarray(samples)
    if memory_depth < 1:
        raise SequenceLengthError(f"memory depth must be >= 1, got {memory_depth}")
    if samples.size < memory_depth:
        raise SequenceLengthError(
            f"input of length {samples.size} is shorter than memory depth "
            f"{memory_depth}"
        )
    windows = sliding_window_view(samples, memory_depth)
    return windows[:, ::-1].T


@dataclass(frozen=True)
class InducedOperator:
    """
    Operator induced from a kernel of `memory_depth` complex arguments.

    The kernel is vectorised: it receives the (Q, N-Q+1) tap matrix and
    returns one value per column.
    """

    memory_depth: int
    kernel: Kernel

    def __call__(self, x: ComplexSequence) -> ComplexSequence:
        return apply_induced(self, x)


def apply_induced(spec: InducedOperator, x: ComplexSequence) -> ComplexSequence:
    """Conventional form: output[j] = kernel(x[j+Q-1], ..., x[j])."""
    taps = tap_matrix(x.samples, spec.memory_depth)
    out = np.asarray(spec.kernel(taps), dtype=np.complex128)
    expected = len(x) - spec.memory_depth + 1
    if out.shape != (expected,):
        raise SequenceLengthError(
            f"kernel returned shape {out.shape}, expected ({expected},)"
        )
    return x.with_samples(out)


def unit_modulus_excitation(length: int, seed: int) -> ComplexSequence:
    rng = np.random.default_rng(seed)
    return ComplexSequence(np.exp(2j * np.pi * rng.random(length)))


def measure_gain(
    operator: Callable[[ComplexSequence], ComplexSequence],
    trials: int = 1,
    length: int = GAIN_EXCITATION_LENGTH,
    seed: int = GAIN_EXCITATION_SEED,
) -> float:
    """
    Mean output modulus for constant-modulus, random-phase input.

    Only memoryless operators have exactly constant output modulus on such
    input; for memory models this is the average.
    """
    if trials < 1:
        raise SequenceLengthError(f"trials must be >= 1, got {trials}")
    seeds = np.random.SeedSequence(seed).spawn(trials)
    moduli = []
    for child in seeds:
        excitation = unit_modulus_excitation(length, int(child.generate_state(1)[0]))
        moduli.append(np.abs(operator(excitation).samples))
    gain = float(np.mean(np.concatenate(moduli)))
    logger.debug(f"Measured gain {gain:.6f} over {trials} trial(s)")
    return gain
