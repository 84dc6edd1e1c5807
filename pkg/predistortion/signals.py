"""
Baseband test waveforms and envelope statistics
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np
from scipy import signal

from .exceptions import ConfigurationError, DomainError, ZeroPowerError
from .operators import ComplexSequence

logger = logging.getLogger(__name__)

DEFAULT_HISTOGRAM_BINS = 256


class WaveformKind(str, Enum):
    MULTICARRIER_OFDM = "multicarrier_ofdm"
    FILTERED_QAM = "filtered_qam"
    TONES = "tones"


class Modulation(str, Enum):
    QPSK = "qpsk"
    QAM16 = "qam16"


@dataclass(frozen=True)
class WaveformConfig:
    kind: WaveformKind = WaveformKind.MULTICARRIER_OFDM
    num_subcarriers: int = 1024
    modulation: Modulation = Modulation.QAM16
    oversampling: int = 4
    num_samples: int = 25600
    peak_normalization: float = 0.95
    seed: int = 0
    # cycles/sample, only used by the tones kind
    tone_frequencies: Tuple[float, ...] = field(default=(0.0,))
    sample_rate: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", WaveformKind(self.kind))
            object.__setattr__(self, "modulation", Modulation(self.modulation))
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        object.__setattr__(
            self, "tone_frequencies", tuple(float(f) for f in self.tone_frequencies)
        )
        for name in ("num_subcarriers", "oversampling", "num_samples"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not 0 < self.peak_normalization <= 1:
            raise ConfigurationError("peak_normalization must lie in (0, 1]")
        if self.kind is WaveformKind.TONES:
            if not self.tone_frequencies:
                raise ConfigurationError("tones waveform needs tone_frequencies")
            if any(not -0.5 <= f < 0.5 for f in self.tone_frequencies):
                raise ConfigurationError("tone frequencies must lie in [-0.5, 0.5)")
        if self.kind is WaveformKind.FILTERED_QAM and self.oversampling < 2:
            raise ConfigurationError("filtered_qam needs oversampling >= 2")

    @property
    def occupied_band(self) -> Tuple[float, float]:
        """Nominal signal band in cycles/sample."""
        if self.kind is WaveformKind.TONES:
            return min(self.tone_frequencies), max(self.tone_frequencies)
        half = 0.5 / self.oversampling
        return -half, half


def constellation(modulation: Modulation) -> np.ndarray:
    """Unit average power constellation points."""
    if modulation is Modulation.QPSK:
        levels = np.array([-1.0, 1.0])
    else:
        levels = np.array([-3.0, -1.0, 1.0, 3.0])
    points = (levels[:, None] + 1j * levels[None, :]).ravel()
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


def _random_symbols(rng: np.random.Generator, cfg: WaveformConfig, shape):
    points = constellation(cfg.modulation)
    return points[rng.integers(0, points.size, size=shape)]


def _multicarrier(rng: np.random.Generator, cfg: WaveformConfig) -> np.ndarray:
    n_fft = cfg.num_subcarriers * cfg.oversampling
    n_symbols = -(-cfg.num_samples // n_fft)
    data = _random_symbols(rng, cfg, (n_symbols, cfg.num_subcarriers))
    # Occupied subcarriers around DC, the rest of the grid is oversampling.
    negative = cfg.num_subcarriers // 2
    positive = cfg.num_subcarriers - negative
    grid = np.zeros((n_symbols, n_fft), dtype=np.complex128)
    grid[:, :positive] = data[:, negative:]
    if negative:
        grid[:, -negative:] = data[:, :negative]
    time = np.fft.ifft(grid, axis=1) * np.sqrt(n_fft)
    return time.ravel()[: cfg.num_samples]


def _filtered_qam(rng: np.random.Generator, cfg: WaveformConfig) -> np.ndarray:
    taps = signal.firwin(16 * cfg.oversampling + 1, 1.0 / cfg.oversampling)
    n_symbols = -(-(cfg.num_samples + taps.size) // cfg.oversampling) + 1
    symbols = _random_symbols(rng, cfg, n_symbols)
    shaped = signal.upfirdn(taps, symbols, up=cfg.oversampling)
    start = taps.size // 2
    return shaped[start : start + cfg.num_samples]


def _tones(rng: np.random.Generator, cfg: WaveformConfig) -> np.ndarray:
    n = np.arange(cfg.num_samples)
    phases = 2 * np.pi * rng.random(len(cfg.tone_frequencies))
    return sum(
        np.exp(1j * (2 * np.pi * f * n + phase))
        for f, phase in zip(cfg.tone_frequencies, phases)
    )


_GENERATORS = {
    WaveformKind.MULTICARRIER_OFDM: _multicarrier,
    WaveformKind.FILTERED_QAM: _filtered_qam,
    WaveformKind.TONES: _tones,
}


def generate(cfg: WaveformConfig) -> ComplexSequence:
    """
    Generate a deterministic waveform for `cfg`, peak-normalised so that every
    envelope lies inside the basis domain [0, 1].
    """
    rng = np.random.default_rng(cfg.seed)
    samples = np.asarray(_GENERATORS[cfg.kind](rng, cfg), dtype=np.complex128)
    peak = np.max(np.abs(samples))
    if peak == 0:
        raise ZeroPowerError(f"{cfg.kind.value} waveform has zero power")
    samples = samples * (cfg.peak_normalization / peak)
    logger.debug(
        f"Generated {cfg.kind.value} waveform: {samples.size} samples, "
        f"mean power {np.mean(np.abs(samples) ** 2):.4g}"
    )
    return ComplexSequence(samples, cfg.sample_rate)


@dataclass(frozen=True, eq=False)
class DensityTable:
    """Piecewise-constant envelope density over [0, 1]."""

    centers: np.ndarray
    density: np.ndarray
    bin_width: float

    @property
    def bins(self) -> int:
        return self.centers.size

    @classmethod
    def uniform(cls, bins: int = DEFAULT_HISTOGRAM_BINS) -> "DensityTable":
        width = 1.0 / bins
        centers = (np.arange(bins) + 0.5) * width
        return cls(centers, np.ones(bins), width)

    def total_mass(self) -> float:
        return float(np.sum(self.density) * self.bin_width)


def envelope_histogram(
    x: ComplexSequence, bins: int = DEFAULT_HISTOGRAM_BINS
) -> DensityTable:
    """Histogram estimate of the envelope density on [0, 1]."""
    if bins < 2:
        raise ConfigurationError(f"histogram needs at least 2 bins, got {bins}")
    envelope = x.envelope
    if np.max(envelope) > 1.0:
        raise DomainError(
            f"envelope {np.max(envelope):.6g} exceeds the density domain [0, 1]"
        )
    counts, edges = np.histogram(envelope, bins=bins, range=(0.0, 1.0))
    width = 1.0 / bins
    centers = 0.5 * (edges[:-1] + edges[1:])
    density = counts / (envelope.size * width)
    return DensityTable(centers, density, width)
