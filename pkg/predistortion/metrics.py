"""
Spectral and time-domain figures of merit
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy import signal

from .exceptions import BandSelectionError, SequenceLengthError, ZeroPowerError
from .operators import ComplexSequence

logger = logging.getLogger(__name__)

NMSE_FLOOR_DB = -300.0
DEFAULT_SEGMENT_LENGTH = 1024
# narrowest half-width handed out by analysis_bands, for single-tone inputs
MIN_ANALYSIS_HALF_WIDTH = 1.0 / 64

Band = Tuple[float, float]


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    """Two-sided relative PSD over normalised frequency [-0.5, 0.5)."""

    freqs: np.ndarray
    psd_db: np.ndarray
    segment_length: int
    overlap: int
    window: str

    def linear(self) -> np.ndarray:
        return 10.0 ** (self.psd_db / 10.0)

    def integrated_power(self) -> float:
        return float(np.sum(self.linear()) / self.segment_length)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        np.savetxt(
            path,
            np.column_stack([self.freqs, self.psd_db]),
            delimiter=",",
            header="freq,psd_db",
            comments="",
            fmt="%.17g",
        )
        return path


def welch_psd(
    x: ComplexSequence,
    segment_length: int = DEFAULT_SEGMENT_LENGTH,
    overlap: int = None,
    window: str = "hann",
) -> SpectrumEstimate:
    """Averaged windowed periodogram, window power compensated."""
    if overlap is None:
        overlap = segment_length // 2
    if segment_length < 8 or len(x) < segment_length:
        raise SequenceLengthError(
            f"need 8 <= segment length ({segment_length}) <= signal length ({len(x)})"
        )
    if not 0 <= overlap < segment_length:
        raise SequenceLengthError(f"overlap {overlap} must lie in [0, segment length)")
    freqs, psd = signal.welch(
        x.samples,
        fs=1.0,
        window=window,
        nperseg=segment_length,
        noverlap=overlap,
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    freqs, psd = np.fft.fftshift(freqs), np.fft.fftshift(psd)
    psd_db = 10.0 * np.log10(np.maximum(psd, np.finfo(float).tiny))
    return SpectrumEstimate(freqs, psd_db, segment_length, overlap, window)


def estimate_lag(a: np.ndarray, b: np.ndarray) -> int:
    """Integer d maximising |sum_n a[n + d] conj(b[n])|."""
    corr = signal.correlate(a, b, mode="full", method="fft")
    lags = signal.correlation_lags(len(a), len(b), mode="full")
    return int(lags[np.argmax(np.abs(corr))])


def aligned_segments(
    a: np.ndarray, b: np.ndarray, lag: int
) -> Tuple[np.ndarray, np.ndarray]:
    a_start, b_start = max(lag, 0), max(-lag, 0)
    length = min(len(a) - a_start, len(b) - b_start)
    if length < 1:
        raise SequenceLengthError(f"sequences do not overlap at lag {lag}")
    return a[a_start : a_start + length], b[b_start : b_start + length]


def nmse_db(a: ComplexSequence, b: ComplexSequence, align: bool = True) -> float:
    """
    10 log10(sum|a - gamma b|^2 / sum|a|^2) with `a` the reference.

    With `align` the integer lag comes from cross-correlation and gamma is
    the least-squares complex gain, which makes the figure symmetric in a
    and b. Without it gamma = 1, lengths must match, and swapping the
    arguments shifts the result by exactly 10 log10(sum|a|^2 / sum|b|^2).
    """
    a_samples, b_samples = np.asarray(a.samples), np.asarray(b.samples)
    if align:
        lag = estimate_lag(a_samples, b_samples)
        a_samples, b_samples = aligned_segments(a_samples, b_samples, lag)
        b_power = np.vdot(b_samples, b_samples).real
        gamma = np.vdot(b_samples, a_samples) / b_power if b_power > 0 else 0.0
    else:
        if len(a_samples) != len(b_samples):
            raise SequenceLengthError(
                f"unaligned comparison needs equal lengths, got {len(a_samples)} "
                f"and {len(b_samples)}"
            )
        gamma = 1.0
    reference = np.vdot(a_samples, a_samples).real
    if reference == 0:
        raise ZeroPowerError("NMSE reference has zero power")
    error = np.sum(np.abs(a_samples - gamma * b_samples) ** 2)
    ratio = error / reference
    if ratio <= 10 ** (NMSE_FLOOR_DB / 10):
        return NMSE_FLOOR_DB
    return float(10.0 * np.log10(ratio))


def _band_mask(s: SpectrumEstimate, band: Band) -> np.ndarray:
    lo, hi = band
    if not -0.5 <= lo < hi <= 0.5:
        raise BandSelectionError(f"band {band} outside spectrum support [-0.5, 0.5]")
    mask = (s.freqs >= lo) & (s.freqs <= hi)
    if not np.any(mask):
        raise BandSelectionError(f"band {band} selects no frequency bins")
    return mask


def _check_disjoint(first: Band, second: Band):
    if max(first[0], second[0]) < min(first[1], second[1]):
        raise BandSelectionError(f"bands {first} and {second} overlap")


def shoulder_level_db(s: SpectrumEstimate, in_band: Band, offset_band: Band) -> float:
    """Mean in-band PSD over mean offset-band PSD, in dB."""
    _check_disjoint(in_band, offset_band)
    power = s.linear()
    inside = np.mean(power[_band_mask(s, in_band)])
    outside = np.mean(power[_band_mask(s, offset_band)])
    return float(10.0 * np.log10(inside / outside))


def adjacent_channel_power_db(
    s: SpectrumEstimate, main_band: Band, adjacent_band: Band
) -> float:
    """Integrated main-channel power over integrated adjacent-channel power."""
    _check_disjoint(main_band, adjacent_band)
    power = s.linear()
    main = np.sum(power[_band_mask(s, main_band)])
    adjacent = np.sum(power[_band_mask(s, adjacent_band)])
    return float(10.0 * np.log10(main / adjacent))


def analysis_bands(occupied: Band) -> Tuple[Band, Band, Band]:
    """
    In-band window and the lower/upper shoulder windows for a signal
    occupying `occupied`, clipped to the spectrum support. Bands narrower
    than 2 * MIN_ANALYSIS_HALF_WIDTH are widened around their centre.
    """
    lo, hi = occupied
    centre = 0.5 * (lo + hi)
    half = max(0.5 * (hi - lo), MIN_ANALYSIS_HALF_WIDTH)
    in_band = (centre - 0.8 * half, centre + 0.8 * half)
    lower = (max(centre - 2.2 * half, -0.5), centre - 1.2 * half)
    upper = (centre + 1.2 * half, min(centre + 2.2 * half, 0.5))
    return in_band, lower, upper
