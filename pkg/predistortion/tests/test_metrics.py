import numpy as np
from django.test import SimpleTestCase

from predistortion.exceptions import BandSelectionError, SequenceLengthError, ZeroPowerError
from predistortion.metrics import (
    MIN_ANALYSIS_HALF_WIDTH,
    NMSE_FLOOR_DB,
    SpectrumEstimate,
    adjacent_channel_power_db,
    analysis_bands,
    estimate_lag,
    nmse_db,
    shoulder_level_db,
    welch_psd,
)
from predistortion.operators import ComplexSequence, unit_modulus_excitation
from predistortion.signals import WaveformConfig, generate


def complex_noise(n, seed):
    rng = np.random.default_rng(seed)
    return ComplexSequence(
        (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    )


def synthetic_spectrum(inside_db=0.0, outside_db=-40.0, half_width=0.125):
    freqs = np.linspace(-0.5, 0.5, 1024, endpoint=False)
    psd = np.where(np.abs(freqs) < half_width, inside_db, outside_db)
    return SpectrumEstimate(freqs, psd, 1024, 512, "hann")


class WelchPsdTests(SimpleTestCase):
    def test_tone_peak(self):
        n = np.arange(8192)
        x = ComplexSequence(np.exp(2j * np.pi * 0.125 * n))
        s = welch_psd(x, segment_length=256)
        self.assertAlmostEqual(s.freqs[np.argmax(s.psd_db)], 0.125, delta=1 / 256)

    def test_white_noise_is_flat(self):
        # 256 non-overlapping segments
        s = welch_psd(complex_noise(64 * 256, seed=1), segment_length=64, overlap=0)
        self.assertLess(np.max(np.abs(s.psd_db - np.mean(s.psd_db))), 2.0)

    def test_integrated_power_matches_mean_power(self):
        x = unit_modulus_excitation(16384, seed=2)
        s = welch_psd(x)
        self.assertAlmostEqual(s.integrated_power(), x.mean_power(), delta=0.01)

    def test_delay_does_not_change_spectrum(self):
        x = complex_noise(64 * 256 + 100, seed=3)
        a = welch_psd(ComplexSequence(x.samples[100:]), segment_length=64)
        b = welch_psd(ComplexSequence(x.samples[:-100]), segment_length=64)
        self.assertLess(np.mean(np.abs(a.psd_db - b.psd_db)), 1.0)

    def test_frequency_axis_is_centred(self):
        s = welch_psd(complex_noise(4096, seed=4))
        self.assertEqual(s.freqs.size, 1024)
        self.assertTrue(np.all(np.diff(s.freqs) > 0))
        self.assertAlmostEqual(s.freqs[0], -0.5)

    def test_length_violations(self):
        with self.assertRaises(SequenceLengthError):
            welch_psd(complex_noise(512, seed=5), segment_length=1024)
        with self.assertRaises(SequenceLengthError):
            welch_psd(complex_noise(512, seed=5), segment_length=64, overlap=64)


class NmseTests(SimpleTestCase):
    def test_identical_sequences_hit_floor(self):
        a = complex_noise(1000, seed=1)
        self.assertEqual(nmse_db(a, a), NMSE_FLOOR_DB)
        self.assertEqual(nmse_db(a, a, align=False), NMSE_FLOOR_DB)

    def test_gain_is_compensated(self):
        a = complex_noise(1000, seed=2)
        self.assertEqual(nmse_db(a, a.with_samples(2 * a.samples)), NMSE_FLOOR_DB)

    def test_delay_is_compensated(self):
        a = complex_noise(1000, seed=3)
        b = ComplexSequence(a.samples[7:])
        self.assertEqual(estimate_lag(a.samples, b.samples), 7)
        self.assertLess(nmse_db(a, b), -200)

    def test_independent_noise_is_near_zero_db(self):
        a, b = complex_noise(20000, seed=4), complex_noise(20000, seed=5)
        self.assertAlmostEqual(nmse_db(a, b), 0.0, delta=1.0)

    def test_aligned_figure_is_symmetric(self):
        a = complex_noise(4000, seed=6)
        b = a.with_samples(0.7 * a.samples + 0.1 * complex_noise(4000, seed=7).samples)
        self.assertAlmostEqual(nmse_db(a, b), nmse_db(b, a), delta=1e-9)

    def test_unaligned_asymmetry(self):
        a = complex_noise(4000, seed=8)
        b = a.with_samples(2 * a.samples + complex_noise(4000, seed=9).samples)
        shift = 10 * np.log10(np.sum(np.abs(a.samples) ** 2) / np.sum(np.abs(b.samples) ** 2))
        self.assertAlmostEqual(
            nmse_db(b, a, align=False) - nmse_db(a, b, align=False), shift, delta=1e-9
        )

    def test_zero_reference(self):
        with self.assertRaises(ZeroPowerError):
            nmse_db(ComplexSequence(np.zeros(8)), complex_noise(8, seed=1), align=False)

    def test_unaligned_needs_equal_lengths(self):
        with self.assertRaises(SequenceLengthError):
            nmse_db(complex_noise(8, seed=1), complex_noise(9, seed=1), align=False)


class ShoulderTests(SimpleTestCase):
    def test_flat_spectrum(self):
        s = synthetic_spectrum(0.0, 0.0)
        self.assertAlmostEqual(shoulder_level_db(s, (-0.1, 0.1), (0.2, 0.3)), 0.0)

    def test_forty_db_shoulder(self):
        s = synthetic_spectrum()
        self.assertAlmostEqual(shoulder_level_db(s, (-0.1, 0.1), (0.15, 0.3)), 40.0)

    def test_offset_invariance(self):
        s = synthetic_spectrum()
        lifted = SpectrumEstimate(s.freqs, s.psd_db + 7.5, 1024, 512, "hann")
        self.assertAlmostEqual(
            shoulder_level_db(lifted, (-0.1, 0.1), (-0.3, -0.15)),
            shoulder_level_db(s, (-0.1, 0.1), (-0.3, -0.15)),
        )

    def test_invalid_bands(self):
        s = synthetic_spectrum()
        with self.assertRaises(BandSelectionError):
            shoulder_level_db(s, (-0.1, 0.1), (0.05, 0.3))
        with self.assertRaises(BandSelectionError):
            shoulder_level_db(s, (-0.1, 0.1), (0.3, 0.6))
        with self.assertRaises(BandSelectionError):
            shoulder_level_db(s, (-0.1, 0.1), (0.2002, 0.2005))

    def test_adjacent_channel_power(self):
        s = synthetic_spectrum()
        # equal widths, so the integrated ratio equals the mean ratio
        self.assertAlmostEqual(adjacent_channel_power_db(s, (-0.1, 0.1), (0.2, 0.4)), 40.0)

    def test_analysis_bands(self):
        in_band, lower, upper = analysis_bands((-0.125, 0.125))
        self.assertEqual(in_band, (-0.1, 0.1))
        self.assertAlmostEqual(lower[0], -0.275)
        self.assertAlmostEqual(upper[1], 0.275)
        clipped = analysis_bands((-0.4, 0.4))
        self.assertEqual(clipped[1][0], -0.5)

    def test_single_tone_gets_usable_bands(self):
        cfg = WaveformConfig(kind="tones", tone_frequencies=(0.1,), num_samples=8192)
        in_band, lower, upper = analysis_bands(cfg.occupied_band)
        self.assertAlmostEqual(in_band[1] - in_band[0], 1.6 * MIN_ANALYSIS_HALF_WIDTH)
        self.assertLess(in_band[0], 0.1)
        self.assertGreater(in_band[1], 0.1)
        s = welch_psd(generate(cfg), 1024)
        self.assertGreater(shoulder_level_db(s, in_band, lower), 40)
        self.assertGreater(shoulder_level_db(s, in_band, upper), 40)
