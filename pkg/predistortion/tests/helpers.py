"""
Shared fixtures and naive reference evaluators for the test suite
"""

import numpy as np

from predistortion.basis import build_basis, eval_function
from predistortion.operators import ComplexSequence
from predistortion.signals import DensityTable, WaveformConfig


def random_samples(n, seed=0, peak=0.9):
    rng = np.random.default_rng(seed)
    r = peak * rng.random(n)
    return r * np.exp(2j * np.pi * rng.random(n))


def random_sequence(n, seed=0, peak=0.9):
    return ComplexSequence(random_samples(n, seed, peak))


def uniform_basis(degree_count=5, bins=256):
    return build_basis(DensityTable.uniform(bins), degree_count)


def small_waveform(**overrides):
    params = dict(num_subcarriers=64, num_samples=4096, seed=3)
    params.update(overrides)
    return WaveformConfig(**params)


def random_coefficients(rows, depth, degree_count, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    shape = (rows, depth, degree_count)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def naive_separable(pd, x):
    """Scalar, index-by-index evaluation of a predistorter matrix."""
    samples = np.asarray(x)
    out = []
    for n in range(pd.Q - 1, samples.size):
        total = 0j
        for k, row in enumerate(pd.entries):
            values = [
                eval_function(entry, pd.basis, abs(samples[n - q]))
                for q, entry in enumerate(row)
            ]
            combined = np.prod(values) if pd.structure.is_multiplicative else sum(values)
            total += pd.scales[k] * samples[n - pd.tap_index[k] + 1] * combined
        out.append(total)
    return np.array(out)


def naive_memory_polynomial(coeffs, x):
    """sum_k sum_q c_kq x[n-q] |x[n-q]|^(k-1) with k over 1, 3, 5."""
    samples = np.asarray(x)
    out = []
    for n in range(2, samples.size):
        total = 0j
        for i, k in enumerate((1, 3, 5)):
            for q in range(3):
                total += coeffs[i, q] * samples[n - q] * abs(samples[n - q]) ** (k - 1)
        out.append(total)
    return np.array(out)


def max_relative_error(actual, expected):
    """Largest deviation relative to the largest reference magnitude."""
    expected = np.asarray(expected)
    return np.max(np.abs(np.asarray(actual) - expected)) / np.max(np.abs(expected))
