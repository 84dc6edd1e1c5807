import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from predistortion.exceptions import (
    DomainError,
    FileFormatError,
    NormalizationError,
    StructureError,
)
from predistortion.hpa import (
    DEFAULT_COEFFICIENT_FILE,
    HpaKind,
    HpaModel,
    RappCurve,
    empty_grid,
    load_coefficients,
    normalize_unit_gain,
    write_coefficients,
)
from predistortion.operators import ComplexSequence, measure_gain

from .helpers import naive_memory_polynomial, random_sequence


def linear_grid(c10=1.0, c30=0.0):
    grid = empty_grid()
    grid[0, 0] = c10
    grid[1, 0] = c30
    return grid


class ApplyHpaTests(SimpleTestCase):
    def test_identity_echoes_input(self):
        x = random_sequence(10)
        np.testing.assert_array_equal(HpaModel.identity()(x).samples, x.samples)

    def test_linear_memoryless_term_only(self):
        x = random_sequence(10, seed=1)
        y = HpaModel.memory_polynomial(linear_grid())(x)
        np.testing.assert_allclose(y.samples, x.samples[2:])

    def test_constant_input_through_cubic_term(self):
        y = HpaModel.memory_polynomial(linear_grid(1.0, 0.1))(ComplexSequence(np.full(6, 0.5)))
        np.testing.assert_allclose(y.samples, np.full(4, 0.5125))

    def test_cross_term_on_constant_input(self):
        model = HpaModel.memory_polynomial(linear_grid(), cross_gain=0.5)
        self.assertIs(model.kind, HpaKind.MEMORY_POLYNOMIAL_CROSS)
        y = model(ComplexSequence(np.ones(5)))
        np.testing.assert_allclose(y.samples, np.full(3, 1.5))

    def test_cross_model_adds_exactly_the_cross_term(self):
        grid = load_coefficients(DEFAULT_COEFFICIENT_FILE)
        s = random_sequence(200, seed=2).samples
        plain = HpaModel.memory_polynomial(grid)(ComplexSequence(s)).samples
        cross = HpaModel.memory_polynomial(grid, cross_gain=0.5)(ComplexSequence(s)).samples
        term = 0.5 * s[:-2] * np.abs(s[1:-1]) * np.abs(s[2:])
        np.testing.assert_allclose(cross - plain, term, rtol=0, atol=1e-12)

    def test_matches_direct_memory_polynomial(self):
        grid = load_coefficients(DEFAULT_COEFFICIENT_FILE)
        s = random_sequence(64, seed=3).samples
        y = HpaModel.memory_polynomial(grid)(ComplexSequence(s))
        np.testing.assert_allclose(y.samples, naive_memory_polynomial(grid, s), atol=1e-12)

    def test_memory_kinds_need_three_samples(self):
        from predistortion.exceptions import SequenceLengthError

        with self.assertRaises(SequenceLengthError):
            HpaModel.memory_polynomial(linear_grid())(ComplexSequence([1, 2]))

    def test_memory_kinds_need_full_grid(self):
        with self.assertRaises(StructureError):
            HpaModel.memory_polynomial(np.ones((2, 3)))

    def test_static_model_preserves_phase(self):
        curve = RappCurve(gain=1.0, saturation=2.0, smoothness=1.0)
        z = random_sequence(50, seed=4)
        y = HpaModel.static(curve)(z)
        np.testing.assert_allclose(np.abs(y.samples), curve(z.envelope), atol=1e-15)
        np.testing.assert_allclose(
            np.angle(y.samples[z.envelope > 0]), np.angle(z.samples[z.envelope > 0])
        )
        self.assertEqual(HpaModel.static(curve)(ComplexSequence([0.0]))[0], 0)


class RappCurveTests(SimpleTestCase):
    def test_strictly_increasing_on_unit_interval(self):
        r = np.linspace(0, 1, 1001)
        self.assertTrue(np.all(np.diff(RappCurve()(r)) > 0))

    def test_inverse(self):
        curve = RappCurve(gain=1.2, saturation=1.5, smoothness=2.0)
        r = np.linspace(0, 1, 21)
        np.testing.assert_allclose(curve.inverse(curve(r)), r, atol=1e-12)

    def test_inverse_beyond_saturation(self):
        with self.assertRaises(DomainError):
            RappCurve(saturation=1.0).inverse([1.0])

    def test_positive_parameters(self):
        with self.assertRaises(DomainError):
            RappCurve(smoothness=0)


class NormalizeUnitGainTests(SimpleTestCase):
    def test_identity_keeps_scale_one(self):
        model = normalize_unit_gain(HpaModel.identity())
        self.assertAlmostEqual(model.unit_gain_scale, 1.0, delta=1e-12)

    def test_pure_gain_two(self):
        model = normalize_unit_gain(HpaModel.memory_polynomial(linear_grid(2.0)))
        self.assertAlmostEqual(model.unit_gain_scale, 0.5, delta=1e-12)
        self.assertAlmostEqual(measure_gain(model), 1.0, delta=1e-3)

    def test_shipped_coefficients(self):
        model = HpaModel.memory_polynomial(load_coefficients(DEFAULT_COEFFICIENT_FILE))
        gain = measure_gain(model)
        normalized = normalize_unit_gain(model)
        self.assertAlmostEqual(normalized.unit_gain_scale, 1.0 / gain, delta=1e-12)
        self.assertAlmostEqual(measure_gain(normalized), 1.0, delta=1e-3)

    def test_static_inverse_envelope_includes_scale(self):
        model = normalize_unit_gain(HpaModel.static(RappCurve()))
        u = np.array([0.1, 0.5, 0.9])
        r = model.inverse_envelope(u)
        y = model(ComplexSequence(r))
        np.testing.assert_allclose(np.abs(y.samples), u, atol=1e-12)

    def test_zero_gain(self):
        with self.assertRaises(NormalizationError):
            normalize_unit_gain(HpaModel.memory_polynomial(empty_grid()))


class CoefficientFileTests(SimpleTestCase):
    def write(self, text):
        handle = tempfile.NamedTemporaryFile("w", suffix=".coeffs", delete=False)
        handle.write(text)
        handle.close()
        self.addCleanup(Path(handle.name).unlink)
        return handle.name

    def full_text(self, **overrides):
        lines = ["# test grid"]
        for k in (1, 3, 5):
            for q in range(3):
                name = f"c_{k}{q}"
                lines.append(f"{name} = {overrides.get(name, '0.0,0.0')}")
        return "\n".join(lines) + "\n"

    def test_shipped_grid(self):
        grid = load_coefficients(DEFAULT_COEFFICIENT_FILE)
        self.assertEqual(grid[0, 0], 1.0513 + 0.0904j)
        self.assertEqual(grid[2, 2], 0.1229 + 0.1508j)
        self.assertIn("Ding", DEFAULT_COEFFICIENT_FILE.read_text())

    def test_linear_only_file_gives_identity_like_model(self):
        grid = load_coefficients(self.write(self.full_text(c_10="1.0,0.0")))
        x = random_sequence(12, seed=5)
        np.testing.assert_allclose(HpaModel.memory_polynomial(grid)(x).samples, x.samples[2:])

    def test_malformed_literal_names_entry(self):
        path = self.write(self.full_text(c_31="0.1;0.2"))
        with self.assertRaises(FileFormatError) as ctx:
            load_coefficients(path)
        self.assertEqual(ctx.exception.entry, "c_31")
        self.assertIn("c_31", str(ctx.exception))
        self.assertIsNotNone(ctx.exception.offset)

    def test_missing_and_extra_entries(self):
        text = self.full_text()
        with self.assertRaises(FileFormatError):
            load_coefficients(self.write(text.replace("c_52 = 0.0,0.0\n", "")))
        with self.assertRaises(FileFormatError):
            load_coefficients(self.write(text + "c_70 = 1.0,0.0\n"))
        with self.assertRaises(FileFormatError):
            load_coefficients(self.write(text + "c_10 = 1.0,0.0\n"))

    def test_write_read_round_trip(self):
        rng = np.random.default_rng(6)
        grid = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        with tempfile.TemporaryDirectory() as tmp:
            copy = load_coefficients(write_coefficients(grid, Path(tmp) / "g.coeffs"))
        np.testing.assert_array_equal(copy, grid)


def every_model():
    grid = load_coefficients(DEFAULT_COEFFICIENT_FILE)
    return {
        "identity": HpaModel.identity(),
        "memory_polynomial": normalize_unit_gain(HpaModel.memory_polynomial(grid)),
        "memory_polynomial_cross": normalize_unit_gain(
            HpaModel.memory_polynomial(grid, cross_gain=0.5 - 0.25j)
        ),
        "static_nonlinearity": normalize_unit_gain(HpaModel.static(RappCurve())),
    }


class PhaseEquivarianceTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.models = every_model()

    def test_every_kind_is_covered(self):
        self.assertEqual(set(self.models), {kind.value for kind in HpaKind})

    @settings(max_examples=25, deadline=None)
    @given(
        theta=st.floats(-np.pi, np.pi, allow_nan=False),
        seed=st.integers(0, 2**32 - 1),
        length=st.integers(3, 64),
    )
    def test_rotating_input_rotates_output(self, theta, seed, length):
        z = random_sequence(length, seed)
        rotation = np.exp(1j * theta)
        rotated = ComplexSequence(rotation * z.samples)
        for name, model in self.models.items():
            with self.subTest(kind=name):
                np.testing.assert_allclose(
                    model(rotated).samples,
                    rotation * model(z).samples,
                    rtol=1e-12,
                    atol=1e-14,
                )
