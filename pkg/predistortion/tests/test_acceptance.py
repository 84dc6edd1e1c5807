"""
Full-size scenario runs. Slow; skip them with
    python manage.py test --exclude-tag acceptance
"""

import shutil
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from predistortion.basis import build_basis
from predistortion.experiments import load_experiment_config, run_experiment
from predistortion.metrics import estimate_lag
from predistortion.predistorter import load
from predistortion.signals import envelope_histogram, generate
from predistortion.training import (
    TrainingConfig,
    cascade_output,
    fit_multiplicative_als,
    fit_multiplicative_scg,
)

SCENARIOS = Path(__file__).resolve().parents[2] / "scenarios"


@tag("acceptance")
class ScenarioAcceptanceTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = Path(tempfile.mkdtemp())
        cls.configs, cls.reports = {}, {}
        for name in (
            "identity",
            "memory_poly_diagonal",
            "cross_term_diagonal",
            "cross_term_additive",
        ):
            cfg = load_experiment_config(SCENARIOS / f"{name}.yaml", out=cls.tmp / name)
            cls.configs[name] = cfg
            cls.reports[name] = run_experiment(cfg)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)
        super().tearDownClass()

    def linearised(self, scenario):
        """At least 30 dB NMSE gain and a shoulder within 3 dB of the input's."""
        summary = self.reports[scenario].summary
        return (
            summary["nmse_improvement_db"] >= 30
            and abs(summary["shoulder_with_dpd_db"] - summary["shoulder_input_db"]) <= 3
        )

    def test_memory_polynomial_is_linearised(self):
        summary = self.reports["memory_poly_diagonal"].summary
        self.assertGreaterEqual(summary["nmse_improvement_db"], 30)
        self.assertLessEqual(
            abs(summary["shoulder_with_dpd_db"] - summary["shoulder_input_db"]), 3
        )
        self.assertTrue(self.linearised("memory_poly_diagonal"))
        self.assertGreater(summary["shoulder_with_dpd_db"], summary["shoulder_no_dpd_db"])

    def test_cross_term_needs_multiplicative_structure(self):
        diagonal = self.reports["cross_term_diagonal"].summary
        additive = self.reports["cross_term_additive"].summary
        self.assertGreaterEqual(
            diagonal["shoulder_with_dpd_db"] - additive["shoulder_with_dpd_db"], 10
        )
        self.assertGreaterEqual(diagonal["nmse_improvement_db"], 30)
        self.assertLessEqual(
            abs(diagonal["shoulder_with_dpd_db"] - diagonal["shoulder_input_db"]), 3
        )
        self.assertTrue(self.linearised("cross_term_diagonal"))
        self.assertFalse(self.linearised("cross_term_additive"))

    def test_identity_amplifier_stays_transparent(self):
        summary = self.reports["identity"].summary
        self.assertLessEqual(summary["cascade_nmse_db"], -60)

    def test_cascade_lag_matches_correlation_peak(self):
        cfg = self.configs["memory_poly_diagonal"]
        report = self.reports["memory_poly_diagonal"]
        pd = load(report.directory / "predistorter.dpd")
        x = generate(cfg.waveform)
        out = cascade_output(pd, cfg.hpa.build(), x)
        self.assertEqual(
            estimate_lag(x.samples, out.samples), report.summary["cascade_lag"]
        )

    def test_lut_realisation_tracks_polynomial(self):
        summary = self.reports["memory_poly_diagonal"].summary
        self.assertLessEqual(
            abs(summary["lut_cascade_nmse_db"] - summary["cascade_nmse_db"]), 1
        )


@tag("acceptance")
class SolverAcceptanceTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cfg = load_experiment_config(SCENARIOS / "memory_poly_diagonal.yaml")
        model = cfg.hpa.build()
        cls.z = generate(cfg.waveform)
        cls.y = model(cls.z)
        cls.basis = build_basis(envelope_histogram(cls.z, 256), 5)

    def test_als_objective_is_monotone(self):
        cfg = TrainingConfig(max_iterations=25, convergence_tol=1e-300)
        run = fit_multiplicative_als(self.z, self.y, 3, 3, self.basis, cfg)
        self.assertTrue(np.all(np.diff(run.objective_trace) <= 0))

    def test_scg_and_als_reach_the_same_residual(self):
        als = fit_multiplicative_als(
            self.z, self.y, 3, 3, self.basis, TrainingConfig(max_iterations=40)
        )
        scg = fit_multiplicative_scg(
            self.z, self.y, 3, 3, self.basis,
            TrainingConfig(solver="scg", max_iterations=400, convergence_tol=1e-10),
        )
        self.assertLessEqual(abs(als.residual_nmse_db - scg.residual_nmse_db), 2)
