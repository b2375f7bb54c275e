"""
Tests unitarios para la verificación de gradientes
==================================================

Tests para el verificador por diferencias finitas y la batería de casos.
"""

import os
import sys
import unittest

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

from src.classes import tensor_engine as te
from src.classes.gradient_checker import (
    GradCheckError,
    GradientChecker,
    grad_check,
    relative_error,
)
from src.classes.gradient_suite import CASES, check_r1, run_suite


def _wrong_square(a):
    """x² con derivada deliberadamente errónea (x en lugar de 2x)."""
    return te._result(a.data**2, (a,), lambda g: (g * a.data,), "wrong_square")


class TestGradientChecker(unittest.TestCase):
    """Tests para GradientChecker."""

    def test_relative_error_definition(self):
        """Test para ‖a − n‖∞ / max(‖a‖∞, ‖n‖∞, 1e-10)."""
        self.assertAlmostEqual(relative_error(np.array([1.0, 2.0]), np.array([1.0, 1.0])), 0.5)
        self.assertEqual(relative_error(np.zeros(3), np.zeros(3)), 0.0)

    def test_correct_gradient_passes(self):
        """Test para un cierre con gradiente correcto."""
        rng = np.random.default_rng(0)
        result = GradientChecker(eps=1e-5).check(
            lambda a, b: te.tanh(te.matmul(a, b)).sum(),
            [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))],
        )
        self.assertTrue(result.passed(1e-4))
        self.assertEqual(len(result.per_input), 2)

    def test_wrong_gradient_detected(self):
        """Test para la detección de un backward incorrecto."""
        error = grad_check(lambda a: _wrong_square(a).sum(), [np.array([1.0, -2.0, 3.0])])
        self.assertGreater(error, 0.1)

    def test_non_scalar_closure_rejected(self):
        """Test para cierres que no devuelven un escalar."""
        with self.assertRaises(GradCheckError):
            GradientChecker().check(lambda a: a * 2.0, [np.ones(3)])

    def test_invalid_eps(self):
        """Test para eps no positivo."""
        with self.assertRaises(GradCheckError):
            GradientChecker(eps=0.0)

    def test_nonfinite_gradient_reports_location(self):
        """Test para gradientes no finitos con su posición."""
        result = GradientChecker().check(lambda a: te.sqrt(a).sum(), [np.array([1.0, 0.0])])
        self.assertFalse(result.finite)
        self.assertFalse(result.passed())
        self.assertIn("(1,)", result.failure)

    def test_max_elements_sampling(self):
        """Test para el muestreo de elementos perturbados."""
        rng = np.random.default_rng(3)
        result = GradientChecker(eps=1e-5, max_elements=5).check(
            lambda a: (a * a).sum(), [rng.standard_normal((10, 10))]
        )
        self.assertTrue(result.passed(1e-4))


class TestGradientSuite(unittest.TestCase):
    """Tests para la batería de casos diferenciables."""

    def test_case_catalog_covers_every_primitive_family(self):
        """Test para la presencia de las familias de primitivas."""
        for name in ("matmul", "conv1d", "conv2d", "conv3d", "gru_bidirectional",
                     "softmax", "bilinear_resize", "cosine", "attention",
                     "sync_losses", "gan_losses", "total_generator_loss"):
            self.assertIn(name, CASES)

    def test_elementwise_cases_pass(self):
        """Test para los casos elementales con dos semillas."""
        report = run_suite(
            seeds=range(2),
            cases=["add", "mul", "div", "exp", "log", "tanh", "softplus", "leaky_relu"],
            include_r1=False,
        )
        self.assertTrue(report.passed, report.failures)
        self.assertEqual(set(report.errors), {"add", "mul", "div", "exp", "log", "tanh", "softplus", "leaky_relu"})

    def test_unknown_case(self):
        """Test para casos desconocidos."""
        with self.assertRaises(KeyError):
            run_suite(seeds=[0], cases=["not_a_case"], include_r1=False)

    def test_suite_is_deterministic(self):
        """Test para errores idénticos con las mismas semillas."""
        first = run_suite(seeds=[4], cases=["matmul", "softmax"], include_r1=False)
        second = run_suite(seeds=[4], cases=["matmul", "softmax"], include_r1=False)
        self.assertEqual(first.errors, second.errors)

    @pytest.mark.slow
    def test_structured_cases_pass(self):
        """Test para convoluciones, GRU, atención y pérdidas."""
        report = run_suite(
            seeds=range(2),
            cases=["conv1d", "conv2d", "conv3d", "gru_bidirectional", "bilinear_resize",
                   "cosine", "attention", "sync_losses", "gan_losses", "total_generator_loss"],
            include_r1=False,
        )
        self.assertTrue(report.passed, report.errors)

    @pytest.mark.slow
    def test_r1_parameter_gradient(self):
        """Test para el gradiente de R1 respecto a los parámetros del discriminador."""
        self.assertLess(check_r1(np.random.default_rng([0, 1])), 1e-4)


if __name__ == "__main__":
    unittest.main()
