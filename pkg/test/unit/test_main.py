"""
Tests unitarios para la línea de comandos
=========================================

Análisis de argumentos, modificaciones de configuración y códigos de
salida de los subcomandos.
"""

import contextlib
import io
import os
import shutil
import signal
import sys
import tempfile
import unittest
from test.utils.tiny_models import override_args, tiny_overrides

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

from main import build_parser, collect_overrides, main


class TestArgumentParsing(unittest.TestCase):
    """Tests para build_parser y collect_overrides."""

    def test_ablation_flags(self):
        """Test para los flags de ablación convertidos en claves."""
        args = build_parser().parse_args(
            ["train", "--out", "runs/x", "--no-attention", "--no-sync", "--single-discriminator", "--seed", "4"]
        )
        self.assertEqual(
            collect_overrides(args),
            {"use_attention": False, "use_sync": False, "single_discriminator": True, "seed": 4},
        )

    def test_set_overrides(self):
        args = build_parser().parse_args(["validate-config", "--set", "steps=10", "--set", "tau = 0.5"])
        self.assertEqual(collect_overrides(args), {"steps": "10", "tau": "0.5"})

    def test_benchmark_lengths(self):
        args = build_parser().parse_args(["benchmark", "--lengths", "4,8"])
        self.assertEqual(args.lengths, [4, 8])

    def test_usage_errors_exit_with_one(self):
        """Test para errores de uso: código 1."""
        for argv in ([], ["train"], ["unknown"], ["gen-data", "--n", "x", "--out", "d"], ["eval", "--ckpt", "c", "--split", "dev"]):
            with self.subTest(argv=argv):
                with contextlib.redirect_stderr(io.StringIO()):
                    with self.assertRaises(SystemExit) as ctx:
                        build_parser().parse_args(argv)
                self.assertEqual(ctx.exception.code, 1)

    def test_malformed_override(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                build_parser().parse_args(["validate-config", "--set", "steps"])
        self.assertEqual(ctx.exception.code, 1)


class TestMain(unittest.TestCase):
    """Tests para main y sus códigos de salida."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp(prefix="vcagan_cli_")
        self.sigint = signal.getsignal(signal.SIGINT)
        self.sigterm = signal.getsignal(signal.SIGTERM)
        self.base = override_args(tiny_overrides(os.path.join(self.temp_dir, "logs")))

    def tearDown(self):
        signal.signal(signal.SIGINT, self.sigint)
        signal.signal(signal.SIGTERM, self.sigterm)
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def run_main(self, argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            code = main(argv)
        return code, stdout.getvalue(), stderr.getvalue()

    def test_validate_config(self):
        """Test para validate-config con una configuración válida."""
        code, out, _ = self.run_main(["validate-config"] + self.base)
        self.assertEqual(code, 0)
        self.assertIn("exit_code=0", out)

    def test_invalid_configuration(self):
        """Test para una configuración inválida: código 1."""
        code, _, err = self.run_main(["validate-config"] + self.base + ["--set", "alpha=3"])
        self.assertEqual(code, 1)
        self.assertIn("Configuration error", err)

    def test_missing_config_file(self):
        code, _, _ = self.run_main(["validate-config", "--config", os.path.join(self.temp_dir, "none.cfg")])
        self.assertEqual(code, 1)

    def test_corrupt_checkpoint(self):
        """Test para un checkpoint corrupto: código 2."""
        checkpoint = os.path.join(self.temp_dir, "broken.vcag")
        with open(checkpoint, "wb") as handle:
            handle.write(b"NOPE" + bytes(12))
        code, _, _ = self.run_main(
            ["synth", "--ckpt", checkpoint, "--video", checkpoint, "--out", self.temp_dir] + self.base
        )
        self.assertEqual(code, 2)

    def test_missing_corpus(self):
        """Test para entrenar sin manifiesto: código 2."""
        code, _, _ = self.run_main(
            ["train", "--out", os.path.join(self.temp_dir, "run"), "--data", os.path.join(self.temp_dir, "empty")]
            + self.base
        )
        self.assertEqual(code, 2)

    @pytest.mark.slow
    def test_gradcheck_single_case(self):
        """Test para gradcheck restringido a un caso."""
        code, out, _ = self.run_main(["gradcheck", "--case", "add", "--seeds", "1"] + self.base)
        self.assertEqual(code, 0)
        self.assertIn("cases=", out)

    def test_gradcheck_unknown_case(self):
        """Test para un caso desconocido: error de uso."""
        code, _, _ = self.run_main(["gradcheck", "--case", "nope", "--seeds", "1"] + self.base)
        self.assertEqual(code, 1)


if __name__ == "__main__":
    unittest.main()
