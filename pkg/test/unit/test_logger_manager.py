"""
Tests unitarios para LoggerManager
==================================

Jerarquía de loggers, handlers de archivo y consola, nivel por entorno y
registros estructurados de entrenamiento.
"""

import logging
import os
import shutil
import sys
import tempfile
import unittest
from unittest.mock import patch

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

from src.classes.config_manager import ConfigManager
from src.classes.logger_manager import LOG_LEVEL_ENV, LoggerManager


class TestLoggerManager(unittest.TestCase):
    """Tests para LoggerManager."""

    def setUp(self):
        self.log_dir = tempfile.mkdtemp(prefix="vcagan_logs_")
        self.log_config = ConfigManager(overrides={"log_directory": self.log_dir}).get_log_config()
        self.managers = []

    def tearDown(self):
        for manager in self.managers:
            manager.cleanup()
        shutil.rmtree(self.log_dir, ignore_errors=True)

    def make(self, run_name: str = "train_test", **changes) -> LoggerManager:
        config = dict(self.log_config, **changes)
        with patch.dict(os.environ, {LOG_LEVEL_ENV: ""}):
            manager = LoggerManager(run_name, config)
        self.managers.append(manager)
        return manager

    def read_log(self, run_name: str) -> str:
        for manager in self.managers:
            for handler in manager.get_logger().handlers:
                handler.flush()
        with open(os.path.join(self.log_dir, run_name, f"{run_name}.log"), encoding="utf-8") as handle:
            return handle.read()

    def test_logger_names(self):
        """Test para la jerarquía vcagan.<ejecución>.<componente>."""
        manager = self.make()
        self.assertEqual(manager.get_logger().name, "vcagan.train_test")
        self.assertEqual(manager.get_logger("trainer").name, "vcagan.train_test.trainer")
        self.assertEqual(manager.get_main_logger().name, "vcagan.train_test.main")

    def test_handlers(self):
        """Test para handlers de archivo rotado y consola."""
        logger = self.make().get_logger()
        kinds = {type(h) for h in logger.handlers}
        self.assertIn(logging.handlers.TimedRotatingFileHandler, kinds)
        self.assertIn(logging.StreamHandler, kinds)
        self.assertFalse(logger.propagate)
        self.assertEqual(logger.level, logging.INFO)

    def test_no_file_without_rotation(self):
        """Test para desactivar el archivo de log."""
        rotation = dict(self.log_config["log_rotation"], enabled=False)
        logger = self.make("console_only", log_rotation=rotation).get_logger()
        self.assertEqual([type(h) for h in logger.handlers], [logging.StreamHandler])
        self.assertFalse(os.path.exists(os.path.join(self.log_dir, "console_only")))

    def test_environment_level(self):
        """Test para el nivel fijado por variable de entorno."""
        with patch.dict(os.environ, {LOG_LEVEL_ENV: "warning"}):
            manager = LoggerManager("env_level", self.log_config)
        self.managers.append(manager)
        self.assertEqual(manager.get_logger().level, logging.WARNING)

    def test_invalid_level(self):
        with patch.dict(os.environ, {LOG_LEVEL_ENV: "LOUD"}):
            with self.assertRaises(ValueError):
                LoggerManager("bad_level", self.log_config)

    def test_structured_records(self):
        """Test para los mensajes de pasos, validación y fin de ejecución."""
        manager = self.make()
        logger = manager.get_logger("trainer")
        manager.log_run_start(logger, "train", {"steps": 10})
        manager.log_training_step(logger, 3, {"L_g": 0.69314, "L_d": 1.38629})
        manager.log_validation(logger, 4, {"L_recon": 0.125})
        manager.log_error_with_context(logger, ValueError("boom"), {"step": 4})
        manager.log_run_end(logger, "train", False, {"steps_completed": 4})

        text = self.read_log("train_test")
        self.assertIn("=== TRAIN STARTED ===", text)
        self.assertIn("Step 3: L_g=0.69314, L_d=1.38629", text)
        self.assertIn("Validation at step 4: L_recon=0.12500", text)
        self.assertIn("Error type: ValueError", text)
        self.assertIn("=== TRAIN FAILED ===", text)
        self.assertIn("PID:", text)

    def test_loki_failure_is_not_fatal(self):
        """Test para un handler de Loki que no puede crearse."""
        loki = dict(self.log_config["loki"], enabled=True)
        with patch.object(LoggerManager, "_create_loki_handler", side_effect=RuntimeError("down")):
            logger = self.make("loki_down", loki=loki).get_logger()
        self.assertEqual(len(logger.handlers), 2)

    def test_cleanup_removes_handlers(self):
        manager = self.make("cleanup_run")
        manager.cleanup()
        self.assertEqual(manager.get_logger().handlers, [])


if __name__ == "__main__":
    unittest.main()
