"""
Tests unitarios para ConfigManager
==================================

Prioridad de fuentes, formatos de fichero, validación con esquema y vistas
tipadas de la configuración.
"""

import os
import shutil
import sys
import tempfile
import unittest

import yaml

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

from src.classes.config_manager import DEFAULTS, ConfigManager, ConfigurationError, load_side_car


class TestConfigManager(unittest.TestCase):
    """Tests para ConfigManager."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp(prefix="vcagan_config_")

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def write(self, name: str, text: str) -> str:
        path = os.path.join(self.temp_dir, name)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
        return path

    def test_defaults(self):
        """Test para la configuración por defecto."""
        config = ConfigManager()
        self.assertEqual(config.get_config_name(), "default")
        model = config.get_model_config()
        self.assertEqual(model.n_mels, 80)
        self.assertEqual(model.linear_bins, 321)
        self.assertEqual(model.visual_channels, (16, 32, 64, 64))
        self.assertEqual(config.get_training_config().lambda_recon, 50.0)
        self.assertEqual(config.get_seed(), 0)

    def test_flat_file_with_comments(self):
        """Test para un fichero clave=valor con comentarios y listas."""
        path = self.write(
            "desk.cfg",
            "# experimento de escritorio\n"
            "steps = 200\n"
            "use_attention=false   # ablación\n"
            "generator_channels=32,16,8\n"
            "\n"
            "learning_rate=3e-4\n",
        )
        config = ConfigManager(path)
        self.assertEqual(config.get_config_name(), "desk")
        self.assertEqual(config.get("steps"), 200)
        self.assertFalse(config.get("use_attention"))
        self.assertEqual(config.get("generator_channels"), [32, 16, 8])
        self.assertEqual(config.get("generator_channels.1"), 16)
        self.assertAlmostEqual(config.get_training_config().learning_rate, 3e-4)

    def test_yaml_file(self):
        """Test para un fichero YAML."""
        path = self.write("run.yaml", yaml.safe_dump({"seed": 3, "single_discriminator": "yes"}))
        config = ConfigManager(path)
        self.assertEqual(config.get_seed(), 3)
        self.assertTrue(config.get_model_config().single_discriminator)

    def test_override_priority(self):
        """Test para modificaciones que ganan al fichero; None se ignora."""
        path = self.write("base.cfg", "steps=100\nbatch_size=4\n")
        config = ConfigManager(path, {"steps": "300", "batch_size": None})
        self.assertEqual(config.get("steps"), 300)
        self.assertEqual(config.get("batch_size"), 4)

    def test_fps_profile(self):
        """Test para los bins lineales del perfil de 30 fps."""
        config = ConfigManager(overrides={"fps": 30})
        self.assertEqual(config.get_model_config().linear_bins, 532 // 2 + 1)

    def test_invalid_files(self):
        """Test para ficheros ausentes, vacíos o mal formados."""
        with self.assertRaises(ConfigurationError):
            ConfigManager(os.path.join(self.temp_dir, "missing.cfg"))
        with self.assertRaises(ConfigurationError):
            ConfigManager(self.write("empty.yaml", ""))
        with self.assertRaises(ConfigurationError):
            ConfigManager(self.write("list.yaml", "- 1\n- 2\n"))
        with self.assertRaises(ConfigurationError) as ctx:
            ConfigManager(self.write("bad.cfg", "steps=10\nnot a pair\n"))
        self.assertIn("bad.cfg:2", str(ctx.exception))

    def test_schema_violations(self):
        """Test para valores fuera de rango y claves desconocidas."""
        for overrides in (
            {"steps": 0},
            {"fps": 24},
            {"dtype": "float16"},
            {"log_level": "verbose"},
            {"highpass_order": 3},
            {"unknown_key": 1},
        ):
            with self.subTest(overrides=overrides):
                with self.assertRaises(ConfigurationError):
                    ConfigManager(overrides=overrides)

    def test_cross_key_rules(self):
        """Test para reglas que relacionan varias claves."""
        for overrides in (
            {"alpha": 3},
            {"generator_blocks": "1,1"},
            {"visual_strides": "1,2"},
            {"f_max": 9000},
            {"clip_frames": 10},
            {"window_frames": 32},
            {"max_offset": 16},
            {"d_model": 63},
            {"n_mels": 82},
        ):
            with self.subTest(overrides=overrides):
                with self.assertRaises(ConfigurationError):
                    ConfigManager(overrides=overrides)

    def test_log_level_is_normalized(self):
        self.assertEqual(ConfigManager(overrides={"log_level": "debug"}).get("log_level"), "DEBUG")

    def test_log_config_shape(self):
        """Test para la estructura que consume LoggerManager."""
        log_config = ConfigManager(overrides={"loki_enabled": "on"}).get_log_config()
        self.assertEqual(log_config["log_rotation"]["backup_count"], 7)
        self.assertTrue(log_config["loki"]["enabled"])
        self.assertEqual(log_config["loki"]["port"], 3100)

    def test_write_round_trip(self):
        """Test para volcar y recargar la configuración resuelta."""
        config = ConfigManager(overrides={"steps": 42, "use_sync": False, "tau": 0.5})
        path = os.path.join(self.temp_dir, "nested", "resolved.cfg")
        config.write(path)
        reloaded = ConfigManager(path)
        self.assertEqual(reloaded.to_dict(), config.to_dict())
        with open(path) as handle:
            lines = [l for l in handle.read().splitlines() if not l.startswith("#")]
        self.assertEqual([l.split("=")[0] for l in lines], list(DEFAULTS))

    def test_shipped_configurations(self):
        """Test para los ficheros de config/ del repositorio."""
        root = os.path.join(os.path.dirname(__file__), "..", "..", "config")
        desk = ConfigManager(os.path.join(root, "desk.cfg"))
        self.assertEqual(desk.get_model_config().generator_channels, (64, 32, 16))
        faithful = ConfigManager(os.path.join(root, "faithful.yaml"))
        self.assertEqual(faithful.get_corpus_config()["frame_size"], 112)
        tiny = ConfigManager(os.path.join(root, "tiny.cfg"))
        self.assertEqual(tiny.get_model_config().n_mels, 16)

    def test_side_car(self):
        """Test para la configuración guardada junto a un checkpoint."""
        checkpoint = os.path.join(self.temp_dir, "last.vcag")
        self.assertEqual(load_side_car(checkpoint).get_config_name(), "default")
        ConfigManager(overrides={"use_attention": False}).write(f"{checkpoint}.cfg")
        self.assertFalse(load_side_car(checkpoint).get_model_config().use_attention)


if __name__ == "__main__":
    unittest.main()
