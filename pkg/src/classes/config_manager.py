"""
Gestor de configuración de los experimentos VCA-GAN
===================================================

Combina valores por defecto, un fichero de configuración (texto plano
`clave=valor` o YAML) y modificaciones de la línea de comandos, y valida
el resultado con un esquema que además convierte los tipos.
"""

import logging
import os
from typing import Any, Dict, List, Mapping, Optional

import yaml
from schema import And, Or, Schema, SchemaError, Use

from ..utils import get_config_name_from_path, parse_bool, parse_int_list, safe_get_nested_dict
from .model_config import ModelConfig, ModelError
from .trainer import TrainingConfig, TrainingError

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]

# Orden de escritura de `write`; agrupado por sección
DEFAULTS: Dict[str, Any] = {
    # audio
    "sample_rate": 16000,
    "fps": 25,
    "n_mels": 80,
    "f_min": 55.0,
    "f_max": 8000.0,
    "log_floor": 1e-5,
    "log_ceiling": 6.0,
    "highpass_cutoff": 55.0,
    "highpass_order": 4,
    # corpus
    "clip_frames": 16,
    "frames_per_token": 4,
    "corpus_directory": "corpus",
    # modelo
    "frame_height": 32,
    "frame_width": 32,
    "frame_channels": 1,
    "d_model": 64,
    "d_noise": 16,
    "d_attention": 64,
    "alpha": 2,
    "visual_temporal_kernel": 5,
    "visual_channels": [16, 32, 64, 64],
    "visual_strides": [1, 2, 2, 1],
    "gru_layers": 2,
    "generator_channels": [64, 32, 16],
    "generator_blocks": [6, 3, 3],
    "discriminator_blocks": [2, 3, 4],
    "discriminator_base_channels": 16,
    "discriminator_max_channels": 64,
    "postnet_channels": 128,
    "postnet_blocks": 3,
    "activation": "leaky_relu",
    "use_attention": True,
    "single_discriminator": False,
    "dtype": "float64",
    # entrenamiento
    "steps": 5000,
    "batch_size": 8,
    "window_frames": 16,
    "learning_rate": 1e-4,
    "beta1": 0.9,
    "beta2": 0.999,
    "adam_eps": 1e-8,
    "lambda_recon": 50.0,
    "lambda_sync": 0.5,
    "tau": 1.0,
    "r1_gamma": 1.0,
    "r1_every": 1,
    "use_sync": True,
    "freeze_discriminator": False,
    "val_every": 250,
    "val_samples": 20,
    "checkpoint_every": 500,
    "log_every": 50,
    "postnet_steps": 2000,
    "seed": 0,
    # evaluación
    "max_offset": 8,
    "probe_window": 5,
    "griffin_lim_iters": 100,
    # logging
    "log_directory": "logs",
    "log_level": "INFO",
    "log_rotation_enabled": True,
    "log_rotation_when": "D",
    "log_rotation_interval": 1,
    "log_rotation_backup_count": 7,
    "loki_enabled": False,
    "loki_url": "localhost",
    "loki_port": 3100,
}

MODEL_KEYS = [
    "n_mels", "frame_height", "frame_width", "frame_channels", "d_model", "d_noise",
    "d_attention", "alpha", "visual_temporal_kernel", "visual_channels", "visual_strides",
    "gru_layers", "generator_channels", "generator_blocks", "discriminator_blocks",
    "discriminator_base_channels", "discriminator_max_channels", "postnet_channels",
    "postnet_blocks", "activation", "use_attention", "single_discriminator", "dtype",
]
TRAINING_KEYS = [
    "steps", "batch_size", "window_frames", "learning_rate", "beta1", "beta2", "adam_eps",
    "lambda_recon", "lambda_sync", "tau", "r1_gamma", "r1_every", "use_sync",
    "freeze_discriminator", "val_every", "val_samples", "checkpoint_every", "log_every",
    "postnet_steps", "seed",
]
AUDIO_KEYS = [
    "sample_rate", "fps", "n_mels", "f_min", "f_max", "log_floor", "log_ceiling",
    "highpass_cutoff", "highpass_order",
]

FRAME_WINDOWS = {25: 640, 30: 532}


class ConfigurationError(Exception):
    """Excepción para errores de configuración"""

    pass


def _positive_int():
    return And(Use(int), lambda x: x > 0)


def _positive_float():
    return And(Use(float), lambda x: x > 0)


def _int_list():
    return And(Use(parse_int_list), lambda xs: len(xs) > 0 and all(x > 0 for x in xs))


class ConfigManager:
    """
    Configuración resuelta de un experimento.

    Prioridad: valores por defecto < fichero < modificaciones explícitas.
    """

    def __init__(self, config_path: str = None, overrides: Mapping[str, Any] = None):
        """
        Args:
            config_path: Fichero `clave=valor` o YAML (opcional)
            overrides: Valores que sustituyen a los del fichero

        Raises:
            ConfigurationError: Fichero ausente, sintaxis inválida o
                valores fuera de rango
        """
        self.config_path = config_path
        self.config_name = get_config_name_from_path(config_path) if config_path else "default"
        self.logger = logging.getLogger(f"ConfigManager.{self.config_name}")
        self.config_data: Dict[str, Any] = dict(DEFAULTS)

        if config_path:
            self.config_data.update(self._load_config(config_path))
        if overrides:
            self.config_data.update({k: v for k, v in overrides.items() if v is not None})
        self._validate_config()

    # ------------------------------------------------------------------
    # Carga
    # ------------------------------------------------------------------

    @staticmethod
    def _parse_flat(text: str, path: str) -> Dict[str, Any]:
        """Texto `clave=valor`; cada valor se interpreta con yaml.safe_load."""
        data = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{number}: expected 'key=value', got '{raw.strip()}'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigurationError(f"{path}:{number}: empty key")
            try:
                data[key] = yaml.safe_load(value) if value else ""
            except yaml.YAMLError as e:
                raise ConfigurationError(f"{path}:{number}: invalid value for '{key}': {e}")
        return data

    def _load_config(self, path: str) -> Dict[str, Any]:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except FileNotFoundError:
            raise ConfigurationError(f"Configuration file not found: {path}")
        except OSError as e:
            raise ConfigurationError(f"Error loading configuration {path}: {e}")

        if path.endswith((".yaml", ".yml")):
            try:
                data = yaml.safe_load(text)
            except yaml.YAMLError as e:
                raise ConfigurationError(f"Invalid YAML syntax in {path}: {e}")
            if data is None:
                raise ConfigurationError(f"Empty configuration file: {path}")
            if not isinstance(data, dict):
                raise ConfigurationError(f"Configuration {path} must be a mapping")
            return data
        return self._parse_flat(text, path)

    # ------------------------------------------------------------------
    # Validación
    # ------------------------------------------------------------------

    def _get_config_schema(self) -> Schema:
        """
        Esquema de validación con conversión de tipos.

        Returns:
            Schema: Esquema de validación
        """
        return Schema(
            {
                "sample_rate": _positive_int(),
                "fps": And(Use(int), lambda x: x in (25, 30)),
                "n_mels": _positive_int(),
                "f_min": And(Use(float), lambda x: x >= 0),
                "f_max": _positive_float(),
                "log_floor": _positive_float(),
                "log_ceiling": Use(float),
                "highpass_cutoff": _positive_float(),
                "highpass_order": And(Use(int), lambda x: x > 0 and x % 2 == 0),
                "clip_frames": _positive_int(),
                "frames_per_token": _positive_int(),
                "corpus_directory": And(str, len),
                "frame_height": _positive_int(),
                "frame_width": _positive_int(),
                "frame_channels": _positive_int(),
                "d_model": _positive_int(),
                "d_noise": _positive_int(),
                "d_attention": _positive_int(),
                "alpha": _positive_int(),
                "visual_temporal_kernel": And(Use(int), lambda x: x > 0 and x % 2 == 1),
                "visual_channels": _int_list(),
                "visual_strides": _int_list(),
                "gru_layers": _positive_int(),
                "generator_channels": _int_list(),
                "generator_blocks": _int_list(),
                "discriminator_blocks": _int_list(),
                "discriminator_base_channels": _positive_int(),
                "discriminator_max_channels": _positive_int(),
                "postnet_channels": _positive_int(),
                "postnet_blocks": _positive_int(),
                "activation": And(str, lambda x: x in ("leaky_relu", "silu", "tanh")),
                "use_attention": Use(parse_bool),
                "single_discriminator": Use(parse_bool),
                "dtype": And(str, lambda x: x in ("float32", "float64")),
                "steps": _positive_int(),
                "batch_size": _positive_int(),
                "window_frames": _positive_int(),
                "learning_rate": _positive_float(),
                "beta1": And(Use(float), lambda x: 0 <= x < 1),
                "beta2": And(Use(float), lambda x: 0 <= x < 1),
                "adam_eps": _positive_float(),
                "lambda_recon": _positive_float(),
                "lambda_sync": _positive_float(),
                "tau": _positive_float(),
                "r1_gamma": And(Use(float), lambda x: x >= 0),
                "r1_every": _positive_int(),
                "use_sync": Use(parse_bool),
                "freeze_discriminator": Use(parse_bool),
                "val_every": _positive_int(),
                "val_samples": _positive_int(),
                "checkpoint_every": _positive_int(),
                "log_every": _positive_int(),
                "postnet_steps": _positive_int(),
                "seed": And(Use(int), lambda x: x >= 0),
                "max_offset": _positive_int(),
                "probe_window": _positive_int(),
                "griffin_lim_iters": _positive_int(),
                "log_directory": And(str, len),
                "log_level": And(Use(lambda x: str(x).upper()), lambda x: x in LOG_LEVELS),
                "log_rotation_enabled": Use(parse_bool),
                "log_rotation_when": And(str, lambda x: x in ("D", "H", "M", "S", "midnight")),
                "log_rotation_interval": _positive_int(),
                "log_rotation_backup_count": And(Use(int), lambda x: x >= 0),
                "loki_enabled": Use(parse_bool),
                "loki_url": Or(str, Use(str)),
                "loki_port": And(Use(int), lambda x: 1 <= x <= 65535),
            }
        )

    def _validate_config(self) -> None:
        try:
            self.config_data = self._get_config_schema().validate(self.config_data)
        except SchemaError as e:
            raise ConfigurationError(f"Configuration validation failed: {e}")
        self._validate_additional_rules()

    def _validate_additional_rules(self) -> None:
        """Reglas que relacionan varias claves."""
        c = self.config_data
        for width in c["generator_channels"]:
            if width % c["alpha"] != 0:
                raise ConfigurationError(
                    f"alpha={c['alpha']} must divide every generator channel width, got {width}"
                )
        stages = len(c["generator_channels"])
        for key in ("generator_blocks", "discriminator_blocks"):
            if len(c[key]) != stages:
                raise ConfigurationError(
                    f"{key} has {len(c[key])} entries; expected {stages} (one per stage)"
                )
        if len(c["visual_channels"]) != len(c["visual_strides"]):
            raise ConfigurationError("visual_channels and visual_strides must have equal length")
        if not c["f_min"] < c["f_max"] <= c["sample_rate"] / 2:
            raise ConfigurationError(
                f"Mel range requires f_min < f_max <= sample_rate/2, got "
                f"{c['f_min']}, {c['f_max']}, {c['sample_rate']}"
            )
        if c["highpass_cutoff"] >= c["sample_rate"] / 2:
            raise ConfigurationError(
                f"highpass_cutoff {c['highpass_cutoff']} must be below sample_rate/2"
            )
        if c["clip_frames"] % c["frames_per_token"] != 0:
            raise ConfigurationError("clip_frames must be a multiple of frames_per_token")
        if c["window_frames"] > c["clip_frames"]:
            raise ConfigurationError(
                f"window_frames={c['window_frames']} exceeds clip_frames={c['clip_frames']}"
            )
        if c["max_offset"] >= c["clip_frames"]:
            raise ConfigurationError(
                f"max_offset={c['max_offset']} must be smaller than clip_frames={c['clip_frames']}"
            )
        if c["d_model"] % 2 != 0:
            raise ConfigurationError(f"d_model must be even, got {c['d_model']}")

        try:
            self.get_model_config()
            self.get_training_config()
        except (ModelError, TrainingError) as e:
            raise ConfigurationError(str(e))

    # ------------------------------------------------------------------
    # Vistas tipadas
    # ------------------------------------------------------------------

    def get_config_name(self) -> str:
        return self.config_name

    def get(self, key: str, default: Any = None) -> Any:
        return safe_get_nested_dict(self.config_data, key, default)

    def get_model_config(self) -> ModelConfig:
        """ModelConfig con los bins lineales del perfil fps."""
        values = {k: self.config_data[k] for k in MODEL_KEYS}
        values["linear_bins"] = FRAME_WINDOWS[self.config_data["fps"]] // 2 + 1
        return ModelConfig(**values)

    def get_training_config(self) -> TrainingConfig:
        return TrainingConfig(**{k: self.config_data[k] for k in TRAINING_KEYS})

    def get_audio_config(self) -> Dict[str, Any]:
        """Argumentos de AudioProcessor."""
        return {k: self.config_data[k] for k in AUDIO_KEYS}

    def get_corpus_config(self) -> Dict[str, Any]:
        return {
            "clip_frames": self.config_data["clip_frames"],
            "frames_per_token": self.config_data["frames_per_token"],
            "frame_size": self.config_data["frame_height"],
        }

    def get_corpus_directory(self) -> str:
        return self.config_data["corpus_directory"]

    def get_eval_config(self) -> Dict[str, Any]:
        return {
            "max_offset": self.config_data["max_offset"],
            "probe_window": self.config_data["probe_window"],
            "griffin_lim_iters": self.config_data["griffin_lim_iters"],
        }

    def get_log_config(self) -> Dict[str, Any]:
        """Configuración en el formato que espera LoggerManager."""
        c = self.config_data
        return {
            "log_directory": c["log_directory"],
            "log_level": c["log_level"],
            "log_rotation": {
                "enabled": c["log_rotation_enabled"],
                "when": c["log_rotation_when"],
                "interval": c["log_rotation_interval"],
                "backup_count": c["log_rotation_backup_count"],
            },
            "loki": {
                "enabled": c["loki_enabled"],
                "url": c["loki_url"],
                "port": c["loki_port"],
                "tags": {},
            },
        }

    def get_seed(self) -> int:
        return self.config_data["seed"]

    # ------------------------------------------------------------------
    # Escritura
    # ------------------------------------------------------------------

    @staticmethod
    def _format_value(value: Any) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, (list, tuple)):
            return ",".join(str(v) for v in value)
        return repr(value) if isinstance(value, float) else str(value)

    def write(self, path: str) -> None:
        """Vuelca la configuración resuelta como texto `clave=valor`."""
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        lines: List[str] = [f"# resolved configuration ({self.config_name})"]
        for key in DEFAULTS:
            lines.append(f"{key}={self._format_value(self.config_data[key])}")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + "\n")

    def to_dict(self) -> Dict:
        return self.config_data.copy()

    def __repr__(self) -> str:
        return (
            f"ConfigManager(config_name='{self.config_name}', "
            f"attention={self.config_data['use_attention']}, sync={self.config_data['use_sync']}, "
            f"single_discriminator={self.config_data['single_discriminator']})"
        )


def load_side_car(checkpoint_path: str, overrides: Optional[Mapping[str, Any]] = None) -> ConfigManager:
    """
    Configuración guardada junto a un checkpoint (`<ckpt>.cfg`); valores
    por defecto si no existe.
    """
    side_car = f"{checkpoint_path}.cfg"
    if os.path.exists(side_car):
        return ConfigManager(side_car, overrides)
    return ConfigManager(None, overrides)
