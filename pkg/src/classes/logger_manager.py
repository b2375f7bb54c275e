"""
Gestor de logging para los experimentos VCA-GAN
===============================================

Configura el árbol de loggers `vcagan.<ejecución>` con rotación de
archivos, salida por consola e integración opcional con Loki.
"""

import logging
import logging.handlers
import os
from datetime import datetime
from typing import Any, Dict, Optional

from ..utils import calculate_memory_usage_mb, get_process_id

LOG_LEVEL_ENV = "VCAGAN_LOG_LEVEL"


class LoggerManager:
    """
    Gestor de logging de una ejecución (generación de datos, entrenamiento,
    síntesis o evaluación).
    """

    def __init__(self, run_name: str, log_config: Dict[str, Any]):
        """
        Args:
            run_name: Nombre de la ejecución (subdirectorio y sufijo del logger)
            log_config: Claves log_directory, log_level, log_rotation
                (enabled, when, interval, backup_count) y loki
                (enabled, url, port, tags)
        """
        self.run_name = run_name
        self.log_config = log_config
        self.process_id = get_process_id()
        self.logger_name = f"vcagan.{run_name}"

        self._setup_logging()

    def _setup_logging(self) -> None:
        logger = logging.getLogger(self.logger_name)
        logger.handlers.clear()

        level_name = os.environ.get(LOG_LEVEL_ENV) or self.log_config.get("log_level", "INFO")
        level = getattr(logging, str(level_name).upper(), None)
        if not isinstance(level, int):
            raise ValueError(f"Unknown log level: {level_name}")
        logger.setLevel(level)

        formatter = self._create_formatter()

        log_dir = self.log_config.get("log_directory")
        rotation = self.log_config.get("log_rotation", {})
        if log_dir and rotation.get("enabled", True):
            run_log_dir = os.path.join(log_dir, self.run_name)
            os.makedirs(run_log_dir, exist_ok=True)
            logger.addHandler(self._create_file_handler(run_log_dir, formatter))

        logger.addHandler(self._create_console_handler(formatter))

        if self.log_config.get("loki", {}).get("enabled"):
            try:
                loki_handler = self._create_loki_handler()
                if loki_handler:
                    logger.addHandler(loki_handler)
            except Exception as e:
                logger.warning(f"Failed to setup Loki handler: {e}")

        logger.propagate = False

    def _create_formatter(self) -> logging.Formatter:
        format_string = (
            "%(asctime)s - %(name)s - PID:%(process)d - "
            "%(levelname)s - %(message)s"
        )
        return logging.Formatter(fmt=format_string, datefmt="%Y-%m-%d %H:%M:%S")

    def _create_file_handler(
        self, log_dir: str, formatter: logging.Formatter
    ) -> logging.handlers.TimedRotatingFileHandler:
        """
        Handler de archivo con rotación temporal en `<log_dir>/<run>.log`.
        """
        rotation = self.log_config.get("log_rotation", {})
        handler = logging.handlers.TimedRotatingFileHandler(
            filename=os.path.join(log_dir, f"{self.run_name}.log"),
            when=rotation.get("when", "D"),
            interval=rotation.get("interval", 1),
            backupCount=rotation.get("backup_count", 7),
            encoding="utf-8",
        )
        handler.setFormatter(formatter)
        return handler

    def _create_console_handler(self, formatter: logging.Formatter) -> logging.StreamHandler:
        handler = logging.StreamHandler()
        handler.setFormatter(formatter)
        return handler

    def _create_loki_handler(self) -> Optional[logging.Handler]:
        """
        Crea el handler de Loki si el paquete está disponible.

        Returns:
            Handler: Handler de Loki o None si no está disponible
        """
        try:
            import logging_loki

            loki_config = self.log_config["loki"]
            tags = {
                "run_name": self.run_name,
                "process_id": str(self.process_id),
                "system": "vcagan",
            }
            if loki_config.get("tags"):
                tags.update(loki_config["tags"])

            return logging_loki.LokiHandler(
                url=f"http://{loki_config['url']}:{loki_config['port']}/loki/api/v1/push",
                tags=tags,
                version="1",
            )
        except ImportError:
            return None
        except Exception as e:
            logging.getLogger(__name__).error(f"Failed to create Loki handler: {e}")
            return None

    def get_logger(self, name: str = None) -> logging.Logger:
        """
        Obtiene un logger hijo de la ejecución.

        Args:
            name: Componente (trainer, corpus, eval...)

        Returns:
            logging.Logger: `vcagan.<run>` o `vcagan.<run>.<name>`
        """
        if name:
            return logging.getLogger(f"{self.logger_name}.{name}")
        return logging.getLogger(self.logger_name)

    def get_main_logger(self) -> logging.Logger:
        return self.get_logger("main")

    def log_run_start(
        self,
        logger: logging.Logger,
        command: str,
        settings: Dict[str, Any],
        start_time: datetime = None,
    ) -> None:
        """
        Registra el inicio de una ejecución.

        Args:
            logger: Logger a usar
            command: Subcomando (train, eval...)
            settings: Parámetros relevantes de la ejecución
            start_time: Tiempo de inicio (opcional)
        """
        start_time = start_time or datetime.now()
        logger.info(f"=== {command.upper()} STARTED ===")
        logger.info(f"Run: {self.run_name}")
        for key, value in settings.items():
            logger.info(f"  {key}: {value}")
        logger.info(f"Start time: {start_time}")
        logger.info(f"Process ID: {self.process_id}")

    def log_run_end(
        self,
        logger: logging.Logger,
        command: str,
        success: bool,
        stats: Dict[str, Any],
        end_time: datetime = None,
    ) -> None:
        """
        Registra el fin de una ejecución y sus estadísticas.
        """
        end_time = end_time or datetime.now()
        status = "SUCCESS" if success else "FAILED"
        logger.info(f"=== {command.upper()} {status} ===")
        logger.info(f"End time: {end_time}")
        if stats:
            logger.info("Run statistics:")
            for key, value in stats.items():
                logger.info(f"  {key}: {value}")

    def log_training_step(self, logger: logging.Logger, step: int, losses: Dict[str, float]) -> None:
        formatted = ", ".join(f"{k}={v:.5f}" for k, v in losses.items())
        logger.info(f"Step {step}: {formatted}")

    def log_validation(self, logger: logging.Logger, step: int, metrics: Dict[str, float]) -> None:
        formatted = ", ".join(f"{k}={v:.5f}" for k, v in metrics.items())
        logger.info(f"Validation at step {step}: {formatted}")

    def log_error_with_context(
        self, logger: logging.Logger, error: Exception, context: Dict[str, Any]
    ) -> None:
        """
        Registra un error con contexto adicional.

        Args:
            logger: Logger a usar
            error: Excepción ocurrida
            context: Contexto adicional
        """
        logger.error(f"Error: {error}")
        logger.error(f"Error type: {type(error).__name__}")
        if context:
            logger.error("Context:")
            for key, value in context.items():
                logger.error(f"  {key}: {value}")

    def log_memory_usage(self, logger: logging.Logger, stage: str) -> None:
        try:
            logger.debug(f"Memory usage at {stage}: {calculate_memory_usage_mb():.2f} MB")
        except Exception:
            pass

    def cleanup(self) -> None:
        """Cierra y retira los handlers de la ejecución."""
        logger = logging.getLogger(self.logger_name)
        for handler in logger.handlers[:]:
            handler.close()
            logger.removeHandler(handler)

    def __del__(self) -> None:
        try:
            self.cleanup()
        except:
            pass
