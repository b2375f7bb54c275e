#!/usr/bin/env python3
"""
Orchestrator de experimentos VCA-GAN
====================================

Une configuración, logging, corpus, modelo, entrenamiento y evaluación en
los subcomandos de la línea de comandos y traduce los errores de cada
módulo a códigos de salida.
"""

import os
import signal
import threading
import time
from datetime import datetime
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import tensor_engine as te
from .audio_processor import AudioProcessor, DspError
from .config_manager import ConfigManager, ConfigurationError, load_side_car
from .corpus_builder import CorpusBuilder, CorpusError, load_corpus
from .evaluator import EvaluationError, Evaluator
from .gradient_checker import GradCheckError
from .gradient_suite import CASES, run_suite
from .logger_manager import LoggerManager
from .losses import LossError
from .media_io import MediaFormatError, read_video, write_summary
from .model_config import ModelError
from .trainer import NumericError, Trainer, TrainingError
from .vca_gan import VCAGAN
from ..utils import partitioned_rng

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_INTERRUPTED = 130

# El orden importa: NumericError hereda de TrainingError
EXIT_CODES = (
    ((ConfigurationError, FileNotFoundError, ValueError), EXIT_USAGE),
    ((NumericError, te.NonFiniteError, GradCheckError), EXIT_NUMERIC),
    (
        (MediaFormatError, CorpusError, DspError, EvaluationError, ModelError, LossError, TrainingError, te.TensorError),
        EXIT_DATA,
    ),
)

BENCHMARK_LENGTHS = (8, 16, 32, 64)


def exit_code_for(error: BaseException) -> int:
    """Código de salida asociado a una excepción."""
    for types, code in EXIT_CODES:
        if isinstance(error, types):
            return code
    return EXIT_DATA


class InterruptedRun(Exception):
    """Ejecución detenida por una señal"""

    pass


class ExperimentOrchestrator:
    """
    Orchestrator de una ejecución de la línea de comandos.

    Cada subcomando es un método público; `run` los envuelve con el registro
    de inicio y fin y con la traducción de errores a códigos de salida.
    """

    def __init__(
        self,
        config_path: str = None,
        overrides: Mapping[str, Any] = None,
        run_name: str = "vcagan",
        verbose: bool = False,
    ):
        """
        Inicializa el orchestrator.

        Args:
            config_path: Fichero de configuración (opcional)
            overrides: Valores de la línea de comandos
            run_name: Nombre de la ejecución para los logs
            verbose: Nivel DEBUG en consola y fichero

        Raises:
            ConfigurationError: Si la configuración no es válida
        """
        overrides = dict(overrides or {})
        if verbose:
            overrides["log_level"] = "DEBUG"
        self.config_path = config_path
        self.overrides = overrides
        self.config = ConfigManager(config_path, overrides)

        self.logger_manager = LoggerManager(run_name, self.config.get_log_config())
        self.logger = self.logger_manager.get_main_logger()

        self.shutdown_event = threading.Event()
        self.trainer: Optional[Trainer] = None
        self.stats: Dict[str, Any] = {}
        self._setup_signal_handlers()

    def _setup_signal_handlers(self) -> None:
        """Configura los manejadores de señales."""

        def signal_handler(signum, frame):
            self.logger.info(f"Received signal {signum}, initiating graceful shutdown...")
            self.shutdown_event.set()
            if self.trainer is not None:
                self.trainer.request_stop()

        if threading.current_thread() is threading.main_thread():
            signal.signal(signal.SIGINT, signal_handler)
            signal.signal(signal.SIGTERM, signal_handler)

    # ------------------------------------------------------------------
    # Construcción de componentes
    # ------------------------------------------------------------------

    def _processor(self, config: ConfigManager = None) -> AudioProcessor:
        config = config or self.config
        return AudioProcessor(**config.get_audio_config(), logger=self.logger_manager.get_logger("dsp"))

    def _load_corpus(self, data_dir: str = None):
        root = data_dir or self.config.get_corpus_directory()
        corpus = load_corpus(
            root,
            fps=self.config.get("fps"),
            frames_per_token=self.config.get("frames_per_token"),
        )
        self.logger.info(f"Loaded corpus {root}: {len(corpus)} samples")
        return corpus

    def _load_model(self, checkpoint: str):
        """
        Modelo de un checkpoint con la configuración de su fichero `.cfg`.

        Returns:
            Tuple[VCAGAN, ConfigManager, Dict]: Modelo, configuración y
                entradas del checkpoint
        """
        if not os.path.exists(checkpoint):
            raise FileNotFoundError(f"Checkpoint not found: {checkpoint}")
        config = load_side_car(checkpoint, self._log_overrides())
        model = VCAGAN(config.get_model_config(), seed=config.get_seed(), logger=self.logger_manager.get_logger("model"))
        arrays = model.load(checkpoint)
        self.logger.info(f"Loaded checkpoint {checkpoint}: {model}")
        return model, config, arrays

    def _log_overrides(self) -> Dict[str, Any]:
        """Claves de logging de la ejecución actual, aplicadas también al `.cfg`."""
        return {k: v for k, v in self.overrides.items() if k.startswith(("log_", "loki_"))}

    @staticmethod
    def _postnet_trained(arrays: Mapping[str, np.ndarray]) -> bool:
        steps = arrays.get("trainer.postnet_steps")
        return steps is not None and int(steps[0]) > 0

    # ------------------------------------------------------------------
    # Subcomandos
    # ------------------------------------------------------------------

    def gen_data(self, out_dir: str, n_samples: int, seed: int = None) -> Dict[str, Any]:
        """Genera el corpus sintético."""
        seed = self.config.get_seed() if seed is None else seed
        builder = CorpusBuilder(
            self._processor(),
            **self.config.get_corpus_config(),
            logger=self.logger_manager.get_logger("corpus"),
        )
        entries = builder.build_corpus(out_dir, n_samples, seed)
        splits = {name: sum(e.split == name for e in entries) for name in ("train", "val", "test")}
        return {"samples": len(entries), **{f"split_{k}": v for k, v in splits.items()}, "out": out_dir}

    def train(self, out_dir: str, data_dir: str = None, resume: str = None) -> Dict[str, Any]:
        """
        Entrena la GAN y guarda `last.vcag` / `best.vcag` en `out_dir`.

        Raises:
            InterruptedRun: Si una señal detuvo el entrenamiento
        """
        corpus = self._load_corpus(data_dir)
        model = VCAGAN(
            self.config.get_model_config(),
            seed=self.config.get_seed(),
            logger=self.logger_manager.get_logger("model"),
        )
        self.logger.info(f"Model: {model}")
        self.trainer = Trainer(
            model,
            self.config.get_training_config(),
            self._processor(),
            logger=self.logger_manager.get_logger("trainer"),
            logger_manager=self.logger_manager,
            config_manager=self.config,
        )
        if self.shutdown_event.is_set():
            self.trainer.request_stop()
        summary = self.trainer.fit(corpus, out_dir, resume=resume)
        self.logger_manager.log_memory_usage(self.logger, "train end")

        stats = {
            "steps_completed": summary.steps_completed,
            "initial_val_recon": summary.initial_val_recon,
            "best_val_recon": summary.best_val_recon,
            "last_checkpoint": summary.last_checkpoint,
            "best_checkpoint": summary.best_checkpoint,
        }
        if summary.interrupted:
            self.stats.update(stats)
            raise InterruptedRun(f"Training interrupted at step {summary.steps_completed}")
        return stats

    def postnet_train(self, checkpoint: str, out_path: str, data_dir: str = None, steps: int = None) -> Dict[str, Any]:
        """Entrena la postnet sobre mels reales partiendo de un checkpoint GAN."""
        model, config, arrays = self._load_model(checkpoint)
        corpus = self._load_corpus(data_dir)
        self.trainer = Trainer(
            model,
            config.get_training_config(),
            self._processor(config),
            logger=self.logger_manager.get_logger("postnet"),
            logger_manager=self.logger_manager,
            config_manager=config,
        )
        if "trainer.step" in arrays:
            self.trainer.resume(checkpoint)
        history = self.trainer.fit_postnet(corpus, out_path, steps)
        if self.trainer.stop_requested:
            raise InterruptedRun(f"Postnet training interrupted after {len(history)} steps")
        return {
            "postnet_steps": len(history),
            "first_loss": history[0] if history else None,
            "final_loss": history[-1] if history else None,
            "checkpoint": out_path,
        }

    def synth(self, checkpoint: str, video: str, out_dir: str) -> Dict[str, Any]:
        """Mel, WAV y mapas de atención de un clip VID0."""
        model, config, arrays = self._load_model(checkpoint)
        clip = read_video(video)
        evaluator = Evaluator(
            model,
            self._processor(config),
            use_postnet=self._postnet_trained(arrays),
            griffin_lim_iters=config.get("griffin_lim_iters"),
            logger=self.logger_manager.get_logger("synth"),
        )
        stem = os.path.splitext(os.path.basename(video))[0]
        paths = evaluator.export_artifacts(clip, out_dir, stem)
        return {"frames": clip.shape[0], **paths}

    def evaluate(
        self,
        checkpoint: str,
        split: str = "test",
        data_dir: str = None,
        out_path: str = None,
        scorer: str = None,
    ) -> Dict[str, Any]:
        """
        Métricas del split escritas como `métrica=valor`.

        Args:
            checkpoint: Modelo a evaluar
            split: train, val o test
            data_dir: Corpus (por defecto `corpus_directory`)
            out_path: Resumen (por defecto `metrics_<split>.txt` junto al checkpoint)
            scorer: Checkpoint cuyos codificadores puntúan la sincronía
        """
        model, config, arrays = self._load_model(checkpoint)
        scorer_model = self._load_model(scorer)[0] if scorer else None
        corpus = self._load_corpus(data_dir)
        evaluator = Evaluator(
            model,
            self._processor(config),
            scorer=scorer_model,
            use_postnet=self._postnet_trained(arrays),
            **config.get_eval_config(),
            logger=self.logger_manager.get_logger("eval"),
        )
        report = evaluator.evaluate(corpus, split)
        out_path = out_path or os.path.join(os.path.dirname(os.path.abspath(checkpoint)), f"metrics_{split}.txt")
        write_summary(out_path, report.metrics)
        self.logger.info(f"Metrics summary written to {out_path}")
        return {**report.metrics, "summary": out_path}

    def gradcheck(self, seeds: int = 10, tolerance: float = 1e-4, cases: Sequence[str] = None) -> Dict[str, Any]:
        """
        Batería completa de diferencias finitas.

        Raises:
            ValueError: Caso desconocido
            GradCheckError: Si algún caso supera la tolerancia
        """
        unknown = [name for name in cases or () if name not in CASES]
        if unknown:
            raise ValueError(f"Unknown gradient check cases {unknown}; available: {', '.join(CASES)}")
        report = run_suite(
            range(seeds), tolerance, cases, logger=self.logger_manager.get_logger("gradcheck")
        )
        stats = {"cases": len(report.errors), "seconds": round(report.seconds, 2)}
        stats["max_relative_error"] = max(report.errors.values()) if report.errors else 0.0
        if not report.passed:
            self.stats.update(stats)
            raise GradCheckError(
                "Gradient check failed for: "
                + ", ".join(f"{name} ({report.errors[name]:.3e})" for name in report.failures)
            )
        return stats

    def benchmark(
        self,
        checkpoint: str = None,
        lengths: Sequence[int] = BENCHMARK_LENGTHS,
        repeats: int = 3,
    ) -> Dict[str, Any]:
        """
        Tiempo de síntesis frente a T: pendiente, R² del ajuste lineal y
        número de ejecuciones del generador por llamada.
        """
        if checkpoint:
            model, config, _ = self._load_model(checkpoint)
        else:
            config = self.config
            model = VCAGAN(config.get_model_config(), seed=config.get_seed())
        model_config = model.config
        rng = partitioned_rng(config.get_seed(), 3)

        timings: List[float] = []
        stack_calls: List[int] = []
        for frames in lengths:
            clip = rng.uniform(
                0.0, 1.0, (frames, model_config.frame_height, model_config.frame_width, model_config.frame_channels)
            )
            best = float("inf")
            for _ in range(repeats):
                model.reset_counters()
                start = time.perf_counter()
                with te.no_grad():
                    model.synthesize(clip)
                best = min(best, time.perf_counter() - start)
                stack_calls.append(model.counter_snapshot()["generator_stack"])
            timings.append(best)
            self.logger.info(f"Synthesis T={frames}: {best * 1000:.1f} ms")

        slope, r_squared = linear_fit(lengths, timings)
        return {
            "lengths": ",".join(str(t) for t in lengths),
            "seconds": ",".join(f"{t:.6f}" for t in timings),
            "slope_seconds_per_frame": slope,
            "r_squared": r_squared,
            "generator_stack_calls_per_synthesis": max(stack_calls),
        }

    def validate_config(self) -> Dict[str, Any]:
        """La configuración ya se validó al construir el orchestrator."""
        return {"config": self.config.get_config_name(), "keys": len(self.config.to_dict())}

    # ------------------------------------------------------------------
    # Ejecución
    # ------------------------------------------------------------------

    def run(self, command: str, action: Callable[..., Dict[str, Any]], **kwargs) -> int:
        """
        Ejecuta un subcomando y devuelve su código de salida.

        Args:
            command: Nombre del subcomando (para los logs)
            action: Método del orchestrator
            **kwargs: Argumentos del método

        Returns:
            int: 0 éxito, 1 uso/configuración, 2 datos, 3 numérico, 130 interrumpido
        """
        start_time = datetime.now()
        self.logger_manager.log_run_start(self.logger, command, kwargs, start_time)
        try:
            self.stats = dict(action(**kwargs) or {})
            code = EXIT_OK
        except InterruptedRun as e:
            self.logger.warning(str(e))
            code = EXIT_INTERRUPTED
        except KeyboardInterrupt:
            self.logger.warning(f"{command} interrupted")
            code = EXIT_INTERRUPTED
        except Exception as e:
            self.logger_manager.log_error_with_context(self.logger, e, {"command": command, **kwargs})
            code = exit_code_for(e)

        end_time = datetime.now()
        self.stats["duration_seconds"] = round((end_time - start_time).total_seconds(), 3)
        self.stats["exit_code"] = code
        self.logger_manager.log_run_end(self.logger, command, code == EXIT_OK, self.stats, end_time)
        return code

    def get_stats(self) -> Dict[str, Any]:
        return self.stats.copy()

    def cleanup(self) -> None:
        """Limpia recursos del orchestrator."""
        self.trainer = None
        self.logger_manager.cleanup()


def linear_fit(xs: Sequence[float], ys: Sequence[float]):
    """
    Ajuste por mínimos cuadrados y = a·x + b.

    Returns:
        Tuple[float, float]: Pendiente a y coeficiente de determinación R²
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    residual = np.sum((y - (slope * x + intercept)) ** 2)
    total = np.sum((y - y.mean()) ** 2)
    r_squared = 1.0 - residual / total if total > 0 else 1.0
    return float(slope), float(r_squared)
