"""
Clases de VCA-GAN
=================

Todas las clases principales organizadas por responsabilidad: motor de
tensores, audio, formatos de fichero, modelo, pérdidas, corpus,
entrenamiento, evaluación y orquestación.
"""

from .audio_processor import AudioProcessor, DspError, LinearSpectrogram, MelSpectrogram, Waveform
from .config_manager import ConfigManager, ConfigurationError
from .corpus_builder import Corpus, CorpusBuilder, CorpusError, TokenScript, load_corpus
from .evaluator import EvaluationError, Evaluator
from .experiment_orchestrator import ExperimentOrchestrator
from .gradient_checker import GradCheckError, GradientChecker
from .logger_manager import LoggerManager
from .losses import LossError, LossWeights
from .media_io import MediaFormatError
from .model_config import ModelConfig, ModelError
from .parameter_store import ParameterError, ParameterStore
from .tensor_engine import NonFiniteError, Tensor, TensorError
from .trainer import AdamOptimizer, NumericError, Trainer, TrainingConfig, TrainingError
from .vca_gan import VCAGAN

__all__ = [
    # Core classes
    "AdamOptimizer",
    "AudioProcessor",
    "ConfigManager",
    "Corpus",
    "CorpusBuilder",
    "Evaluator",
    "ExperimentOrchestrator",
    "GradientChecker",
    "LinearSpectrogram",
    "LoggerManager",
    "LossWeights",
    "MelSpectrogram",
    "ModelConfig",
    "ParameterStore",
    "Tensor",
    "TokenScript",
    "Trainer",
    "TrainingConfig",
    "VCAGAN",
    "Waveform",
    "load_corpus",
    # Exceptions
    "ConfigurationError",
    "CorpusError",
    "DspError",
    "EvaluationError",
    "GradCheckError",
    "LossError",
    "MediaFormatError",
    "ModelError",
    "NonFiniteError",
    "NumericError",
    "ParameterError",
    "TensorError",
    "TrainingError",
]

__version__ = "1.0.0"
