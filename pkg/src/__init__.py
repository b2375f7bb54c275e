"""
VCA-GAN de escritorio
=====================

Síntesis de voz a partir de vídeo de labios, organizada en:
- classes/: Todas las clases del sistema
- utils: Funciones utilitarias
"""

# Importar todas las clases desde el módulo classes
from .classes import *

# Importar funciones utilitarias (mantener acceso directo)
from . import utils

__all__ = [
    # Core classes (importadas desde classes/)
    'AudioProcessor',
    'ConfigManager',
    'CorpusBuilder',
    'Evaluator',
    'ExperimentOrchestrator',
    'LoggerManager',
    'Trainer',
    'VCAGAN',

    # Exceptions (importadas desde classes/)
    'ConfigurationError',
    'CorpusError',
    'DspError',
    'EvaluationError',
    'MediaFormatError',
    'ModelError',
    'NumericError',
    'TrainingError',

    # Utils module
    'utils',
]

__version__ = '1.0.0'
__author__ = 'VCA-GAN desk team'
