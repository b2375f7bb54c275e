"""
Sistema de Testing para VCA-GAN
===============================

Tests unitarios, de integración y de rendimiento del motor de gradientes,
la cadena de audio, el modelo, el entrenamiento y la evaluación.
"""

__version__ = "1.0.0"
