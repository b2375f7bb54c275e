"""
Tests de rendimiento para la síntesis de VCA-GAN.
"""
