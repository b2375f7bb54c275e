"""
Tests Unitarios
===============

Tests unitarios para cada módulo de src/classes.
"""
