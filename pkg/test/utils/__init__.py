"""
Utilidades de Testing
=====================

Fábricas de modelos, corpus y entrenadores de tamaño mínimo.
"""
