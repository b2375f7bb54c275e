"""
Tests de Integración
====================

Ciclo completo de la línea de comandos con un modelo diminuto.
"""
