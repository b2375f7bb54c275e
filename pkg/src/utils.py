"""
Utilidades comunes de VCA-GAN
=============================

Funciones de ayuda para semillas, hilos de trabajo, rutas de
configuración, memoria del proceso y otras utilidades compartidas.
"""

import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

THREADS_ENV = "VCAGAN_THREADS"


def partitioned_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Generador independiente para una sub-secuencia de la semilla global.

    Args:
        seed: Semilla global
        *stream: Índices que identifican la sub-secuencia (muestra, paso...)

    Returns:
        np.random.Generator: Generador determinista para (seed, *stream)
    """
    return np.random.default_rng([int(seed), *[int(s) for s in stream]])


def resolve_worker_count(workers: Optional[int] = None) -> int:
    """
    Número de hilos de trabajo: argumento explícito, VCAGAN_THREADS o
    número de CPUs (máximo 8).

    Raises:
        ValueError: Si el valor resultante no es un entero positivo
    """
    if workers is None:
        raw = os.environ.get(THREADS_ENV)
        if raw:
            try:
                workers = int(raw)
            except ValueError:
                raise ValueError(f"{THREADS_ENV} must be an integer, got '{raw}'")
        else:
            workers = min(8, os.cpu_count() or 1)
    if workers < 1:
        raise ValueError(f"Worker count must be >= 1, got {workers}")
    return workers


def parse_bool(value: Any) -> bool:
    """
    Interpreta true/false, yes/no, on/off y 1/0.

    Raises:
        ValueError: Si el valor no es un booleano reconocible
    """
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "yes", "on", "1"):
        return True
    if text in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"Invalid boolean value: {value}")


def parse_int_list(value: Any) -> List[int]:
    """Lista de enteros desde "16,32,64" o una secuencia."""
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
        return [int(p) for p in parts]
    if isinstance(value, int):
        return [value]
    return [int(v) for v in value]


def get_config_name_from_path(config_path: str) -> str:
    """
    Obtiene el nombre de configuración desde la ruta del archivo.

    Args:
        config_path: Ruta del archivo de configuración

    Returns:
        str: Nombre de la configuración (sin extensión)
    """
    return os.path.splitext(os.path.basename(config_path))[0]


def safe_get_nested_dict(data: Dict, path: str, default: Any = None) -> Any:
    """
    Obtiene un valor de un diccionario anidado usando una ruta con puntos.

    Args:
        data: Diccionario fuente
        path: Ruta con puntos (ej: "model.generator_channels.0")
        default: Valor por defecto

    Returns:
        Any: Valor encontrado o default
    """
    try:
        current = data
        for key in path.split("."):
            current = current[int(key)] if key.isdigit() else current[key]
        return current
    except (KeyError, IndexError, TypeError):
        return default


def calculate_memory_usage_mb() -> float:
    """
    Calcula el uso de memoria actual en MB.

    Returns:
        float: Uso de memoria en MB
    """
    try:
        import psutil

        process = psutil.Process()
        return process.memory_info().rss / 1024 / 1024
    except ImportError:
        return 0.0


def get_process_id() -> int:
    return os.getpid()


def chunks(lst: Sequence, chunk_size: int) -> List[Sequence]:
    """
    Divide una secuencia en bloques de tamaño específico.

    Args:
        lst: Secuencia a dividir
        chunk_size: Tamaño de cada bloque

    Returns:
        List: Bloques en orden; el último puede ser más corto
    """
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    return [lst[i : i + chunk_size] for i in range(0, len(lst), chunk_size)]
