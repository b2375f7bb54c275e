"""
Formatos de fichero del sistema
===============================

Lectura y escritura de:
- WAV PCM 16 bits mono (soundfile)
- MELB: espectrograma mel binario (magic, u32 versión, F, L, hop, sr, f32 LE)
- VID0: vídeo crudo (magic, u32 T, H, W, C, píxeles u8)
- VCAG: checkpoint de parámetros con nombre (v1 f32, v2 con byte de dtype)
- PGM (P5) en escala de grises y CSV de inspección
"""

import os
import struct
from collections import OrderedDict
from typing import Dict, Mapping, Optional, Sequence

import numpy as np
import soundfile as sf

from .audio_processor import MelSpectrogram, Waveform


class MediaFormatError(Exception):
    """Excepción para ficheros malformados o codificaciones no soportadas"""

    pass


MELB_MAGIC = b"MELB"
VID0_MAGIC = b"VID0"
VCAG_MAGIC = b"VCAG"

PCM_SCALE = 32767.0

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def _read_exact(handle, size: int, what: str) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise MediaFormatError(
            f"Truncated {what}: expected {size} bytes, got {len(data)}"
        )
    return data


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


# ----------------------------------------------------------------------
# WAV
# ----------------------------------------------------------------------


def write_wav(path: str, wave: Waveform) -> None:
    """
    Escribe PCM 16 bits mono. Las muestras se recortan a [-1, 1] y se
    cuantifican como round(x · 32767).

    Args:
        path: Fichero destino
        wave: Señal
    """
    _ensure_parent(path)
    pcm = np.round(np.clip(wave.samples, -1.0, 1.0) * PCM_SCALE).astype(np.int16)
    sf.write(path, pcm, wave.sample_rate, subtype="PCM_16", format="WAV")


def read_wav(path: str) -> Waveform:
    """
    Lee un WAV PCM 16 bits mono.

    Returns:
        Waveform: Muestras en [-1, 1] con la frecuencia de la cabecera

    Raises:
        MediaFormatError: Cabecera inválida, varios canales o codificación
            distinta de PCM_16
    """
    if not os.path.exists(path):
        raise MediaFormatError(f"WAV file not found: {path}")
    if os.path.getsize(path) == 0:
        raise MediaFormatError(f"Empty WAV file (no RIFF header): {path}")

    try:
        info = sf.info(path)
    except RuntimeError as e:
        raise MediaFormatError(f"Malformed WAV header in {path}: {e}")
    if info.format != "WAV":
        raise MediaFormatError(f"Unsupported container {info.format} in {path}")
    if info.subtype != "PCM_16":
        raise MediaFormatError(f"Unsupported WAV encoding {info.subtype} in {path}; expected PCM_16")
    if info.channels != 1:
        raise MediaFormatError(f"Expected mono WAV, got {info.channels} channels in {path}")

    pcm, sample_rate = sf.read(path, dtype="int16", always_2d=False)
    return Waveform(pcm.astype(np.float64) / PCM_SCALE, int(sample_rate))


# ----------------------------------------------------------------------
# MELB
# ----------------------------------------------------------------------


def write_melb(path: str, mel: MelSpectrogram) -> None:
    """Escribe un espectrograma mel en formato MELB versión 1."""
    _ensure_parent(path)
    values = np.ascontiguousarray(mel.values, dtype="<f4")
    n_mels, frames = values.shape
    with open(path, "wb") as handle:
        handle.write(MELB_MAGIC)
        handle.write(struct.pack("<5I", 1, n_mels, frames, mel.hop, mel.sample_rate))
        handle.write(values.tobytes())


def read_melb(path: str, fps: int = 25, normalized: bool = True) -> MelSpectrogram:
    """
    Lee un fichero MELB.

    Raises:
        MediaFormatError: Magic o versión desconocidos, o datos truncados
    """
    with open(path, "rb") as handle:
        magic = _read_exact(handle, 4, "MELB magic")
        if magic != MELB_MAGIC:
            raise MediaFormatError(f"Bad MELB magic {magic!r} in {path}")
        version, n_mels, frames, hop, sample_rate = struct.unpack(
            "<5I", _read_exact(handle, 20, "MELB header")
        )
        if version != 1:
            raise MediaFormatError(f"Unsupported MELB version {version} in {path}")
        raw = _read_exact(handle, 4 * n_mels * frames, "MELB data")

    values = np.frombuffer(raw, dtype="<f4").reshape(n_mels, frames).astype(np.float64)
    return MelSpectrogram(values, hop, sample_rate, fps, normalized)


# ----------------------------------------------------------------------
# VID0
# ----------------------------------------------------------------------


def write_video(path: str, frames: np.ndarray) -> None:
    """
    Escribe un clip T×H×W×C con valores en [0, 1] como píxeles u8.
    """
    frames = np.asarray(frames)
    if frames.ndim != 4:
        raise MediaFormatError(f"Video must be T×H×W×C, got shape {frames.shape}")
    _ensure_parent(path)
    pixels = np.round(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as handle:
        handle.write(VID0_MAGIC)
        handle.write(struct.pack("<4I", *pixels.shape))
        handle.write(pixels.tobytes())


def read_video(path: str) -> np.ndarray:
    """
    Lee un clip VID0.

    Returns:
        np.ndarray: T×H×W×C en [0, 1] (float64)

    Raises:
        MediaFormatError: Magic inválido, extensiones nulas o datos truncados
    """
    with open(path, "rb") as handle:
        magic = _read_exact(handle, 4, "VID0 magic")
        if magic != VID0_MAGIC:
            raise MediaFormatError(f"Bad VID0 magic {magic!r} in {path}")
        shape = struct.unpack("<4I", _read_exact(handle, 16, "VID0 header"))
        if any(extent == 0 for extent in shape):
            raise MediaFormatError(f"VID0 extents must be positive, got {shape} in {path}")
        raw = _read_exact(handle, int(np.prod(shape)), "VID0 pixels")

    return np.frombuffer(raw, dtype=np.uint8).reshape(shape).astype(np.float64) / 255.0


# ----------------------------------------------------------------------
# VCAG
# ----------------------------------------------------------------------


def write_checkpoint(path: str, arrays: Mapping[str, np.ndarray], version: int = None) -> int:
    """
    Escribe tensores con nombre en formato VCAG.

    Versión 1: datos f32. Versión 2: un byte de dtype por tensor (f32/f64).
    Sin versión explícita se usa 1 si todos los tensores son float32.

    Args:
        path: Fichero destino
        arrays: Tensores por nombre (orden conservado)
        version: Versión a escribir

    Returns:
        int: Versión escrita
    """
    if version is None:
        all_single = all(np.asarray(a).dtype == np.float32 for a in arrays.values())
        version = 1 if all_single else 2
    if version not in (1, 2):
        raise MediaFormatError(f"Unsupported VCAG version {version}")

    _ensure_parent(path)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as handle:
        handle.write(VCAG_MAGIC)
        handle.write(struct.pack("<II", version, len(arrays)))
        for name, array in arrays.items():
            array = np.asarray(array)
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<I", len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack("<B", array.ndim))
            handle.write(struct.pack(f"<{array.ndim}I", *array.shape))
            if version == 1:
                dtype = _DTYPE_CODES[0]
            else:
                code = 1 if array.dtype == np.float64 else 0
                dtype = _DTYPE_CODES[code]
                handle.write(struct.pack("<B", code))
            handle.write(np.ascontiguousarray(array, dtype=dtype).tobytes())
    os.replace(tmp_path, path)
    return version


def read_checkpoint(path: str) -> "OrderedDict[str, np.ndarray]":
    """
    Lee un checkpoint VCAG.

    Raises:
        MediaFormatError: Magic o versión desconocidos, o fichero truncado
    """
    if not os.path.exists(path):
        raise MediaFormatError(f"Checkpoint not found: {path}")

    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    with open(path, "rb") as handle:
        magic = _read_exact(handle, 4, "VCAG magic")
        if magic != VCAG_MAGIC:
            raise MediaFormatError(f"Not a VCAG checkpoint (magic {magic!r}): {path}")
        version, count = struct.unpack("<II", _read_exact(handle, 8, "VCAG header"))
        if version not in (1, 2):
            raise MediaFormatError(
                f"Unsupported VCAG checkpoint version {version} in {path}; "
                f"this build reads versions 1 and 2"
            )

        for _ in range(count):
            (name_length,) = struct.unpack("<I", _read_exact(handle, 4, "tensor name length"))
            name = _read_exact(handle, name_length, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(handle, 1, "tensor rank"))
            shape = struct.unpack(f"<{rank}I", _read_exact(handle, 4 * rank, "tensor extents"))
            dtype = _DTYPE_CODES[0]
            if version == 2:
                (code,) = struct.unpack("<B", _read_exact(handle, 1, "tensor dtype"))
                if code not in _DTYPE_CODES:
                    raise MediaFormatError(f"Unknown dtype code {code} for tensor {name}")
                dtype = _DTYPE_CODES[code]
            size = int(np.prod(shape)) if rank else 1
            raw = _read_exact(handle, size * dtype.itemsize, f"tensor {name}")
            native = np.float64 if dtype.itemsize == 8 else np.float32
            arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(native)

        if handle.read(1):
            raise MediaFormatError(f"Trailing bytes after {count} tensors in {path}")

    return arrays


# ----------------------------------------------------------------------
# PGM y CSV
# ----------------------------------------------------------------------


def write_pgm(path: str, image: np.ndarray, flip_vertical: bool = True) -> None:
    """
    Escribe una imagen P5 de 8 bits reescalando min–max a 0..255.

    Args:
        path: Fichero destino
        image: Matriz filas × columnas
        flip_vertical: Poner la fila 0 abajo (frecuencias bajas abajo)
    """
    image = np.asarray(image, dtype=np.float64)
    if flip_vertical:
        image = image[::-1]
    low, high = float(image.min()), float(image.max())
    span = high - low if high > low else 1.0
    pixels = np.round((image - low) / span * 255.0).astype(np.uint8)

    _ensure_parent(path)
    rows, cols = pixels.shape
    with open(path, "wb") as handle:
        handle.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        handle.write(pixels.tobytes())


def read_pgm(path: str) -> np.ndarray:
    """Lee un P5 de 8 bits escrito por write_pgm."""
    with open(path, "rb") as handle:
        content = handle.read()
    parts = content.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise MediaFormatError(f"Not a binary PGM file: {path}")
    cols, rows = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != rows * cols:
        raise MediaFormatError(f"PGM pixel count mismatch in {path}")
    return pixels.reshape(rows, cols)


def write_matrix_csv(
    path: str, matrix: np.ndarray, header: Optional[Sequence[str]] = None
) -> None:
    """Escribe una matriz como CSV (una fila por fila de la matriz)."""
    _ensure_parent(path)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    header_line = ",".join(header) if header else ""
    np.savetxt(path, matrix, delimiter=",", fmt="%.6g", header=header_line, comments="")


def write_summary(path: str, metrics: Dict[str, float]) -> None:
    """Resumen plano `metric=value` por línea."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as handle:
        for key, value in metrics.items():
            handle.write(f"{key}={value}\n")


def read_summary(path: str) -> Dict[str, float]:
    metrics: Dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, value = line.split("=", 1)
            try:
                metrics[key] = float(value)
            except ValueError:
                raise MediaFormatError(f"Invalid metric line '{line}' in {path}")
    return metrics
