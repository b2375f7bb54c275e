"""
Configuración estructural del modelo
====================================

Dimensiones de los codificadores, generadores, discriminadores y postnet.
Los valores por defecto corresponden a la configuración de escritorio
(clips 16×32×32×1, F = 80, D = 64).
"""

from dataclasses import asdict, dataclass
from typing import Dict, Tuple

import numpy as np


class ModelError(Exception):
    """Excepción para formas o configuraciones inválidas del modelo"""

    pass


@dataclass
class ModelConfig:
    """Hiperparámetros estructurales de la red."""

    n_mels: int = 80
    frame_height: int = 32
    frame_width: int = 32
    frame_channels: int = 1
    d_model: int = 64
    d_noise: int = 16
    d_attention: int = 64
    alpha: int = 2
    visual_temporal_kernel: int = 5
    visual_channels: Tuple[int, ...] = (16, 32, 64, 64)
    visual_strides: Tuple[int, ...] = (1, 2, 2, 1)
    gru_layers: int = 2
    generator_channels: Tuple[int, ...] = (64, 32, 16)
    generator_blocks: Tuple[int, ...] = (6, 3, 3)
    discriminator_blocks: Tuple[int, ...] = (2, 3, 4)
    discriminator_base_channels: int = 16
    discriminator_max_channels: int = 64
    postnet_channels: int = 128
    postnet_blocks: int = 3
    linear_bins: int = 321
    activation: str = "leaky_relu"
    use_attention: bool = True
    single_discriminator: bool = False
    dtype: str = "float64"

    def __post_init__(self):
        for name in (
            "visual_channels",
            "visual_strides",
            "generator_channels",
            "generator_blocks",
            "discriminator_blocks",
        ):
            setattr(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    @property
    def stages(self) -> int:
        return len(self.generator_channels)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def stage_bins(self, stage: int) -> int:
        """Bandas mel de la etapa (0-based): F/4, F/2, F."""
        return self.n_mels // (2 ** (self.stages - 1 - stage))

    def stage_frames(self, stage: int, frames: int) -> int:
        """Tramas de la etapa para un clip de `frames` fotogramas: T, 2T, 4T."""
        return frames * (2**stage)

    def context_channels(self, stage: int) -> int:
        return self.generator_channels[stage] // self.alpha

    def validate(self) -> None:
        """
        Comprueba la coherencia de las dimensiones.

        Raises:
            ModelError: Si alguna restricción no se cumple
        """
        if self.stages != 3:
            raise ModelError(f"Exactly 3 generator stages are supported, got {self.stages}")
        if len(self.generator_blocks) != self.stages:
            raise ModelError("generator_blocks must have one entry per generator stage")
        if len(self.discriminator_blocks) != self.stages:
            raise ModelError("discriminator_blocks must have one entry per stage")
        if self.n_mels % 4 != 0:
            raise ModelError(f"n_mels must be divisible by 4, got {self.n_mels}")
        if self.d_model % 2 != 0:
            raise ModelError(f"d_model must be even for the bidirectional GRU, got {self.d_model}")
        if len(self.visual_channels) != len(self.visual_strides):
            raise ModelError("visual_channels and visual_strides must have equal length")
        if self.alpha < 1:
            raise ModelError(f"alpha must be >= 1, got {self.alpha}")
        for stage, width in enumerate(self.generator_channels[:-1]):
            if width % self.alpha != 0:
                raise ModelError(
                    f"alpha={self.alpha} must divide generator channels {width} at stage {stage + 1}"
                )
        if self.dtype not in ("float32", "float64"):
            raise ModelError(f"dtype must be float32 or float64, got {self.dtype}")

    def to_dict(self) -> Dict:
        return asdict(self)
