"""
Generador multiescala con atención de contexto visual
=====================================================

ψ_1 genera la representación inicial a partir de R(F_v) y el ruido z;
cada refinador concatena la representación con el contexto visual global
obtenido por atención, sube ×2 (bilineal) frecuencia y tiempo y aplica
bloques residuales. Las cabezas mel proyectan cada representación a un
espectrograma en (-1, 1).

Formas (N omitido): F_a^1 (D_1, F/4, T) → F_a^2 (D_2, F/2, 2T) →
F_a^3 (D_3, F, 4T).
"""

import math
from typing import Tuple

import numpy as np

from . import tensor_engine as te
from .layers import Conv, Params, ResidualBlock
from .model_config import ModelConfig, ModelError
from .parameter_store import ParameterStore
from .tensor_engine import Tensor


def repeat_spectral(local: Tensor, bins: int) -> Tensor:
    """
    Operador R: replica F_v (N, T, D) a lo largo del eje espectral.

    Returns:
        Tensor: (N, D, bins, T) con todas las filas espectrales iguales
    """
    n, frames, d = local.shape
    columns = te.transpose(local, (0, 2, 1)).reshape((n, d, 1, frames))
    return te.broadcast_to(columns, (n, d, bins, frames))


def flatten_speech(speech: Tensor) -> Tensor:
    """Operador 𝓕: (N, D_i, F_i, T_i) → (N, T_i, F_i·D_i)."""
    n, d, f, t = speech.shape
    return te.transpose(speech, (0, 3, 2, 1)).reshape((n, t, f * d))


def split_speech(flat: Tensor, bins: int) -> Tensor:
    """Operador 𝓢: (N, T_i, F_i·C) → (N, C, F_i, T_i)."""
    n, t, width = flat.shape
    if width % bins != 0:
        raise ModelError(f"Cannot split width {width} into {bins} spectral bins")
    return te.transpose(flat.reshape((n, t, bins, width // bins)), (0, 3, 2, 1))


class VisualContextAttention:
    """
    Atención audio-visual de una etapa.

    Q = 𝓕(F_a^i) W_q, K = C_v W_k, V = C_v W_v,
    A = softmax(Q Kᵀ / √d), F_c^i = 𝓢(A V).
    """

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        bins: int,
        channels: int,
        d_model: int,
        d_attention: int,
        alpha: int,
    ):
        if channels % alpha != 0:
            raise ModelError(
                f"Reduction ratio alpha={alpha} must divide channel width {channels}"
            )
        self.bins = bins
        self.channels = channels
        self.d_attention = d_attention
        self.out_channels = channels // alpha
        self.w_q = f"{name}.w_q"
        self.w_k = f"{name}.w_k"
        self.w_v = f"{name}.w_v"
        store.create(self.w_q, (bins * channels, d_attention), fan_in=bins * channels)
        store.create(self.w_k, (d_model, d_attention), fan_in=d_model)
        store.create(self.w_v, (d_model, bins * self.out_channels), fan_in=d_model)

    def __call__(
        self, params: Params, speech: Tensor, context: Tensor
    ) -> Tuple[Tensor, Tensor]:
        """
        Args:
            params: Parámetros
            speech: F_a^i (N, D_i, F_i, T_i)
            context: C_v (N, T, D)

        Returns:
            Tuple[Tensor, Tensor]: F_c^i (N, D_i/α, F_i, T_i) y mapa A (N, T_i, T)
        """
        if speech.shape[1] != self.channels or speech.shape[2] != self.bins:
            raise ModelError(
                f"Attention expects ({self.channels}, {self.bins}, T_i) speech, "
                f"got {speech.shape[1:]}"
            )
        queries = te.matmul(flatten_speech(speech), params[self.w_q])
        keys = te.matmul(context, params[self.w_k])
        values = te.matmul(context, params[self.w_v])

        scores = te.matmul(queries, te.transpose(keys, (0, 2, 1)))
        weights = te.softmax_rows(scores * (1.0 / math.sqrt(self.d_attention)))
        attended = te.matmul(weights, values)
        return split_speech(attended, self.bins), weights


class CoarseGenerator:
    """ψ_1: [R(F_v); z] → F_a^1 con 6 bloques residuales."""

    def __init__(self, store: ParameterStore, config: ModelConfig, prefix: str = "psi.g1"):
        c_in = config.d_model + config.d_noise
        width = config.generator_channels[0]
        self.bins = config.stage_bins(0)
        self.d_noise = config.d_noise
        self.blocks = []
        for index in range(config.generator_blocks[0]):
            self.blocks.append(
                ResidualBlock(store, f"{prefix}.block{index}", c_in, width, act=config.activation)
            )
            c_in = width

    def __call__(self, params: Params, local: Tensor, noise: Tensor) -> Tensor:
        n, frames, _ = local.shape
        expected = (n, self.d_noise, self.bins, frames)
        if noise.shape != expected:
            raise ModelError(f"Noise must have shape {expected}, got {noise.shape}")
        x = te.concat([repeat_spectral(local, self.bins), noise], axis=1)
        for block in self.blocks:
            x = block(params, x)
        return x


class Refiner:
    """ψ_i (i ≥ 2): [F_a^i; F_c^i] → subida ×2 → bloques residuales."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        c_in: int,
        c_out: int,
        blocks: int,
        act: str,
    ):
        self.blocks = []
        for index in range(blocks):
            self.blocks.append(ResidualBlock(store, f"{name}.block{index}", c_in, c_out, act=act))
            c_in = c_out

    def __call__(self, params: Params, speech: Tensor, context: Tensor) -> Tensor:
        if speech.shape[0] != context.shape[0] or speech.shape[2:] != context.shape[2:]:
            raise ModelError(
                f"Speech {speech.shape} and context {context.shape} extents differ"
            )
        x = te.concat([speech, context], axis=1)
        x = te.bilinear_resize(x, 2 * x.shape[2], 2 * x.shape[3])
        for block in self.blocks:
            x = block(params, x)
        return x


class MelHead:
    """Conv 1×1 a un canal + tanh → ŷ_i (N, F_i, T_i)."""

    def __init__(self, store: ParameterStore, name: str, channels: int):
        self.conv = Conv(store, name, channels, 1, 1)

    def __call__(self, params: Params, speech: Tensor) -> Tensor:
        out = te.tanh(self.conv(params, speech))
        n, _, f, t = out.shape
        return out.reshape((n, f, t))


class Generator:
    """Pila completa ψ_1..ψ_n con atención y cabezas mel."""

    def __init__(self, store: ParameterStore, config: ModelConfig):
        self.config = config
        self.coarse = CoarseGenerator(store, config)
        self.attention = []
        self.refiners = []
        self.heads = [MelHead(store, "heads.h1", config.generator_channels[0])]

        for stage in range(1, config.stages):
            prev = config.generator_channels[stage - 1]
            if config.use_attention:
                self.attention.append(
                    VisualContextAttention(
                        store,
                        f"attn.s{stage}",
                        config.stage_bins(stage - 1),
                        prev,
                        config.d_model,
                        config.d_attention,
                        config.alpha,
                    )
                )
            self.refiners.append(
                Refiner(
                    store,
                    f"psi.g{stage + 1}",
                    prev + config.context_channels(stage - 1),
                    config.generator_channels[stage],
                    config.generator_blocks[stage],
                    config.activation,
                )
            )
            self.heads.append(
                MelHead(store, f"heads.h{stage + 1}", config.generator_channels[stage])
            )

    def context_for(self, params: Params, stage: int, speech: Tensor, context: Tensor):
        """Contexto visual global de la etapa (ceros sin atención)."""
        if self.config.use_attention:
            return self.attention[stage](params, speech, context)
        n, channels, f, t = speech.shape
        zeros = np.zeros((n, channels // self.config.alpha, f, t), dtype=speech.dtype)
        return Tensor(zeros), None
