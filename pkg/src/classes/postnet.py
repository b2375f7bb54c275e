"""
Postnet: espectrograma mel → espectrograma lineal
=================================================
"""

import numpy as np

from . import tensor_engine as te
from .layers import Conv, Params, ResidualBlock, activation
from .model_config import ModelConfig, ModelError
from .parameter_store import ParameterStore
from .tensor_engine import Tensor


class Postnet:
    """
    Conv 1D (F → C_p) + 3 bloques residuales 1D + conv 1D (C_p → bins) con
    softplus. La salida se expresa en magnitudes divididas por `mag_scale`.
    """

    def __init__(
        self,
        store: ParameterStore,
        config: ModelConfig,
        mag_scale: float = 160.0,
        prefix: str = "postnet",
    ):
        self.config = config
        self.mag_scale = mag_scale
        self.act = activation(config.activation)
        width = config.postnet_channels
        self.conv_in = Conv(store, f"{prefix}.conv_in", config.n_mels, width, 5, 1, 2, rank=1)
        self.blocks = [
            ResidualBlock(store, f"{prefix}.block{i}", width, width, rank=1, act=config.activation)
            for i in range(config.postnet_blocks)
        ]
        self.conv_out = Conv(store, f"{prefix}.conv_out", width, config.linear_bins, 5, 1, 2, rank=1)

    def __call__(self, params: Params, mel: Tensor) -> Tensor:
        """
        Args:
            params: Parámetros
            mel: Mel normalizado (N, F, L) o (F, L)

        Returns:
            Tensor: Magnitudes escaladas no negativas (N, bins, L)

        Raises:
            ModelError: Si F no es el configurado
        """
        if mel.ndim == 2:
            mel = mel.reshape((1,) + mel.shape)
        if mel.ndim != 3 or mel.shape[1] != self.config.n_mels:
            raise ModelError(
                f"Postnet expects (N, {self.config.n_mels}, L) input, got {mel.shape}"
            )
        x = self.act(self.conv_in(params, mel))
        for block in self.blocks:
            x = block(params, x)
        return te.softplus(self.conv_out(params, x))

    def magnitudes(self, params: Params, mel: Tensor) -> np.ndarray:
        """Magnitudes lineales (bins × L) de un único mel, sin grafo."""
        with te.no_grad():
            out = self(params, mel)
        return out.data[0] * self.mag_scale
