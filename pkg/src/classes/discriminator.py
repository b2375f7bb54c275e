"""
Discriminadores multiescala condicionales e incondicionales
===========================================================

Un discriminador por resolución con tronco convolucional compartido
(2, 3 y 4 bloques residuales de stride 2) y dos cabezas: incondicional y
condicionada por M(C_v), la media temporal de los rasgos visuales
globales, concatenada como canales extra sobre el mapa final del tronco.
"""

from dataclasses import dataclass
from typing import List, Optional

from . import tensor_engine as te
from .layers import Conv, Params, ResidualBlock, activation
from .model_config import ModelConfig, ModelError
from .parameter_store import ParameterStore
from .tensor_engine import Tensor


@dataclass
class DiscriminatorScores:
    """Logits (N,) de ambas cabezas de una etapa."""

    unconditional: Tensor
    conditional: Tensor

    def probabilities(self):
        """Sigmoides de ambas cabezas como arrays."""
        return (
            te.sigmoid(self.unconditional.detach()).data,
            te.sigmoid(self.conditional.detach()).data,
        )


def temporal_average(context: Tensor) -> Tensor:
    """M: media temporal de C_v (N, T, D) → (N, D)."""
    return te.mean(context, axis=1)


class StageDiscriminator:
    """D_i para la resolución F_i × T_i."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        config: ModelConfig,
        bins: int,
        blocks: int,
    ):
        self.bins = bins
        self.act = activation(config.activation)
        self.trunk = []
        c_in = 1
        width = config.discriminator_base_channels
        for index in range(blocks):
            self.trunk.append(
                ResidualBlock(
                    store, f"{name}.block{index}", c_in, width, stride=2, act=config.activation
                )
            )
            c_in = width
            width = min(2 * width, config.discriminator_max_channels)

        self.uncond_head = Conv(store, f"{name}.uncond", c_in, 1, 1)
        self.cond_fuse = Conv(store, f"{name}.cond_fuse", c_in + config.d_model, c_in, 1)
        self.cond_head = Conv(store, f"{name}.cond", c_in, 1, 1)

    def __call__(self, params: Params, mel: Tensor, condition: Tensor) -> DiscriminatorScores:
        """
        Args:
            params: Parámetros
            mel: (N, F_i, T_i)
            condition: M(C_v) (N, D)

        Raises:
            ModelError: Si la resolución no es la de la etapa
        """
        if mel.ndim != 3 or mel.shape[1] != self.bins:
            raise ModelError(
                f"Discriminator expects (N, {self.bins}, T_i) input, got {mel.shape}"
            )
        n, f, t = mel.shape
        h = mel.reshape((n, 1, f, t))
        for block in self.trunk:
            h = block(params, h)

        unconditional = te.mean(self.uncond_head(params, h), axis=(1, 2, 3))

        d = condition.shape[-1]
        spread = te.broadcast_to(
            condition.reshape((n, d, 1, 1)), (n, d, h.shape[2], h.shape[3])
        )
        fused = self.act(self.cond_fuse(params, te.concat([h, spread], axis=1)))
        conditional = te.mean(self.cond_head(params, fused), axis=(1, 2, 3))
        return DiscriminatorScores(unconditional, conditional)


class MultiScaleDiscriminator:
    """
    Conjunto de discriminadores por etapa. En modo de discriminador único
    solo existe el de la resolución final.
    """

    def __init__(self, store: ParameterStore, config: ModelConfig, prefix: str = "disc"):
        self.config = config
        self.stages: List[int] = (
            [config.stages - 1] if config.single_discriminator else list(range(config.stages))
        )
        self.discriminators = {
            stage: StageDiscriminator(
                store,
                f"{prefix}.d{stage + 1}",
                config,
                config.stage_bins(stage),
                config.discriminator_blocks[stage],
            )
            for stage in self.stages
        }

    def __call__(
        self, params: Params, mels: List[Tensor], condition: Tensor
    ) -> List[DiscriminatorScores]:
        """
        Puntúa las escalas activas.

        Args:
            params: Parámetros
            mels: Un espectrograma por etapa del generador
            condition: M(C_v)

        Returns:
            List[DiscriminatorScores]: Una entrada por etapa activa
        """
        if len(mels) != self.config.stages:
            raise ModelError(
                f"Expected {self.config.stages} mel scales, got {len(mels)}"
            )
        return [self.discriminators[s](params, mels[s], condition) for s in self.stages]

    def stage(self, index: int) -> Optional[StageDiscriminator]:
        return self.discriminators.get(index)
