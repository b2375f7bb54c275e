"""
Codificadores visuales y de audio
=================================

- LocalVisualEncoder (φ_v): conv 3D + pila residual 2D por fotograma con
  pooling espacial global → rasgos locales F_v (N, T, D).
- GlobalVisualEncoder (φ_c): GRU bidireccional de 2 capas + lineal → C_v.
- AudioEncoder (φ_a): dos conv 1D de stride 2 + bloque residual → F_a
  (N, T, D), alineado en tiempo con F_v.
"""

from . import tensor_engine as te
from .layers import BiGRU, Conv, Linear, Params, ResidualBlock, activation
from .model_config import ModelConfig, ModelError
from .parameter_store import ParameterStore
from .tensor_engine import Tensor


class LocalVisualEncoder:
    """φ_v: clip (N, T, H, W, C) → F_v (N, T, D)."""

    def __init__(self, store: ParameterStore, config: ModelConfig, prefix: str = "phi_v"):
        self.config = config
        self.act = activation(config.activation)
        kt = config.visual_temporal_kernel
        channels = config.visual_channels

        self.front = Conv(
            store,
            f"{prefix}.conv3d",
            config.frame_channels,
            channels[0],
            kernel=(kt, 5, 5),
            stride=(1, 2, 2),
            padding=(kt // 2, 2, 2),
            rank=3,
        )
        self.blocks = []
        c_in = channels[0]
        for index, (c_out, stride) in enumerate(zip(channels, config.visual_strides)):
            self.blocks.append(
                ResidualBlock(
                    store, f"{prefix}.block{index}", c_in, c_out, rank=2,
                    stride=stride, act=config.activation,
                )
            )
            c_in = c_out
        self.projection = None
        if c_in != config.d_model:
            self.projection = Linear(store, f"{prefix}.proj", c_in, config.d_model)

    def __call__(self, params: Params, clip: Tensor) -> Tensor:
        if clip.ndim == 4:
            clip = clip.reshape((1,) + clip.shape)
        if clip.ndim != 5:
            raise ModelError(f"Video clip must be (N, T, H, W, C), got {clip.shape}")
        n, frames, height, width, chans = clip.shape
        if frames < 1:
            raise ModelError("Video clip must contain at least one frame")
        if chans != self.config.frame_channels:
            raise ModelError(
                f"Clip has {chans} channels, model expects {self.config.frame_channels}"
            )

        # (N, C, T, H, W) para la convolución espacio-temporal
        x = self.act(self.front(params, te.transpose(clip, (0, 4, 1, 2, 3))))
        c, h, w = x.shape[1], x.shape[3], x.shape[4]
        x = te.transpose(x, (0, 2, 1, 3, 4)).reshape((n * frames, c, h, w))

        for block in self.blocks:
            x = block(params, x)

        pooled = te.mean(x, axis=(2, 3)).reshape((n, frames, x.shape[1]))
        if self.projection is not None:
            pooled = self.projection(params, pooled)
        return pooled


class GlobalVisualEncoder:
    """φ_c: F_v (N, T, D) → C_v (N, T, D)."""

    def __init__(self, store: ParameterStore, config: ModelConfig, prefix: str = "phi_c"):
        d = config.d_model
        self.gru = BiGRU(store, f"{prefix}.gru", d, d // 2, layers=config.gru_layers)
        self.linear = Linear(store, f"{prefix}.linear", d, d)

    def __call__(self, params: Params, local: Tensor) -> Tensor:
        if local.shape[-2] < 1:
            raise ModelError("Global visual encoder requires T >= 1")
        return self.linear(params, self.gru(params, local))


class AudioEncoder:
    """φ_a: mel (N, F, 4T) → F_a (N, T, D)."""

    def __init__(self, store: ParameterStore, config: ModelConfig, prefix: str = "phi_a"):
        d = config.d_model
        self.config = config
        self.act = activation(config.activation)
        self.conv1 = Conv(store, f"{prefix}.conv1", config.n_mels, d, 5, 2, 2, rank=1)
        self.conv2 = Conv(store, f"{prefix}.conv2", d, d, 5, 2, 2, rank=1)
        self.block = ResidualBlock(store, f"{prefix}.block", d, d, rank=1, act=config.activation)

    def __call__(self, params: Params, mel: Tensor) -> Tensor:
        if mel.ndim == 2:
            mel = mel.reshape((1,) + mel.shape)
        if mel.ndim != 3 or mel.shape[1] != self.config.n_mels:
            raise ModelError(
                f"Audio encoder expects (N, {self.config.n_mels}, L), got {mel.shape}"
            )
        if mel.shape[2] % 4 != 0:
            raise ModelError(
                f"Mel frame count {mel.shape[2]} is not divisible by 4"
            )
        x = self.act(self.conv1(params, mel))
        x = self.act(self.conv2(params, x))
        x = self.block(params, x)
        return te.transpose(x, (0, 2, 1))
