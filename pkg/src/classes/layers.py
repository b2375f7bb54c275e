"""
Capas de red sobre el almacén de parámetros
===========================================

Cada capa registra sus parámetros en un ParameterStore al construirse y
en el forward los lee del mapeo que se le pasa, de modo que un mismo
objeto sirve con parámetros entrenables o con una vista congelada.
"""

from typing import Dict, Mapping, Sequence, Union

import numpy as np

from . import tensor_engine as te
from .parameter_store import ParameterStore
from .tensor_engine import Tensor

Params = Mapping[str, Tensor]

ACTIVATIONS = {
    "leaky_relu": te.leaky_relu,
    "silu": te.silu,
    "tanh": te.tanh,
}


def activation(name: str):
    """Función de activación por nombre (leaky_relu usa pendiente 0.2)."""
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"Unknown activation: {name}")


class Conv:
    """Convolución de rango 1, 2 o 3 con sesgo opcional."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        c_in: int,
        c_out: int,
        kernel: Union[int, Sequence[int]],
        stride: Union[int, Sequence[int]] = 1,
        padding: Union[int, Sequence[int]] = 0,
        rank: int = 2,
        bias: bool = True,
    ):
        kernel = (kernel,) * rank if isinstance(kernel, int) else tuple(kernel)
        fan_in = c_in * int(np.prod(kernel))
        self.name = name
        self.rank = rank
        self.stride = stride
        self.padding = padding
        self.weight = f"{name}.weight"
        self.bias = f"{name}.bias" if bias else None
        self.c_out = c_out

        store.create(self.weight, (c_out, c_in) + kernel, fan_in=fan_in)
        if bias:
            store.create(self.bias, (c_out,), fan_in=fan_in)

    def __call__(self, params: Params, x: Tensor) -> Tensor:
        return te.conv(
            x,
            params[self.weight],
            params[self.bias] if self.bias else None,
            stride=self.stride,
            padding=self.padding,
            rank=self.rank,
        )


class Linear:
    """Proyección afín sobre el último eje: y = x Wᵀ + b."""

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        d_in: int,
        d_out: int,
        bias: bool = True,
    ):
        self.weight = f"{name}.weight"
        self.bias = f"{name}.bias" if bias else None
        store.create(self.weight, (d_out, d_in), fan_in=d_in)
        if bias:
            store.create(self.bias, (d_out,), fan_in=d_in)

    def __call__(self, params: Params, x: Tensor) -> Tensor:
        out = te.matmul(x, te.transpose(params[self.weight]))
        if self.bias:
            out = out + params[self.bias]
        return out


class ResidualBlock:
    """
    Bloque residual conv-act-conv con atajo.

    El atajo es la identidad cuando canales y stride no cambian la forma y
    una convolución 1×1 (con el mismo stride) en otro caso; la activación
    se aplica tras la suma.
    """

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        c_in: int,
        c_out: int,
        rank: int = 2,
        kernel: int = 3,
        stride: int = 1,
        act: str = "leaky_relu",
    ):
        pad = kernel // 2
        self.act = activation(act)
        self.conv1 = Conv(store, f"{name}.conv1", c_in, c_out, kernel, stride, pad, rank)
        self.conv2 = Conv(store, f"{name}.conv2", c_out, c_out, kernel, 1, pad, rank)
        self.skip = None
        if c_in != c_out or stride != 1:
            self.skip = Conv(store, f"{name}.skip", c_in, c_out, 1, stride, 0, rank)

    def __call__(self, params: Params, x: Tensor) -> Tensor:
        h = self.act(self.conv1(params, x))
        h = self.conv2(params, h)
        shortcut = self.skip(params, x) if self.skip else x
        return self.act(h + shortcut)


class BiGRU:
    """
    GRU bidireccional de varias capas (ecuaciones estándar con puerta de
    reinicio aplicada tras la proyección oculta).
    """

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        d_in: int,
        hidden: int,
        layers: int = 2,
    ):
        self.hidden = hidden
        self.layers: list = []
        for layer in range(layers):
            layer_in = d_in if layer == 0 else 2 * hidden
            directions = {}
            for direction in ("fwd", "bwd"):
                prefix = f"{name}.l{layer}.{direction}"
                names = {
                    "w_ih": f"{prefix}.w_ih",
                    "w_hh": f"{prefix}.w_hh",
                    "b_ih": f"{prefix}.b_ih",
                    "b_hh": f"{prefix}.b_hh",
                }
                store.create(names["w_ih"], (3 * hidden, layer_in), fan_in=hidden)
                store.create(names["w_hh"], (3 * hidden, hidden), fan_in=hidden)
                store.create(names["b_ih"], (3 * hidden,), fan_in=hidden)
                store.create(names["b_hh"], (3 * hidden,), fan_in=hidden)
                directions[direction] = names
            self.layers.append(directions)

    @staticmethod
    def _bind(params: Params, names: Dict[str, str]) -> Dict[str, Tensor]:
        return {key: params[value] for key, value in names.items()}

    def __call__(self, params: Params, seq: Tensor) -> Tensor:
        out = seq
        for directions in self.layers:
            out = te.gru_bidirectional(
                out,
                self._bind(params, directions["fwd"]),
                self._bind(params, directions["bwd"]),
            )
        return out
