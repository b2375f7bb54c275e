"""
Motor de tensores con diferenciación automática en modo reverso
==============================================================

Tensor denso sobre numpy con un registro topológico de operaciones (Tape)
y todas las primitivas que necesita el modelo: álgebra elemental con
broadcasting, matmul, reducciones, cambios de forma, convoluciones 1D/2D/3D,
celda GRU bidireccional, softmax por filas, redimensionado bilineal y
similitud coseno.

Convenciones:
- Las convoluciones son correlación cruzada (sin voltear el kernel).
- Tensores con batch opcional en cabeza: (N, C, *espacial) o (C, *espacial).
- El redimensionado bilineal usa la convención align-corners=False.
"""

import threading
from contextlib import contextmanager
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit


class TensorError(Exception):
    """Excepción para errores de forma o de argumentos en el motor de tensores"""

    pass


class NonFiniteError(TensorError):
    """Valores NaN/Inf detectados con las comprobaciones de depuración activas"""

    pass


ArrayLike = Union["Tensor", np.ndarray, float, int]

# Estado por hilo: modo gradiente y comprobaciones de finitud
_state = threading.local()


def is_grad_enabled() -> bool:
    """Indica si las operaciones se registran para el paso hacia atrás."""
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Contexto en el que ninguna operación se registra en el grafo."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def debug_checks_enabled() -> bool:
    return getattr(_state, "debug_checks", False)


@contextmanager
def debug_finite_checks(enabled: bool = True):
    """
    Activa la aserción de finitud sobre la salida de cada primitiva.

    Args:
        enabled: Activar o desactivar las comprobaciones dentro del contexto
    """
    previous = debug_checks_enabled()
    _state.debug_checks = enabled
    try:
        yield
    finally:
        _state.debug_checks = previous


class Tensor:
    """
    Tensor denso con ranura de gradiente.

    Invariantes: producto(shape) == número de elementos, todas las
    extensiones positivas y el gradiente, cuando existe, con la misma forma.
    """

    # Hace que numpy delegue en los operadores reflejados del Tensor
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str = None):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        if any(extent < 1 for extent in array.shape):
            raise TensorError(
                f"Tensor extents must be positive, got shape {array.shape}"
            )

        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable] = None

    # ------------------------------------------------------------------
    # Propiedades
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(
            self.data
        )

    def detach(self) -> "Tensor":
        """Tensor que comparte datos pero queda fuera del grafo."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray = None) -> None:
        """
        Propaga gradientes desde este tensor hasta las hojas.

        Args:
            grad: Gradiente semilla (por defecto 1 para escalares)

        Raises:
            TensorError: Si el tensor no es escalar y no hay semilla
        """
        if grad is None:
            if self.size != 1:
                raise TensorError(
                    f"backward() without seed requires a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)

        tape = Tape(self)
        leaf_grads = tape.run(np.asarray(grad, dtype=self.dtype))
        for leaf in tape.nodes:
            key = id(leaf)
            if key not in leaf_grads or not leaf.requires_grad:
                continue
            contribution = leaf_grads[key].astype(leaf.dtype, copy=False)
            if leaf.grad is None:
                leaf.grad = np.array(contribution, copy=True)
            else:
                leaf.grad = leaf.grad + contribution

    # ------------------------------------------------------------------
    # Operadores
    # ------------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return transpose(self, None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def __repr__(self) -> str:
        grad_flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{grad_flag})"


class Tape:
    """
    Registro ordenado de las primitivas ejecutadas hasta una raíz.

    Los nodos se guardan en orden topológico; el paso hacia atrás los
    recorre en orden inverso visitando cada nodo exactamente una vez.
    """

    def __init__(self, root: Tensor):
        """
        Args:
            root: Tensor raíz del grafo
        """
        self.root = root
        self.nodes: List[Tensor] = self._topological_order(root)

    @staticmethod
    def _topological_order(root: Tensor) -> List[Tensor]:
        order: List[Tensor] = []
        visited = set()
        stack = [(root, False)]

        # DFS iterativo en post-orden (los grafos del GRU son profundos)
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        return order

    def __len__(self) -> int:
        return len(self.nodes)

    def op_counts(self) -> Dict[str, int]:
        """Número de nodos registrados por tipo de primitiva."""
        counts: Dict[str, int] = {}
        for node in self.nodes:
            counts[node.op] = counts.get(node.op, 0) + 1
        return counts

    def run(
        self, seed: np.ndarray, capture: Iterable[Tensor] = ()
    ) -> Dict[int, np.ndarray]:
        """
        Ejecuta el paso hacia atrás.

        Args:
            seed: Gradiente de la raíz
            capture: Nodos intermedios cuyo gradiente se quiere conservar

        Returns:
            Dict[int, np.ndarray]: Gradientes por id() de hojas y capturados
        """
        capture_ids = {id(node) for node in capture}
        pending: Dict[int, np.ndarray] = {id(self.root): seed}
        collected: Dict[int, np.ndarray] = {}

        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if id(node) in capture_ids or node._backward is None:
                collected[id(node)] = grad
            if node._backward is None:
                continue

            parent_grads = node._backward(grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

        return collected


def gradients(
    root: Tensor, wrt: Sequence[Tensor], seed: np.ndarray = None
) -> List[np.ndarray]:
    """
    Gradientes de una raíz respecto a tensores concretos sin tocar .grad.

    Args:
        root: Tensor raíz (escalar si no hay semilla)
        wrt: Tensores respecto a los que derivar
        seed: Gradiente semilla opcional

    Returns:
        List[np.ndarray]: Un gradiente por tensor (ceros si no es alcanzable)
    """
    if seed is None:
        if root.size != 1:
            raise TensorError(
                f"gradients() without seed requires a scalar root, got shape {root.shape}"
            )
        seed = np.ones_like(root.data)

    tape = Tape(root)
    collected = tape.run(np.asarray(seed, dtype=root.dtype), capture=wrt)
    return [
        collected[id(t)].astype(t.dtype, copy=False)
        if id(t) in collected
        else np.zeros_like(t.data)
        for t in wrt
    ]


# ----------------------------------------------------------------------
# Utilidades internas
# ----------------------------------------------------------------------


def as_tensor(value: ArrayLike, like: Tensor = None) -> Tensor:
    """Convierte escalares o arrays en Tensor con el dtype de referencia."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def _pair(a: ArrayLike, b: ArrayLike) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def _result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable,
    op: str,
) -> Tensor:
    out = Tensor(data)
    if debug_checks_enabled() and not np.all(np.isfinite(out.data)):
        raise NonFiniteError(f"Non-finite values produced by '{op}'")

    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out.op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Suma el gradiente sobre los ejes añadidos por broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# ----------------------------------------------------------------------
# Álgebra elemental
# ----------------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        )

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _result(a.data / b.data, (a, b), backward, "div")


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _result(a.data**exponent, (a,), backward, "pow")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Producto matricial con batch por broadcasting (semántica de np.matmul).

    Raises:
        TensorError: Si algún operando tiene rango < 2 o las dimensiones
            internas no coinciden
    """
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise TensorError(
            f"matmul requires rank >= 2 operands, got {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise TensorError(
            f"matmul inner dimension mismatch: {a.shape[-1]} (dim -1 of left) "
            f"vs {b.shape[-2]} (dim -2 of right)"
        )

    def backward(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _result(np.matmul(a.data, b.data), (a, b), backward, "matmul")


# ----------------------------------------------------------------------
# Funciones elementales
# ----------------------------------------------------------------------


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x) estable; su derivada es la sigmoide."""
    out = np.logaddexp(0.0, a.data).astype(a.dtype, copy=False)
    return _result(out, (a,), lambda g: (g * expit(a.data),), "softplus")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    positive = a.data > 0
    out = np.where(positive, a.data, slope * a.data)

    def backward(g):
        return (np.where(positive, g, slope * g),)

    return _result(out, (a,), backward, "leaky_relu")


def silu(a: Tensor) -> Tensor:
    gate = expit(a.data)

    def backward(g):
        return (g * (gate + a.data * gate * (1.0 - gate)),)

    return _result(a.data * gate, (a,), backward, "silu")


def absolute(a: Tensor) -> Tensor:
    return _result(
        np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs"
    )


# ----------------------------------------------------------------------
# Reducciones y cambios de forma
# ----------------------------------------------------------------------


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return _result(
        np.sum(a.data, axis=axes, keepdims=keepdims), (a,), backward, "sum"
    )


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape),)

    return _result(
        np.mean(a.data, axis=axes, keepdims=keepdims), (a,), backward, "mean"
    )


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    return _result(
        a.data.reshape(shape),
        (a,),
        lambda g: (g.reshape(original),),
        "reshape",
    )


def transpose(a: Tensor, axes: Sequence[int] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(
        np.transpose(a.data, axes),
        (a,),
        lambda g: (np.transpose(g, inverse),),
        "transpose",
    )


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(
        isinstance(item, (int, np.integer, slice)) or item is Ellipsis or item is None
        for item in items
    )


def getitem(a: Tensor, index) -> Tensor:
    basic = _is_basic_index(index)

    def backward(g):
        grad = np.zeros_like(a.data)
        if basic:
            grad[index] += g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return _result(a.data[index], (a,), backward, "getitem")


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    return _result(
        np.broadcast_to(a.data, shape).copy(),
        (a,),
        lambda g: (_unbroadcast(g, a.shape),),
        "broadcast_to",
    )


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """
    Concatena tensores a lo largo de un eje.

    Raises:
        TensorError: Si las extensiones fuera del eje no coinciden
    """
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise TensorError("concat requires at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim:
            raise TensorError(f"concat rank mismatch: {tensors[0].shape} vs {t.shape}")
        for d in range(ndim):
            if d != axis and t.shape[d] != tensors[0].shape[d]:
                raise TensorError(
                    f"concat extent mismatch on dim {d}: "
                    f"{tensors[0].shape[d]} vs {t.shape[d]}"
                )

    offsets = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        backward,
        "concat",
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    axis = axis % out.ndim

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(out, tensors, backward, "stack")


# ----------------------------------------------------------------------
# Convolución N-dimensional (correlación cruzada)
# ----------------------------------------------------------------------


def _expand(value, rank: int, label: str) -> Tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * rank
    value = tuple(int(v) for v in value)
    if len(value) != rank:
        raise TensorError(f"{label} must have {rank} entries, got {value}")
    return value


def conv(
    x: Tensor,
    w: Tensor,
    b: Tensor = None,
    stride=1,
    padding=0,
    rank: int = None,
) -> Tensor:
    """
    Correlación cruzada con sesgo en 1, 2 o 3 dimensiones espaciales.

    Args:
        x: Entrada (N, C_in, *espacial) o (C_in, *espacial)
        w: Pesos (C_out, C_in, *kernel)
        b: Sesgo opcional (C_out,)
        stride: Paso por dimensión espacial (entero o tupla)
        padding: Relleno de ceros simétrico por dimensión espacial
        rank: Número de dimensiones espaciales (por defecto w.ndim - 2)

    Returns:
        Tensor: Salida (N, C_out, *salida); salida = floor((in + 2p - k)/s) + 1

    Raises:
        TensorError: Forma incoherente, stride < 1, padding < 0 o kernel
            mayor que la entrada rellenada
    """
    rank = w.ndim - 2 if rank is None else rank
    if rank not in (1, 2, 3):
        raise TensorError(f"conv supports rank 1, 2 or 3, got {rank}")
    if w.ndim != rank + 2:
        raise TensorError(
            f"conv{rank}d weight must have {rank + 2} dims, got shape {w.shape}"
        )
    if x.ndim == rank + 1:
        out = conv(x.reshape((1,) + x.shape), w, b, stride, padding, rank)
        return out.reshape(out.shape[1:])
    if x.ndim != rank + 2:
        raise TensorError(
            f"conv{rank}d input must have {rank + 1} or {rank + 2} dims, got shape {x.shape}"
        )

    strides = _expand(stride, rank, "stride")
    pads = _expand(padding, rank, "padding")
    if any(s < 1 for s in strides):
        raise TensorError(f"conv{rank}d stride must be >= 1, got {strides}")
    if any(p < 0 for p in pads):
        raise TensorError(f"conv{rank}d padding must be >= 0, got {pads}")

    c_in = x.shape[1]
    if w.shape[1] != c_in:
        raise TensorError(
            f"conv{rank}d channel mismatch on dim 1: input has {c_in} channels, "
            f"weight expects {w.shape[1]}"
        )
    if b is not None and b.shape != (w.shape[0],):
        raise TensorError(
            f"conv{rank}d bias must have shape ({w.shape[0]},), got {b.shape}"
        )

    kernel = w.shape[2:]
    spatial = x.shape[2:]
    out_sizes = []
    for dim, (extent, pad, k, s) in enumerate(zip(spatial, pads, kernel, strides)):
        size = (extent + 2 * pad - k) // s + 1
        if extent + 2 * pad < k or size < 1:
            raise TensorError(
                f"conv{rank}d spatial dim {dim + 2}: extent {extent} with padding "
                f"{pad} is smaller than kernel {k}"
            )
        out_sizes.append(size)

    spatial_axes = tuple(range(2, 2 + rank))
    kernel_axes = tuple(range(2 + rank, 2 + 2 * rank))

    padded = np.pad(x.data, [(0, 0), (0, 0)] + [(p, p) for p in pads])
    windows = sliding_window_view(padded, kernel, axis=spatial_axes)
    windows = windows[
        (slice(None), slice(None)) + tuple(slice(None, None, s) for s in strides)
    ]

    out = np.tensordot(
        windows, w.data, axes=((1,) + kernel_axes, (1,) + spatial_axes)
    )
    out = np.moveaxis(out, -1, 1)
    if b is not None:
        out = out + b.data.reshape((1, -1) + (1,) * rank)

    def backward(g):
        grad_w = np.tensordot(g, windows, axes=((0,) + spatial_axes, (0,) + spatial_axes))

        grad_windows = np.tensordot(g, w.data, axes=((1,), (0,)))
        grad_windows = np.moveaxis(grad_windows, 1 + rank, 1)
        grad_padded = np.zeros_like(padded)
        for offsets in np.ndindex(*kernel):
            target = (slice(None), slice(None)) + tuple(
                slice(o, o + s * (n - 1) + 1, s)
                for o, s, n in zip(offsets, strides, out_sizes)
            )
            grad_padded[target] += grad_windows[(Ellipsis,) + offsets]
        grad_x = grad_padded[
            (slice(None), slice(None))
            + tuple(slice(p, p + e) for p, e in zip(pads, spatial))
        ]

        grad_b = g.sum(axis=(0,) + spatial_axes) if b is not None else None
        return grad_x, grad_w, grad_b

    parents = (x, w) if b is None else (x, w, b)
    return _result(
        np.ascontiguousarray(out), parents, backward, f"conv{rank}d"
    )


# ----------------------------------------------------------------------
# Recurrencia GRU
# ----------------------------------------------------------------------


def gru_direction(
    seq: Tensor, params: Dict[str, Tensor], reverse: bool = False
) -> Tensor:
    """
    Recurrencia GRU estándar en una dirección con estado inicial cero.

    r = σ(W_ir x + b_ir + W_hr h + b_hr)
    z = σ(W_iz x + b_iz + W_hz h + b_hz)
    n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
    h' = (1 - z) ⊙ n + z ⊙ h

    Args:
        seq: Secuencia (N, T, D_in)
        params: w_ih (3H, D_in), w_hh (3H, H), b_ih (3H,), b_hh (3H,)
        reverse: Recorrer la secuencia de atrás hacia delante

    Returns:
        Tensor: Estados ocultos (N, T, H) alineados con la entrada
    """
    n_batch, length, _ = seq.shape
    hidden = params["w_hh"].shape[1]

    # Proyección de entrada de todos los pasos en un único matmul
    gates_x = matmul(seq, transpose(params["w_ih"])) + params["b_ih"]
    w_hh_t = transpose(params["w_hh"])

    h = Tensor(np.zeros((n_batch, hidden), dtype=seq.dtype))
    outputs: List[Optional[Tensor]] = [None] * length
    steps = range(length - 1, -1, -1) if reverse else range(length)

    for t in steps:
        gx = gates_x[:, t, :]
        gh = matmul(h, w_hh_t) + params["b_hh"]
        reset = sigmoid(gx[:, :hidden] + gh[:, :hidden])
        update = sigmoid(gx[:, hidden : 2 * hidden] + gh[:, hidden : 2 * hidden])
        candidate = tanh(gx[:, 2 * hidden :] + reset * gh[:, 2 * hidden :])
        h = (1.0 - update) * candidate + update * h
        outputs[t] = h

    return stack(outputs, axis=1)


def gru_bidirectional(
    seq: Tensor,
    forward_params: Dict[str, Tensor],
    backward_params: Dict[str, Tensor],
) -> Tensor:
    """
    GRU bidireccional: concatena por paso las recurrencias hacia delante y
    hacia atrás.

    Args:
        seq: Secuencia (T, D_in) o (N, T, D_in)
        forward_params: Parámetros de la dirección directa
        backward_params: Parámetros de la dirección inversa

    Returns:
        Tensor: (T, 2H) o (N, T, 2H)

    Raises:
        TensorError: Si la secuencia está vacía o tiene rango inválido
    """
    if seq.ndim == 2:
        out = gru_bidirectional(
            seq.reshape((1,) + seq.shape), forward_params, backward_params
        )
        return out.reshape(out.shape[1:])
    if seq.ndim != 3:
        raise TensorError(f"GRU input must be (T, D) or (N, T, D), got {seq.shape}")
    if seq.shape[1] < 1:
        raise TensorError("GRU requires a non-empty sequence")

    forward = gru_direction(seq, forward_params, reverse=False)
    backward = gru_direction(seq, backward_params, reverse=True)
    return concat([forward, backward], axis=-1)


# ----------------------------------------------------------------------
# Softmax, redimensionado bilineal y similitud coseno
# ----------------------------------------------------------------------


def softmax_rows(m: Tensor) -> Tensor:
    """Softmax sobre el último eje con resta del máximo por estabilidad."""
    shifted = m.data - np.max(m.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return _result(out, (m,), backward, "softmax")


def log_softmax_rows(m: Tensor) -> Tensor:
    shifted = m.data - np.max(m.data, axis=-1, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * np.sum(g, axis=-1, keepdims=True),)

    return _result(out, (m,), backward, "log_softmax")


@lru_cache(maxsize=128)
def _bilinear_weights(n_in: int, n_out: int) -> np.ndarray:
    # Centros de píxel: src = (dst + 0.5) * in/out - 0.5, recortado al borde
    scale = n_in / n_out
    src = np.clip((np.arange(n_out) + 0.5) * scale - 0.5, 0.0, n_in - 1)
    lower = np.floor(src).astype(np.int64)
    upper = np.minimum(lower + 1, n_in - 1)
    frac = src - lower

    matrix = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    matrix.setflags(write=False)
    return matrix


def bilinear_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """
    Matriz de interpolación lineal 1D (n_out, n_in), align-corners=False.

    Raises:
        TensorError: Si alguna extensión es < 1
    """
    if n_in < 1 or n_out < 1:
        raise TensorError(
            f"bilinear resize extents must be >= 1, got {n_in} -> {n_out}"
        )
    return _bilinear_weights(int(n_in), int(n_out)).astype(dtype, copy=False)


def bilinear_resize(img: Tensor, new_h: int, new_w: int) -> Tensor:
    """
    Redimensionado bilineal sobre los dos últimos ejes.

    Args:
        img: Tensor (..., H, W)
        new_h: Nueva extensión del penúltimo eje
        new_w: Nueva extensión del último eje

    Returns:
        Tensor: (..., new_h, new_w)
    """
    if img.ndim < 2:
        raise TensorError(f"bilinear_resize needs rank >= 2, got {img.shape}")
    rows = bilinear_matrix(img.shape[-2], new_h, img.dtype)
    cols = bilinear_matrix(img.shape[-1], new_w, img.dtype)
    out = np.matmul(np.matmul(rows, img.data), cols.T)

    def backward(g):
        return (np.matmul(np.matmul(rows.T, g), cols),)

    return _result(out, (img,), backward, "bilinear")


def _safe_unit(v: np.ndarray, norms: np.ndarray) -> np.ndarray:
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, v / safe, 0.0)


def cosine_similarity_frames(a: Tensor, b: Tensor, eps: float = 1e-8) -> Tensor:
    """
    Similitud coseno por fila: dot / (‖a‖‖b‖ + eps). Filas nulas puntúan 0.

    Args:
        a: (..., T, D)
        b: Misma forma que a
        eps: Protección del denominador

    Returns:
        Tensor: (..., T)
    """
    a, b = _pair(a, b)
    if a.shape != b.shape:
        raise TensorError(
            f"cosine similarity needs equal shapes, got {a.shape} and {b.shape}"
        )
    dot = np.sum(a.data * b.data, axis=-1)
    norm_a = np.linalg.norm(a.data, axis=-1)
    norm_b = np.linalg.norm(b.data, axis=-1)
    den = norm_a * norm_b + eps
    out = dot / den

    def backward(g):
        unit_a = _safe_unit(a.data, norm_a[..., None])
        unit_b = _safe_unit(b.data, norm_b[..., None])
        scale = (g / den)[..., None]
        ratio = (g * dot / (den * den))[..., None]
        grad_a = scale * b.data - ratio * norm_b[..., None] * unit_a
        grad_b = scale * a.data - ratio * norm_a[..., None] * unit_b
        return grad_a, grad_b

    return _result(out, (a, b), backward, "cosine")


def pairwise_cosine(a: Tensor, b: Tensor, eps: float = 1e-8) -> Tensor:
    """
    Matriz de similitudes coseno S[j, n] = r(a_j, b_n).

    Args:
        a: (..., T_a, D)
        b: (..., T_b, D)
        eps: Protección del denominador

    Returns:
        Tensor: (..., T_a, T_b)
    """
    a, b = _pair(a, b)
    if a.shape[-1] != b.shape[-1]:
        raise TensorError(
            f"pairwise cosine feature mismatch: {a.shape[-1]} vs {b.shape[-1]}"
        )
    gram = np.matmul(a.data, np.swapaxes(b.data, -1, -2))
    norm_a = np.linalg.norm(a.data, axis=-1)
    norm_b = np.linalg.norm(b.data, axis=-1)
    den = norm_a[..., :, None] * norm_b[..., None, :] + eps
    out = gram / den

    def backward(g):
        grad_gram = g / den
        weight = g * gram / (den * den)
        grad_norm_a = -np.sum(weight * norm_b[..., None, :], axis=-1)
        grad_norm_b = -np.sum(weight * norm_a[..., :, None], axis=-2)
        unit_a = _safe_unit(a.data, norm_a[..., None])
        unit_b = _safe_unit(b.data, norm_b[..., None])
        grad_a = np.matmul(grad_gram, b.data) + grad_norm_a[..., None] * unit_a
        grad_b = (
            np.matmul(np.swapaxes(grad_gram, -1, -2), a.data)
            + grad_norm_b[..., None] * unit_b
        )
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _result(out, (a, b), backward, "pairwise_cosine")
