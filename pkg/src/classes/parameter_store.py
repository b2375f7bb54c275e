"""
Almacén de parámetros entrenables
=================================

Registro con nombre de todos los tensores entrenables del modelo. Los
módulos crean sus parámetros aquí al construirse y los leen en cada
forward a través de un mapeo nombre → Tensor, lo que permite pasar vistas
desacopladas (sin gradiente) de un subconjunto de prefijos.
"""

import hashlib
import logging
from collections import OrderedDict
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from .tensor_engine import Tensor


class ParameterError(Exception):
    """Excepción para nombres o formas de parámetros inválidos"""

    pass


class ParameterStore:
    """
    Almacén ordenado de parámetros con inicialización uniforme por fan-in.

    Los nombres siguen el patrón `<prefijo>.<módulo>.<tensor>`; el prefijo
    (phi_v, phi_c, psi, attn, heads, phi_a, disc, postnet) agrupa los
    parámetros por optimizador.
    """

    def __init__(self, dtype=np.float64, seed: int = 0, logger: logging.Logger = None):
        """
        Args:
            dtype: Tipo de coma flotante de los parámetros
            seed: Semilla de la inicialización
            logger: Logger opcional
        """
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.logger = logger or logging.getLogger(__name__)

    def create(
        self,
        name: str,
        shape: Sequence[int],
        fan_in: int = None,
        zeros: bool = False,
    ) -> Tensor:
        """
        Crea e inicializa un parámetro.

        Args:
            name: Nombre único
            shape: Forma del tensor
            fan_in: Entradas por unidad de salida; U(-1/√fan_in, 1/√fan_in)
            zeros: Inicializar a cero

        Returns:
            Tensor: Parámetro creado

        Raises:
            ParameterError: Nombre duplicado o forma inválida
        """
        if name in self._params:
            raise ParameterError(f"Parameter already exists: {name}")
        shape = tuple(int(s) for s in shape)
        if not shape or any(s < 1 for s in shape):
            raise ParameterError(f"Invalid shape for parameter {name}: {shape}")

        if zeros:
            data = np.zeros(shape, dtype=self.dtype)
        else:
            fan_in = fan_in or int(np.prod(shape[1:])) or 1
            bound = 1.0 / np.sqrt(fan_in)
            data = self._rng.uniform(-bound, bound, size=shape).astype(self.dtype)

        tensor = Tensor(data, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ParameterError(f"Unknown parameter: {name}")

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    @staticmethod
    def _matches(name: str, prefixes: Iterable[str]) -> bool:
        return any(name == p or name.startswith(p + ".") for p in prefixes)

    def names(self, prefixes: Iterable[str] = None) -> List[str]:
        """Nombres de parámetros, opcionalmente filtrados por prefijo."""
        if prefixes is None:
            return list(self._params)
        prefixes = tuple(prefixes)
        return [n for n in self._params if self._matches(n, prefixes)]

    def tensors(self, prefixes: Iterable[str] = None) -> List[Tensor]:
        return [self._params[n] for n in self.names(prefixes)]

    def prefixes(self) -> List[str]:
        seen = OrderedDict()
        for name in self._params:
            seen[name.split(".", 1)[0]] = True
        return list(seen)

    def view(self, detach: Iterable[str] = ()) -> Dict[str, Tensor]:
        """
        Mapeo nombre → Tensor con los prefijos indicados desacoplados.

        Un forward sobre la vista no acumula gradiente en esos parámetros,
        pero sí en el resto.

        Args:
            detach: Prefijos a congelar

        Returns:
            Dict[str, Tensor]: Vista de parámetros
        """
        detach = tuple(detach)
        return {
            name: tensor.detach() if self._matches(name, detach) else tensor
            for name, tensor in self._params.items()
        }

    def zero_grad(self, prefixes: Iterable[str] = None) -> None:
        for tensor in self.tensors(prefixes):
            tensor.grad = None

    def num_elements(self, prefixes: Iterable[str] = None) -> int:
        return int(sum(t.size for t in self.tensors(prefixes)))

    def checksum(self, prefixes: Iterable[str] = None) -> str:
        """
        Huella sha256 de nombres, formas y datos.

        Args:
            prefixes: Prefijos a incluir (todos por defecto)

        Returns:
            str: Huella hexadecimal
        """
        digest = hashlib.sha256()
        for name in self.names(prefixes):
            data = self._params[name].data
            digest.update(name.encode("utf-8"))
            digest.update(str(data.shape).encode("ascii"))
            digest.update(np.ascontiguousarray(data).tobytes())
        return digest.hexdigest()

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        """Copia de los datos de todos los parámetros en orden de creación."""
        return OrderedDict(
            (name, tensor.data.copy()) for name, tensor in self._params.items()
        )

    def load_arrays(self, arrays: Mapping[str, np.ndarray], strict: bool = True) -> None:
        """
        Sustituye los datos de los parámetros.

        Args:
            arrays: Datos por nombre
            strict: Exigir que coincidan exactamente los conjuntos de nombres

        Raises:
            ParameterError: Nombres ausentes o sobrantes, o formas distintas
        """
        if strict:
            missing = [n for n in self._params if n not in arrays]
            extra = [n for n in arrays if n not in self._params]
            if missing or extra:
                raise ParameterError(
                    f"Parameter set mismatch: missing={missing[:5]} extra={extra[:5]}"
                )

        for name, array in arrays.items():
            if name not in self._params:
                continue
            tensor = self._params[name]
            if tuple(array.shape) != tensor.shape:
                raise ParameterError(
                    f"Shape mismatch for {name}: checkpoint {tuple(array.shape)} "
                    f"vs model {tensor.shape}"
                )
            tensor.data = np.array(array, dtype=self.dtype, copy=True)
            tensor.grad = None

    def summary(self) -> List[Tuple[str, int]]:
        """Número de elementos por prefijo."""
        return [(p, self.num_elements([p])) for p in self.prefixes()]

    def __repr__(self) -> str:
        return (
            f"ParameterStore(params={len(self)}, elements={self.num_elements()}, "
            f"dtype={self.dtype})"
        )
