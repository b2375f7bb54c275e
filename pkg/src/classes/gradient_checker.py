"""
Verificador de gradientes por diferencias finitas
=================================================

Compara el gradiente en modo reverso del motor de tensores con diferencias
finitas centrales y reporta el error relativo máximo por entrada.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .tensor_engine import Tensor, gradients


class GradCheckError(Exception):
    """Excepción para entradas inválidas del verificador de gradientes"""

    pass


@dataclass
class GradCheckResult:
    """Resultado de una verificación de gradiente."""

    max_relative_error: float
    per_input: List[float] = field(default_factory=list)
    failure: Optional[str] = None

    @property
    def finite(self) -> bool:
        return self.failure is None

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.finite and self.max_relative_error < tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """
    Error relativo ‖a − n‖∞ / max(‖a‖∞, ‖n‖∞, 1e-10).

    Args:
        analytic: Gradiente en modo reverso
        numeric: Gradiente por diferencias finitas

    Returns:
        float: Error relativo
    """
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-10)
    return float(np.max(np.abs(analytic - numeric)) / scale)


class GradientChecker:
    """
    Verificador de gradientes con diferencias finitas centrales.

    El cierre recibe los tensores de entrada y devuelve un escalar; cada
    elemento de cada entrada se perturba ±eps sobre una copia en float64.
    """

    def __init__(
        self,
        eps: float = 1e-4,
        max_elements: int = None,
        seed: int = 0,
        logger: logging.Logger = None,
    ):
        """
        Args:
            eps: Paso de las diferencias centrales
            max_elements: Si se indica, número máximo de elementos por entrada
                que se perturban (muestreados al azar)
            seed: Semilla del muestreo de elementos
            logger: Logger opcional
        """
        if eps <= 0:
            raise GradCheckError(f"eps must be positive, got {eps}")
        self.eps = eps
        self.max_elements = max_elements
        self.seed = seed
        self.logger = logger or logging.getLogger(__name__)

    def _evaluate(self, closure: Callable, inputs: Sequence[Tensor]) -> float:
        out = closure(*inputs)
        if out.size != 1:
            raise GradCheckError(
                f"Closure must return a scalar, got shape {out.shape}"
            )
        return float(out.data.reshape(-1)[0])

    def _positions(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.max_elements is None or size <= self.max_elements:
            return np.arange(size)
        return np.sort(rng.choice(size, size=self.max_elements, replace=False))

    def check(
        self, closure: Callable[..., Tensor], inputs: Sequence[np.ndarray]
    ) -> GradCheckResult:
        """
        Ejecuta la verificación.

        Args:
            closure: Función escalar de los tensores de entrada
            inputs: Arrays de entrada (se convierten a float64)

        Returns:
            GradCheckResult: Error máximo, errores por entrada y fallo (si hay)

        Raises:
            GradCheckError: Si el cierre no devuelve un escalar
        """
        arrays = [np.array(a, dtype=np.float64) for a in inputs]
        tensors = [Tensor(a, requires_grad=True) for a in arrays]

        out = closure(*tensors)
        if out.size != 1:
            raise GradCheckError(
                f"Closure must return a scalar, got shape {out.shape}"
            )
        analytic = gradients(out, tensors)

        for index, grad in enumerate(analytic):
            bad = np.argwhere(~np.isfinite(grad))
            if bad.size:
                location = tuple(int(i) for i in bad[0])
                message = f"non-finite gradient for input {index} at {location}"
                self.logger.warning(message)
                return GradCheckResult(float("inf"), [], message)

        rng = np.random.default_rng(self.seed)
        per_input = []
        for index, (array, grad) in enumerate(zip(arrays, analytic)):
            flat = array.reshape(-1)
            positions = self._positions(flat.size, rng)
            numeric = np.zeros(len(positions))

            for k, position in enumerate(positions):
                original = flat[position]
                flat[position] = original + self.eps
                plus = self._evaluate(closure, [Tensor(a) for a in arrays])
                flat[position] = original - self.eps
                minus = self._evaluate(closure, [Tensor(a) for a in arrays])
                flat[position] = original
                numeric[k] = (plus - minus) / (2.0 * self.eps)

            if not np.all(np.isfinite(numeric)):
                where = int(positions[np.argmax(~np.isfinite(numeric))])
                message = f"non-finite numeric gradient for input {index} at flat index {where}"
                return GradCheckResult(float("inf"), per_input, message)

            per_input.append(relative_error(grad.reshape(-1)[positions], numeric))

        worst = max(per_input) if per_input else 0.0
        self.logger.debug(f"Gradient check max relative error: {worst:.3e}")
        return GradCheckResult(worst, per_input)


def grad_check(
    closure: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-4,
    max_elements: int = None,
) -> float:
    """
    Atajo funcional: error relativo máximo (inf si hay gradientes no finitos).
    """
    return GradientChecker(eps=eps, max_elements=max_elements).check(
        closure, inputs
    ).max_relative_error
