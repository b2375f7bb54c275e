"""
Funciones de pérdida del entrenamiento
======================================

- Sincronización contrastiva InfoNCE entre rasgos de audio y vídeo, en su
  forma simétrica para los codificadores y por tramas para el generador.
- Pérdidas GAN no saturantes con cabezas condicional e incondicional,
  calculadas sobre logits (log p = -softplus(-l)).
- Regularización R1 sobre los logits de las entradas reales.
- Reconstrucción L1 multiescala y pérdida total ponderada del generador.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Union

import numpy as np

from . import tensor_engine as te
from .tensor_engine import Tensor, gradients

Scalar = Union[Tensor, float]


class LossError(Exception):
    """Excepción para entradas inválidas de las funciones de pérdida"""

    pass


@dataclass
class LossWeights:
    """Pesos de la pérdida total y temperatura de InfoNCE."""

    recon: float = 50.0
    sync: float = 0.5
    tau: float = 1.0
    r1_gamma: float = 1.0

    def __post_init__(self):
        for name in ("recon", "sync", "tau"):
            if getattr(self, name) <= 0:
                raise LossError(f"Loss weight '{name}' must be positive, got {getattr(self, name)}")
        # 0 desactiva R1
        if self.r1_gamma < 0:
            raise LossError(f"Loss weight 'r1_gamma' must be non-negative, got {self.r1_gamma}")


# ----------------------------------------------------------------------
# Sincronización
# ----------------------------------------------------------------------


def _check_pair(a: Tensor, b: Tensor, label: str) -> None:
    if a.shape != b.shape:
        raise LossError(f"{label}: feature shapes differ, {a.shape} vs {b.shape}")


def info_nce(f_a: Tensor, f_v: Tensor, tau: float = 1.0) -> Tensor:
    """
    InfoNCE con negativos tomados de las demás tramas de la misma secuencia.

    loss = media_j −log[exp(r(a_j, v_j)/τ) / Σ_n exp(r(a_j, v_n)/τ)]

    Args:
        f_a: Rasgos de anclaje (T, D) o (N, T, D)
        f_v: Rasgos candidatos de la misma forma
        tau: Temperatura

    Returns:
        Tensor: Escalar

    Raises:
        LossError: Formas distintas o T < 2
    """
    _check_pair(f_a, f_v, "info_nce")
    frames = f_a.shape[-2]
    if frames < 2:
        raise LossError(f"info_nce needs at least 2 frames for negatives, got {frames}")

    sims = te.pairwise_cosine(f_a, f_v)
    log_probs = te.log_softmax_rows(sims * (1.0 / tau))
    diagonal = np.arange(frames)
    if log_probs.ndim == 2:
        positives = log_probs[diagonal, diagonal]
    else:
        positives = log_probs[(slice(None),) * (log_probs.ndim - 2) + (diagonal, diagonal)]
    return -te.mean(positives)


def encoder_sync_loss(f_a: Tensor, f_v: Tensor, tau: float = 1.0) -> Tensor:
    """½[L_c(F_a, F_v) + L_c(F_v, F_a)]: negativos de vídeo y de audio."""
    return 0.5 * (info_nce(f_a, f_v, tau) + info_nce(f_v, f_a, tau))


def generator_sync_loss(f_hat: Tensor, f_v: Tensor) -> Tensor:
    """
    Media por tramas de |1 − r(f̂_a^t, f_v^t)|, en [0, 2].

    Raises:
        LossError: Si las longitudes no coinciden
    """
    _check_pair(f_hat, f_v, "generator_sync_loss")
    return te.mean(te.absolute(1.0 - te.cosine_similarity_frames(f_hat, f_v)))


def sync_loss_total(encoder_term: Scalar, generator_term: Scalar) -> Scalar:
    return encoder_term + generator_term


# ----------------------------------------------------------------------
# Pérdidas adversarias
# ----------------------------------------------------------------------


def log_sigmoid(logits: Tensor) -> Tensor:
    """log σ(l) = −softplus(−l)."""
    return -te.softplus(-logits)


def log_one_minus_sigmoid(logits: Tensor) -> Tensor:
    """log(1 − σ(l)) = −softplus(l)."""
    return -te.softplus(logits)


def gan_generator_loss(scores: Sequence) -> Tensor:
    """
    −½ · E_i[log D_i(ŷ_i) + log D_i(ŷ_i, M(C_v))] sobre logits.

    Args:
        scores: DiscriminatorScores de las escalas activas (generadas)

    Returns:
        Tensor: Escalar
    """
    if not scores:
        raise LossError("gan_generator_loss needs at least one stage")
    total = None
    for stage in scores:
        term = te.mean(log_sigmoid(stage.unconditional)) + te.mean(log_sigmoid(stage.conditional))
        total = term if total is None else total + term
    return total * (-0.5 / len(scores))


def gan_discriminator_loss(real: Sequence, fake: Sequence) -> Tensor:
    """
    −½ · E_i[log D_i(y_i) + log(1 − D_i(ŷ_i)) + log D_i(y_i, M) + log(1 − D_i(ŷ_i, M))].

    Raises:
        LossError: Si el número de escalas real/generado difiere
    """
    if not real or len(real) != len(fake):
        raise LossError(
            f"gan_discriminator_loss needs matching stage lists, got {len(real)} and {len(fake)}"
        )
    total = None
    for r, f in zip(real, fake):
        term = (
            te.mean(log_sigmoid(r.unconditional))
            + te.mean(log_one_minus_sigmoid(f.unconditional))
            + te.mean(log_sigmoid(r.conditional))
            + te.mean(log_one_minus_sigmoid(f.conditional))
        )
        total = term if total is None else total + term
    return total * (-0.5 / len(real))


def _validated_log(p: Sequence[np.ndarray], complement: bool, label: str) -> float:
    values = [np.asarray(v, dtype=np.float64) for v in p]
    for v in values:
        if np.any(~np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
            raise LossError(f"{label}: probabilities must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        logs = [np.mean(np.log1p(-v) if complement else np.log(v)) for v in values]
    if any(np.isinf(x) for x in logs):
        raise LossError(f"{label}: a score makes its log term infinite")
    return float(np.mean(logs))


def generator_loss_from_probabilities(p_uncond: Sequence[np.ndarray], p_cond: Sequence[np.ndarray]) -> float:
    """Versión numérica de gan_generator_loss sobre probabilidades por escala."""
    if len(p_uncond) != len(p_cond) or not p_uncond:
        raise LossError("Probability lists must be non-empty and of equal length")
    stages = len(p_uncond)
    total = sum(
        _validated_log([u], False, "generator") + _validated_log([c], False, "generator")
        for u, c in zip(p_uncond, p_cond)
    )
    return -0.5 * total / stages


def discriminator_loss_from_probabilities(
    real_uncond: Sequence[np.ndarray],
    real_cond: Sequence[np.ndarray],
    fake_uncond: Sequence[np.ndarray],
    fake_cond: Sequence[np.ndarray],
) -> float:
    """Versión numérica de gan_discriminator_loss sobre probabilidades."""
    stages = len(real_uncond)
    if stages == 0 or not len(real_cond) == len(fake_uncond) == len(fake_cond) == stages:
        raise LossError("Probability lists must be non-empty and of equal length")
    total = 0.0
    for ru, rc, fu, fc in zip(real_uncond, real_cond, fake_uncond, fake_cond):
        total += _validated_log([ru], False, "discriminator real")
        total += _validated_log([fu], True, "discriminator fake")
        total += _validated_log([rc], False, "discriminator real")
        total += _validated_log([fc], True, "discriminator fake")
    return -0.5 * total / stages


@dataclass
class R1Result:
    """Valor de la penalización R1 y gradientes por parámetro."""

    value: float
    grads: List[np.ndarray] = field(default_factory=list)
    input_grad_norms: List[float] = field(default_factory=list)


def r1_penalty(
    score_fn: Callable[[List[Tensor]], List[List[Tensor]]],
    real_inputs: Sequence[np.ndarray],
    params: Sequence[Tensor],
    gamma: float = 1.0,
) -> R1Result:
    """
    Penalización R1 sobre logits en entradas reales.

    valor = (γ/2) · (1/S) · Σ_i Σ_h media_n ‖∇_{y_i} l_{i,h}(y_i)‖²

    El gradiente respecto a los parámetros es un producto Hessiana-vector
    por diferencias centrales: (γ / (S·N)) · [∇θ Σl(y + εg) − ∇θ Σl(y − εg)] / 2ε.

    Args:
        score_fn: Dadas las entradas (una por escala) devuelve, por escala,
            la lista de logits (N,) de cada cabeza
        real_inputs: Entradas reales por escala (N, F_i, T_i)
        params: Parámetros respecto a los que se devuelve el gradiente
        gamma: Coeficiente γ

    Returns:
        R1Result: Valor, gradientes (uno por parámetro) y normas medias
    """
    if not real_inputs:
        raise LossError("r1_penalty needs at least one input scale")
    stages = len(real_inputs)
    batch = real_inputs[0].shape[0]
    dtype = np.asarray(real_inputs[0]).dtype

    inputs = [Tensor(np.asarray(y), requires_grad=True) for y in real_inputs]
    logits = score_fn(inputs)
    heads = len(logits[0])

    value = 0.0
    norms: List[float] = []
    directions: List[List[np.ndarray]] = []
    for h in range(heads):
        per_stage = []
        for s in range(stages):
            (grad,) = gradients(te.tensor_sum(logits[s][h]), [inputs[s]])
            squared = np.sum(grad.reshape(batch, -1) ** 2, axis=1)
            value += float(np.mean(squared))
            norms.append(float(np.mean(np.sqrt(squared))))
            per_stage.append(grad)
        directions.append(per_stage)
    value *= 0.5 * gamma / stages

    totals = [np.zeros_like(p.data) for p in params]
    cube_root_eps = float(np.finfo(dtype).eps) ** (1.0 / 3.0)
    for h, per_stage in enumerate(directions):
        peak = max(float(np.max(np.abs(g))) for g in per_stage)
        if peak == 0.0:
            continue
        if not np.isfinite(peak):
            totals = [np.full_like(t, np.nan) for t in totals]
            continue
        step = cube_root_eps / peak
        shifted = []
        for sign in (1.0, -1.0):
            moved = [Tensor(np.asarray(y) + sign * step * g) for y, g in zip(real_inputs, per_stage)]
            out = score_fn(moved)
            objective = None
            for s in range(stages):
                term = te.tensor_sum(out[s][h])
                objective = term if objective is None else objective + term
            shifted.append(gradients(objective, list(params)))
        scale = gamma / (stages * batch) / (2.0 * step)
        for k in range(len(params)):
            totals[k] = totals[k] + scale * (shifted[0][k] - shifted[1][k])

    return R1Result(value, totals, norms)


# ----------------------------------------------------------------------
# Reconstrucción y pérdida total
# ----------------------------------------------------------------------


def reconstruction_loss(predicted: Sequence[Tensor], targets: Sequence) -> Tensor:
    """
    E_i[media |y_i − ŷ_i|].

    Raises:
        LossError: Número de escalas o formas distintas
    """
    if not predicted or len(predicted) != len(targets):
        raise LossError(
            f"reconstruction_loss needs matching scale lists, got {len(predicted)} and {len(targets)}"
        )
    total = None
    for index, (pred, target) in enumerate(zip(predicted, targets)):
        target = te.as_tensor(target, like=pred)
        if pred.shape != target.shape:
            raise LossError(
                f"reconstruction_loss scale {index}: {pred.shape} vs {target.shape}"
            )
        term = te.mean(te.absolute(target - pred))
        total = term if total is None else total + term
    return total * (1.0 / len(predicted))


def total_generator_loss(
    adversarial: Scalar,
    reconstruction: Scalar,
    sync: Scalar,
    weights: LossWeights = None,
) -> Scalar:
    """L_g + λ_recon · L_recon + λ_sync · L_sync."""
    weights = weights or LossWeights()
    return adversarial + weights.recon * reconstruction + weights.sync * sync


def postnet_loss(predicted: Tensor, target) -> Tensor:
    """L1 entre magnitudes lineales escaladas."""
    target = te.as_tensor(target, like=predicted)
    if predicted.shape != target.shape:
        raise LossError(f"postnet_loss: {predicted.shape} vs {target.shape}")
    return te.mean(te.absolute(target - predicted))
