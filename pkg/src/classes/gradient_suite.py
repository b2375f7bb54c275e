"""
Batería de verificación de gradientes
=====================================

Casos pequeños en doble precisión para cada operación diferenciable del
motor, la atención audio-visual y cada pérdida del entrenamiento. Cada
caso se construye a partir de un generador aleatorio para poder repetirlo
con varias semillas.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from . import tensor_engine as te
from .discriminator import DiscriminatorScores, StageDiscriminator
from .generator import VisualContextAttention
from .gradient_checker import GradientChecker, relative_error
from .losses import (
    LossWeights,
    encoder_sync_loss,
    gan_discriminator_loss,
    gan_generator_loss,
    generator_sync_loss,
    info_nce,
    r1_penalty,
    reconstruction_loss,
    total_generator_loss,
)
from .model_config import ModelConfig
from .parameter_store import ParameterStore
from .tensor_engine import Tensor

Builder = Callable[[np.random.Generator], Tuple[Callable[..., Tensor], List[np.ndarray]]]


def _signed(rng: np.random.Generator, shape, low: float = 0.1, high: float = 2.0) -> np.ndarray:
    """Valores lejos de cero (para operaciones con esquina en 0)."""
    return rng.uniform(low, high, shape) * rng.choice([-1.0, 1.0], size=shape)


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return te.tensor_sum(out * weights)


def _unary(op: Callable[[Tensor], Tensor], sampler: Callable) -> Builder:
    def build(rng):
        x = sampler(rng, (3, 4))
        w = rng.standard_normal((3, 4))
        return (lambda a: _weighted_sum(op(a), w)), [x]

    return build


def _normal(rng, shape):
    return rng.standard_normal(shape)


def _positive(rng, shape):
    return rng.uniform(0.5, 2.0, shape)


def _binary(op: Callable[[Tensor, Tensor], Tensor], positive_rhs: bool = False) -> Builder:
    def build(rng):
        a = rng.standard_normal((2, 3, 4))
        b = rng.uniform(0.5, 2.0, (3, 4)) if positive_rhs else rng.standard_normal((3, 4))
        w = rng.standard_normal((2, 3, 4))
        return (lambda x, y: _weighted_sum(op(x, y), w)), [a, b]

    return build


def _matmul(rng):
    a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5))
    w = rng.standard_normal((2, 3, 5))
    return (lambda x, y: _weighted_sum(te.matmul(x, y), w)), [a, b]


def _reductions(rng):
    x = rng.standard_normal((2, 3, 4))
    w1, w2 = rng.standard_normal((2, 4)), rng.standard_normal((3,))
    return (
        lambda a: _weighted_sum(te.tensor_sum(a, axis=1), w1) + _weighted_sum(te.mean(a, axis=(0, 2)), w2)
    ), [x]


def _reshape_transpose(rng):
    x = rng.standard_normal((2, 3, 4))
    w = rng.standard_normal((4, 2, 3))
    return (lambda a: _weighted_sum(te.transpose(a.reshape((6, 4)).reshape((2, 3, 4)), (2, 0, 1)), w)), [x]


def _indexing(rng):
    x = rng.standard_normal((4, 5))
    rows = np.array([0, 2, 2, 3])
    w1, w2 = rng.standard_normal((2, 3)), rng.standard_normal((4, 5))
    return (lambda a: _weighted_sum(a[1:3, ::2], w1) + _weighted_sum(a[rows], w2)), [x]


def _broadcast(rng):
    x = rng.standard_normal((3, 1))
    w = rng.standard_normal((2, 3, 4))
    return (lambda a: _weighted_sum(te.broadcast_to(a, (2, 3, 4)), w)), [x]


def _concat_stack(rng):
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((2, 2))
    w1, w2 = rng.standard_normal((2, 5)), rng.standard_normal((2, 2, 3))
    return (
        lambda x, y: _weighted_sum(te.concat([x, y], axis=1), w1)
        + _weighted_sum(te.stack([x, x * 2.0], axis=0), w2)
    ), [a, b]


def _conv(rank: int) -> Builder:
    geometry = {
        1: ((2, 3, 9), (4, 3, 3), 2, 1),
        2: ((1, 2, 6, 5), (3, 2, 3, 3), (2, 1), 1),
        3: ((1, 2, 4, 5, 5), (2, 2, 3, 3, 3), (1, 2, 2), (1, 1, 1)),
    }

    def build(rng):
        x_shape, w_shape, stride, padding = geometry[rank]
        x = rng.standard_normal(x_shape)
        w = rng.standard_normal(w_shape) * 0.5
        b = rng.standard_normal(w_shape[0])
        probe = te.conv(Tensor(x), Tensor(w), Tensor(b), stride, padding, rank)
        weights = rng.standard_normal(probe.shape)
        return (
            lambda xx, ww, bb: _weighted_sum(te.conv(xx, ww, bb, stride, padding, rank), weights)
        ), [x, w, b]

    return build


def _gru(rng):
    d_in, hidden = 3, 2
    seq = rng.standard_normal((2, 4, d_in))
    shapes = [(3 * hidden, d_in), (3 * hidden, hidden), (3 * hidden,), (3 * hidden,)]
    arrays = [rng.standard_normal(s) * 0.5 for s in shapes + shapes]
    w = rng.standard_normal((2, 4, 2 * hidden))
    keys = ("w_ih", "w_hh", "b_ih", "b_hh")

    def closure(x, *params):
        forward = dict(zip(keys, params[:4]))
        backward = dict(zip(keys, params[4:]))
        return _weighted_sum(te.gru_bidirectional(x, forward, backward), w)

    return closure, [seq] + arrays


def _softmax(rng):
    x = rng.standard_normal((2, 3, 4))
    w1, w2 = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 3, 4))
    return (
        lambda a: _weighted_sum(te.softmax_rows(a), w1) + _weighted_sum(te.log_softmax_rows(a), w2)
    ), [x]


def _bilinear(rng):
    x = rng.standard_normal((2, 8, 6))
    w = rng.standard_normal((2, 4, 3))
    return (lambda a: _weighted_sum(te.bilinear_resize(a, 4, 3), w)), [x]


def _cosine(rng):
    a, b = rng.standard_normal((2, 5, 3)), rng.standard_normal((2, 5, 3))
    w1, w2 = rng.standard_normal((2, 5)), rng.standard_normal((2, 5, 5))
    return (
        lambda x, y: _weighted_sum(te.cosine_similarity_frames(x, y), w1)
        + _weighted_sum(te.pairwise_cosine(x, y), w2)
    ), [a, b]


def _attention(rng):
    store = ParameterStore(np.float64, seed=int(rng.integers(1 << 30)))
    bins, channels, d_model, frames = 4, 4, 6, 3
    attention = VisualContextAttention(store, "attn", bins, channels, d_model, 5, 2)
    speech = rng.standard_normal((2, channels, bins, 2 * frames))
    context = rng.standard_normal((2, frames, d_model))
    names = [attention.w_q, attention.w_k, attention.w_v]
    arrays = [store[n].data.copy() for n in names]
    with te.no_grad():
        probe, _ = attention(dict(zip(names, [Tensor(a) for a in arrays])), Tensor(speech), Tensor(context))
    w = rng.standard_normal(probe.shape)

    def closure(s, c, *params):
        out, _ = attention(dict(zip(names, params)), s, c)
        return _weighted_sum(out, w)

    return closure, [speech, context] + arrays


def _sync_losses(rng):
    f_a, f_v = rng.standard_normal((2, 5, 4)), rng.standard_normal((2, 5, 4))
    return (
        lambda a, v: info_nce(a, v, 0.7) + encoder_sync_loss(a, v) + generator_sync_loss(a, v)
    ), [f_a, f_v]


def _gan_losses(rng):
    logits = [rng.standard_normal(3) for _ in range(4)]

    def closure(ru, rc, fu, fc):
        real = [DiscriminatorScores(ru, rc)]
        fake = [DiscriminatorScores(fu, fc)]
        return gan_discriminator_loss(real, fake) + gan_generator_loss(fake)

    return closure, logits


def _total_loss(rng):
    preds = [rng.standard_normal((2, 4, 3)), rng.standard_normal((2, 8, 6))]
    targets = [rng.standard_normal((2, 4, 3)), rng.standard_normal((2, 8, 6))]
    adv, sync = rng.standard_normal(3), rng.standard_normal(3)
    weights = LossWeights()

    def closure(p1, p2, a, s):
        recon = reconstruction_loss([p1, p2], targets)
        return total_generator_loss(te.mean(a * a), recon, te.mean(s * s), weights)

    return closure, preds + [adv, sync]


CASES: Dict[str, Builder] = {
    "add": _binary(te.add),
    "sub": _binary(te.sub),
    "mul": _binary(te.mul),
    "div": _binary(te.div, positive_rhs=True),
    "power": _unary(lambda a: te.power(a, 3.0), _normal),
    "power_fractional": _unary(lambda a: te.power(a, 1.5), _positive),
    "matmul": _matmul,
    "exp": _unary(te.exp, _normal),
    "log": _unary(te.log, _positive),
    "sqrt": _unary(te.sqrt, _positive),
    "tanh": _unary(te.tanh, _normal),
    "sigmoid": _unary(te.sigmoid, _normal),
    "softplus": _unary(te.softplus, _normal),
    "leaky_relu": _unary(te.leaky_relu, _signed),
    "silu": _unary(te.silu, _normal),
    "absolute": _unary(te.absolute, _signed),
    "reductions": _reductions,
    "reshape_transpose": _reshape_transpose,
    "indexing": _indexing,
    "broadcast": _broadcast,
    "concat_stack": _concat_stack,
    "conv1d": _conv(1),
    "conv2d": _conv(2),
    "conv3d": _conv(3),
    "gru_bidirectional": _gru,
    "softmax": _softmax,
    "bilinear_resize": _bilinear,
    "cosine": _cosine,
    "attention": _attention,
    "sync_losses": _sync_losses,
    "gan_losses": _gan_losses,
    "total_generator_loss": _total_loss,
}


def check_r1(rng: np.random.Generator, eps: float = 1e-4) -> float:
    """
    Error relativo del gradiente de R1 respecto a los parámetros de un
    discriminador pequeño frente a diferencias centrales del valor.
    """
    config = ModelConfig(
        n_mels=8, d_model=4, discriminator_base_channels=2, discriminator_max_channels=4,
        activation="silu", visual_channels=(2,), visual_strides=(1,), generator_channels=(4, 4, 4),
    )
    store = ParameterStore(np.float64, seed=int(rng.integers(1 << 30)))
    disc = StageDiscriminator(store, "d", config, bins=8, blocks=1)
    names = store.names()
    tensors = [store[n] for n in names]
    real = [rng.standard_normal((2, 8, 6))]
    condition = Tensor(rng.standard_normal((2, config.d_model)))

    def score_fn(inputs):
        params = dict(zip(names, tensors))
        scores = disc(params, inputs[0], condition)
        return [[scores.unconditional, scores.conditional]]

    result = r1_penalty(score_fn, real, tensors, gamma=1.0)
    analytic_parts, numeric_parts = [], []
    for tensor, analytic in zip(tensors, result.grads):
        flat = tensor.data.reshape(-1)
        numeric = np.zeros(flat.size)
        for position in range(flat.size):
            original = flat[position]
            flat[position] = original + eps
            plus = r1_penalty(score_fn, real, [], 1.0).value
            flat[position] = original - eps
            minus = r1_penalty(score_fn, real, [], 1.0).value
            flat[position] = original
            numeric[position] = (plus - minus) / (2 * eps)
        analytic_parts.append(analytic.reshape(-1))
        numeric_parts.append(numeric)
    return relative_error(np.concatenate(analytic_parts), np.concatenate(numeric_parts))


@dataclass
class SuiteReport:
    """Errores máximos por caso sobre todas las semillas."""

    errors: Dict[str, float] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures


def run_suite(
    seeds: Sequence[int] = range(10),
    tolerance: float = 1e-4,
    cases: Sequence[str] = None,
    include_r1: bool = True,
    logger: logging.Logger = None,
) -> SuiteReport:
    """
    Ejecuta todos los casos para cada semilla.

    Returns:
        SuiteReport: Error máximo por caso y lista de casos fallidos
    """
    logger = logger or logging.getLogger(__name__)
    selected = list(cases) if cases else list(CASES)
    report = SuiteReport()
    start = time.time()
    checker = GradientChecker(eps=1e-5)

    order = list(CASES)
    for name in selected:
        if name not in CASES:
            raise KeyError(f"Unknown gradient check case: {name}")
        index = order.index(name)
        worst = 0.0
        for seed in seeds:
            rng = np.random.default_rng([int(seed), index])
            closure, inputs = CASES[name](rng)
            result = checker.check(closure, inputs)
            worst = max(worst, result.max_relative_error)
        report.errors[name] = worst
        if not worst < tolerance:
            report.failures.append(name)
        logger.info(f"gradcheck {name}: max relative error {worst:.3e}")

    if include_r1:
        worst = max(check_r1(np.random.default_rng([int(s), 1])) for s in seeds)
        report.errors["r1_penalty"] = worst
        if not worst < tolerance:
            report.failures.append("r1_penalty")
        logger.info(f"gradcheck r1_penalty: max relative error {worst:.3e}")

    report.seconds = time.time() - start
    return report
