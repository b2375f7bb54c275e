"""
Entrenamiento adversario alterno de VCA-GAN
===========================================

Un paso de discriminador (pérdida multiescala + R1 sobre objetivos reales
con las salidas del generador desacopladas) seguido de un paso de
generador y codificadores (adversaria + reconstrucción + sincronización).

Incluye el optimizador Adam, el muestreo de lotes con semilla por paso,
la validación periódica, los checkpoints reanudables y el entrenamiento
separado de la postnet.
"""

import csv
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import tensor_engine as te
from .audio_processor import AudioProcessor
from .corpus_builder import Corpus, CorpusEntry, CorpusError, multiscale_targets, sample_window
from .losses import (
    LossWeights,
    encoder_sync_loss,
    gan_discriminator_loss,
    gan_generator_loss,
    generator_sync_loss,
    postnet_loss,
    r1_penalty,
    reconstruction_loss,
    total_generator_loss,
)
from .discriminator import temporal_average
from .media_io import read_checkpoint, read_wav
from .tensor_engine import Tensor, gradients
from .vca_gan import DISCRIMINATOR_PREFIXES, GENERATOR_PREFIXES, POSTNET_PREFIXES, VCAGAN
from ..utils import chunks, partitioned_rng

LOSS_COLUMNS = ("step", "L_g", "L_d", "L_recon", "L_e_sync", "L_g_sync", "R1")


class TrainingError(Exception):
    """Excepción para errores del entrenamiento"""

    pass


class NumericError(TrainingError):
    """Pérdida no finita durante el entrenamiento"""

    pass


@dataclass
class TrainingConfig:
    """Hiperparámetros de optimización y del bucle de entrenamiento."""

    steps: int = 5000
    batch_size: int = 8
    window_frames: int = 16
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_recon: float = 50.0
    lambda_sync: float = 0.5
    tau: float = 1.0
    r1_gamma: float = 1.0
    r1_every: int = 1
    use_sync: bool = True
    freeze_discriminator: bool = False
    val_every: int = 250
    val_samples: int = 20
    checkpoint_every: int = 500
    log_every: int = 50
    postnet_steps: int = 2000
    seed: int = 0

    def __post_init__(self):
        for name in ("steps", "batch_size", "window_frames", "r1_every", "val_every",
                     "checkpoint_every", "log_every"):
            if getattr(self, name) < 1:
                raise TrainingError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_recon, self.lambda_sync, self.tau, self.r1_gamma)


class AdamOptimizer:
    """
    Adam con corrección de sesgo y momentos por parámetro.

    Los buffers se crean con la forma y dtype del parámetro en su primera
    actualización.
    """

    def __init__(
        self,
        learning_rate: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def update(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        """
        Aplica un paso de Adam en sitio sobre los datos de los parámetros.

        Args:
            params: Nombre → Tensor a actualizar
            grads: Nombre → gradiente de la misma forma

        Raises:
            TrainingError: Si falta un gradiente o las formas no coinciden
        """
        for name, tensor in params.items():
            if name not in grads:
                raise TrainingError(f"Missing gradient for parameter '{name}'")
            if np.shape(grads[name]) != tensor.shape:
                raise TrainingError(
                    f"Gradient shape {np.shape(grads[name])} does not match parameter "
                    f"'{name}' {tensor.shape}"
                )
            for buffers in (self.m, self.v):
                if name in buffers and buffers[name].shape != tensor.shape:
                    raise TrainingError(
                        f"Optimizer state for '{name}' has shape {buffers[name].shape}, "
                        f"parameter has {tensor.shape}"
                    )

        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1**t
        correction2 = 1.0 - self.beta2**t
        for name, tensor in params.items():
            g = np.asarray(grads[name], dtype=tensor.dtype)
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None:
                m = np.zeros_like(tensor.data)
                v = np.zeros_like(tensor.data)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name] = m
            self.v[name] = v
            step = self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            tensor.data -= step.astype(tensor.dtype, copy=False)

    def state_arrays(self, tag: str, dtype=np.float64) -> Dict[str, np.ndarray]:
        arrays = {f"adam.{tag}.step": np.array([self.step_count], dtype=dtype)}
        for name in self.m:
            arrays[f"adam.{tag}.m.{name}"] = self.m[name]
            arrays[f"adam.{tag}.v.{name}"] = self.v[name]
        return arrays

    def load_arrays(self, arrays: Mapping[str, np.ndarray], tag: str) -> None:
        """
        Restaura el estado guardado con `state_arrays`.

        Raises:
            TrainingError: Si el checkpoint no contiene estado para `tag`
        """
        key = f"adam.{tag}.step"
        if key not in arrays:
            raise TrainingError(f"Checkpoint has no optimizer state for '{tag}'")
        self.step_count = int(np.asarray(arrays[key]).ravel()[0])
        self.m.clear()
        self.v.clear()
        for prefix, target in ((f"adam.{tag}.m.", self.m), (f"adam.{tag}.v.", self.v)):
            for name, value in arrays.items():
                if name.startswith(prefix):
                    target[name[len(prefix):]] = np.array(value)


@dataclass
class Batch:
    """Lote de ventanas alineadas y sus objetivos multiescala."""

    clips: np.ndarray
    mels: np.ndarray
    targets: List[np.ndarray]
    sample_ids: List[str]
    starts: List[int]

    @property
    def size(self) -> int:
        return self.clips.shape[0]

    @property
    def frames(self) -> int:
        return self.clips.shape[1]


@dataclass
class StepRecord:
    """Pérdidas de un paso de entrenamiento."""

    step: int
    L_g: float
    L_d: float
    L_recon: float
    L_e_sync: float
    L_g_sync: float
    R1: float

    def as_row(self) -> List:
        return [self.step] + [repr(float(getattr(self, c))) for c in LOSS_COLUMNS[1:]]

    def losses(self) -> Dict[str, float]:
        values = asdict(self)
        values.pop("step")
        return values


@dataclass
class TrainingSummary:
    steps_completed: int
    best_val_recon: float
    initial_val_recon: Optional[float]
    last_checkpoint: Optional[str]
    best_checkpoint: Optional[str]
    interrupted: bool = False
    history: List[Dict[str, float]] = field(default_factory=list)


class Trainer:
    """
    Bucle de entrenamiento de VCA-GAN sobre un corpus sintético.

    El hilo de entrenamiento es el único que toca el modelo; el siguiente
    lote se prepara en un hilo auxiliar.
    """

    def __init__(
        self,
        model: VCAGAN,
        config: TrainingConfig = None,
        processor: AudioProcessor = None,
        logger: logging.Logger = None,
        logger_manager=None,
        config_manager=None,
    ):
        """
        Args:
            model: Red a entrenar
            config: Hiperparámetros
            processor: Cadena de audio (para la postnet)
            logger: Logger opcional
            logger_manager: LoggerManager para registros estructurados
            config_manager: ConfigManager cuyo contenido se guarda junto a
                cada checkpoint como `<ckpt>.cfg`
        """
        self.model = model
        self.config = config or TrainingConfig()
        self.processor = processor or AudioProcessor()
        self.logger = logger or logging.getLogger(__name__)
        self.logger_manager = logger_manager
        self.config_manager = config_manager

        c = self.config
        self.gen_optimizer = AdamOptimizer(c.learning_rate, c.beta1, c.beta2, c.adam_eps)
        self.disc_optimizer = AdamOptimizer(c.learning_rate, c.beta1, c.beta2, c.adam_eps)
        self.postnet_optimizer = AdamOptimizer(c.learning_rate, c.beta1, c.beta2, c.adam_eps)
        self.weights = c.weights
        self.step = 0
        self.best_val_recon = float("inf")
        self.postnet_steps_done = 0
        self._stop = threading.Event()
        self._linear_cache: Dict[str, np.ndarray] = {}

        self.stats = {
            "start_time": None,
            "end_time": None,
            "steps_completed": 0,
            "validations": 0,
            "checkpoints_written": 0,
            "errors": [],
        }

    # ------------------------------------------------------------------
    # Control
    # ------------------------------------------------------------------

    def request_stop(self) -> None:
        """Pide una parada ordenada al final del paso en curso."""
        self._stop.set()

    @property
    def stop_requested(self) -> bool:
        return self._stop.is_set()

    # ------------------------------------------------------------------
    # Lotes
    # ------------------------------------------------------------------

    def _window(self, entries: Sequence[CorpusEntry]) -> int:
        shortest = min(e.script.frames for e in entries)
        return min(self.config.window_frames, shortest)

    def make_batch(self, corpus: Corpus, step: int) -> Batch:
        """
        Lote del paso `step`: muestras y ventanas sorteadas con (seed, step).

        Raises:
            CorpusError: Si el split de entrenamiento está vacío
        """
        entries = corpus.split("train")
        if not entries:
            raise CorpusError("Training split is empty")
        rng = partitioned_rng(self.config.seed, step, 0)
        picks = rng.choice(
            len(entries), size=self.config.batch_size, replace=len(entries) < self.config.batch_size
        )
        window = self._window(entries)

        clips, mels, ids, starts = [], [], [], []
        for index in picks:
            entry = entries[int(index)]
            clip, mel = corpus.load_sample(entry)
            clip_w, mel_w, start = sample_window(clip, mel, window, rng)
            clips.append(clip_w)
            mels.append(mel_w)
            ids.append(entry.sample_id)
            starts.append(start)

        dtype = self.model.dtype
        clips = np.stack(clips).astype(dtype)
        mels = np.stack(mels).astype(dtype)
        targets = multiscale_targets(mels, self.model.config.n_mels, self.model.config.stages)
        return Batch(clips, mels, targets, ids, starts)

    def _noise(self, batch: Batch, step: int) -> Tensor:
        return self.model.sample_noise(batch.size, batch.frames, partitioned_rng(self.config.seed, step, 1))

    # ------------------------------------------------------------------
    # Pasos de optimización
    # ------------------------------------------------------------------

    def _scored_targets(self, batch: Batch) -> List[Tensor]:
        return [Tensor(t) for t in batch.targets]

    def discriminator_step(self, batch: Batch, noise: Tensor, step: int) -> Dict[str, float]:
        """
        Actualiza solo los discriminadores con la pérdida de D más R1.

        Returns:
            Dict[str, float]: L_d y R1
        """
        model = self.model
        with te.no_grad():
            fake = model.synthesize(batch.clips, noise=noise)
        fake_mels = [m.detach() for m in fake.mels]
        context = fake.context.detach()
        params = model.params()

        real_scores = model.discriminate(self._scored_targets(batch), context, params)
        fake_scores = model.discriminate(fake_mels, context, params)
        loss_d = gan_discriminator_loss(real_scores, fake_scores)

        names = model.store.names(DISCRIMINATOR_PREFIXES)
        tensors = [model.store[n] for n in names]
        grads = gradients(loss_d, tensors)

        r1_value = 0.0
        interval = self.config.r1_every
        if self.config.r1_gamma > 0 and step % interval == 0:
            stages = model.discriminator.stages
            condition = temporal_average(context)

            def score_fn(inputs: List[Tensor]) -> List[List[Tensor]]:
                out = []
                for stage, mel in zip(stages, inputs):
                    scores = model.discriminator.discriminators[stage](params, mel, condition)
                    out.append([scores.unconditional, scores.conditional])
                return out

            real_inputs = [batch.targets[s] for s in stages]
            r1 = r1_penalty(score_fn, real_inputs, tensors, self.config.r1_gamma)
            r1_value = r1.value
            grads = [g + interval * h for g, h in zip(grads, r1.grads)]

        if not self.config.freeze_discriminator:
            self.disc_optimizer.update(dict(zip(names, tensors)), dict(zip(names, grads)))
        return {"L_d": loss_d.item(), "R1": r1_value}

    def generator_step(self, batch: Batch, noise: Tensor) -> Dict[str, float]:
        """
        Actualiza generador y codificadores con la pérdida total.

        Returns:
            Dict[str, float]: L_g, L_recon, L_e_sync y L_g_sync
        """
        model = self.model
        frozen_disc = DISCRIMINATOR_PREFIXES + POSTNET_PREFIXES
        params = model.params(detach=frozen_disc)
        out = model.synthesize(batch.clips, noise=noise, params=params)

        adversarial = gan_generator_loss(model.discriminate(out.mels, out.context, params))
        if model.config.single_discriminator:
            recon = reconstruction_loss([out.mels[-1]], [batch.targets[-1]])
        else:
            recon = reconstruction_loss(out.mels, batch.targets)

        values = {"L_e_sync": 0.0, "L_g_sync": 0.0}
        sync = 0.0
        if self.config.use_sync:
            f_a = model.encode_local_audio(batch.mels, params)
            encoder_term = encoder_sync_loss(f_a, out.local, self.config.tau)
            scorer = model.params(detach=frozen_disc + ("phi_a",))
            f_hat = model.encode_local_audio(out.mels[-1], scorer)
            generator_term = generator_sync_loss(f_hat, out.local.detach())
            sync = encoder_term + generator_term
            values = {"L_e_sync": encoder_term.item(), "L_g_sync": generator_term.item()}

        total = total_generator_loss(adversarial, recon, sync, self.weights)
        names = model.store.names(GENERATOR_PREFIXES)
        tensors = [model.store[n] for n in names]
        grads = gradients(total, tensors)
        self.gen_optimizer.update(dict(zip(names, tensors)), dict(zip(names, grads)))

        values.update({"L_g": adversarial.item(), "L_recon": recon.item()})
        return values

    def train_step(self, batch: Batch, step: int = None, out_dir: str = None) -> StepRecord:
        """
        Un paso D seguido de un paso G sobre el mismo lote y ruido.

        Raises:
            NumericError: Si alguna pérdida no es finita (tras volcar el
                diagnóstico en `out_dir`)
        """
        step = self.step if step is None else step
        noise = self._noise(batch, step)
        losses = self.discriminator_step(batch, noise, step)
        losses.update(self.generator_step(batch, noise))
        record = StepRecord(step=step, **losses)

        bad = [k for k, v in record.losses().items() if not np.isfinite(v)]
        if bad:
            dump = self._dump_nonfinite(batch, noise, record, out_dir)
            raise NumericError(
                f"Non-finite loss at step {step}: {', '.join(bad)}"
                + (f"; diagnostics written to {dump}" if dump else "")
            )
        return record

    def _dump_nonfinite(self, batch: Batch, noise: Tensor, record: StepRecord, out_dir: str) -> Optional[str]:
        if not out_dir:
            return None
        path = os.path.join(out_dir, f"nonfinite_step{record.step}.npz")
        np.savez_compressed(
            path,
            clips=batch.clips,
            mels=batch.mels,
            noise=noise.data,
            losses=np.array([getattr(record, c) for c in LOSS_COLUMNS[1:]]),
            loss_names=np.array(LOSS_COLUMNS[1:]),
        )
        return path

    # ------------------------------------------------------------------
    # Validación
    # ------------------------------------------------------------------

    def validate(self, corpus: Corpus, split: str = "val") -> Dict[str, float]:
        """
        L_recon (y L_e_sync) medias sobre clips completos con ruido nulo.

        Returns:
            Dict[str, float]: Métricas de validación
        """
        entries = corpus.split(split)[: self.config.val_samples]
        if not entries:
            raise CorpusError(f"Split '{split}' is empty")
        model = self.model
        config = model.config
        recon_total, sync_total, count = 0.0, 0.0, 0
        with te.no_grad():
            for group in chunks(entries, self.config.batch_size):
                samples = [corpus.load_sample(e) for e in group]
                clips = np.stack([s[0] for s in samples]).astype(model.dtype)
                mels = np.stack([s[1] for s in samples]).astype(model.dtype)
                targets = multiscale_targets(mels, config.n_mels, config.stages)
                out = model.synthesize(clips)
                if config.single_discriminator:
                    recon = reconstruction_loss([out.mels[-1]], [targets[-1]])
                else:
                    recon = reconstruction_loss(out.mels, targets)
                f_a = model.encode_local_audio(mels)
                sync = encoder_sync_loss(f_a, out.local, self.config.tau)
                recon_total += recon.item() * len(group)
                sync_total += sync.item() * len(group)
                count += len(group)
        self.stats["validations"] += 1
        return {"L_recon": recon_total / count, "L_e_sync": sync_total / count}

    # ------------------------------------------------------------------
    # Checkpoints
    # ------------------------------------------------------------------

    def checkpoint_arrays(self) -> Dict[str, np.ndarray]:
        dtype = self.model.dtype
        arrays = {}
        arrays.update(self.gen_optimizer.state_arrays("gen", dtype))
        arrays.update(self.disc_optimizer.state_arrays("disc", dtype))
        arrays["trainer.step"] = np.array([self.step], dtype=dtype)
        arrays["trainer.seed"] = np.array([self.config.seed], dtype=dtype)
        arrays["trainer.best"] = np.array(
            [self.best_val_recon if np.isfinite(self.best_val_recon) else -1.0], dtype=dtype
        )
        if self.postnet_steps_done:
            arrays["trainer.postnet_steps"] = np.array([self.postnet_steps_done], dtype=dtype)
        return arrays

    def save_checkpoint(self, path: str) -> str:
        self.model.save(path, extra=self.checkpoint_arrays())
        if self.config_manager is not None:
            self.config_manager.write(f"{path}.cfg")
        self.stats["checkpoints_written"] += 1
        return path

    def resume(self, path: str) -> int:
        """
        Restaura parámetros, estado de Adam y contador de pasos.

        Returns:
            int: Paso desde el que continúa el entrenamiento

        Raises:
            MediaFormatError: Checkpoint corrupto o de versión desconocida
            TrainingError: Checkpoint sin estado de entrenamiento
        """
        arrays = read_checkpoint(path)
        self.model.load_state(arrays)
        if "trainer.step" not in arrays:
            raise TrainingError(f"Checkpoint {path} has no trainer state; cannot resume")
        self.gen_optimizer.load_arrays(arrays, "gen")
        self.disc_optimizer.load_arrays(arrays, "disc")
        self.step = int(arrays["trainer.step"][0])
        best = float(arrays["trainer.best"][0])
        self.best_val_recon = best if best >= 0 else float("inf")
        if "trainer.postnet_steps" in arrays:
            self.postnet_steps_done = int(arrays["trainer.postnet_steps"][0])
        self.logger.info(f"Resumed from {path} at step {self.step}")
        return self.step

    # ------------------------------------------------------------------
    # Bucle principal
    # ------------------------------------------------------------------

    def _open_log(self, out_dir: str, append: bool):
        """
        Abre losses.csv. Al reanudar conserva solo las filas anteriores al
        paso restaurado, que se volverán a escribir desde ahí.
        """
        path = os.path.join(out_dir, "losses.csv")
        kept: List[List[str]] = []
        if append and os.path.exists(path):
            with open(path, encoding="utf-8", newline="") as existing:
                rows = list(csv.reader(existing))[1:]
            kept = [row for row in rows if row and int(row[0]) < self.step]
            dropped = len(rows) - len(kept)
            if dropped:
                self.logger.warning(f"Dropping {dropped} loss rows logged after step {self.step}")
        handle = open(path, "w", encoding="utf-8", newline="")
        writer = csv.writer(handle)
        writer.writerow(LOSS_COLUMNS)
        writer.writerows(kept)
        return handle, writer

    def fit(self, corpus: Corpus, out_dir: str, resume: str = None) -> TrainingSummary:
        """
        Entrena hasta `steps` pasos con validación periódica.

        Args:
            corpus: Corpus cargado
            out_dir: Directorio de checkpoints y registros
            resume: Checkpoint desde el que reanudar

        Returns:
            TrainingSummary: Resumen del entrenamiento

        Raises:
            NumericError: Pérdida no finita
            MediaFormatError: Checkpoint de reanudación inválido
        """
        os.makedirs(out_dir, exist_ok=True)
        if resume:
            self.resume(resume)
        last_path = os.path.join(out_dir, "last.vcag")
        best_path = os.path.join(out_dir, "best.vcag")
        total_steps = self.config.steps
        self.stats["start_time"] = time.time()

        initial = None
        history: List[Dict[str, float]] = []
        if self.step == 0 and corpus.split("val"):
            initial = self.validate(corpus)["L_recon"]
            history.append({"step": 0, "L_recon": initial})
            self.logger.info(f"Initial validation L_recon={initial:.5f}")

        handle, writer = self._open_log(out_dir, append=resume is not None)
        best_written = None
        try:
            with ThreadPoolExecutor(max_workers=1) as prefetch:
                pending = (
                    prefetch.submit(self.make_batch, corpus, self.step)
                    if self.step < total_steps
                    else None
                )
                while self.step < total_steps:
                    if self.stop_requested:
                        self.logger.warning(f"Stop requested; stopping at step {self.step}")
                        break
                    batch = pending.result()
                    if self.step + 1 < total_steps:
                        pending = prefetch.submit(self.make_batch, corpus, self.step + 1)

                    record = self.train_step(batch, self.step, out_dir)
                    writer.writerow(record.as_row())
                    handle.flush()
                    if self.logger_manager is not None and self.step % self.config.log_every == 0:
                        self.logger_manager.log_training_step(self.logger, record.step, record.losses())
                    self.step += 1
                    self.stats["steps_completed"] += 1

                    if corpus.split("val") and (
                        self.step % self.config.val_every == 0 or self.step == total_steps
                    ):
                        metrics = self.validate(corpus)
                        history.append({"step": self.step, **metrics})
                        if self.logger_manager is not None:
                            self.logger_manager.log_validation(self.logger, self.step, metrics)
                        if metrics["L_recon"] < self.best_val_recon:
                            self.best_val_recon = metrics["L_recon"]
                            best_written = self.save_checkpoint(best_path)

                    if self.step % self.config.checkpoint_every == 0:
                        self.save_checkpoint(last_path)
        finally:
            handle.close()
            self.stats["end_time"] = time.time()

        self.save_checkpoint(last_path)
        if best_written is None and os.path.exists(best_path):
            best_written = best_path
        return TrainingSummary(
            steps_completed=self.step,
            best_val_recon=self.best_val_recon,
            initial_val_recon=initial,
            last_checkpoint=last_path,
            best_checkpoint=best_written,
            interrupted=self.stop_requested and self.step < total_steps,
            history=history,
        )

    # ------------------------------------------------------------------
    # Postnet
    # ------------------------------------------------------------------

    def _linear_target(self, corpus: Corpus, entry: CorpusEntry) -> np.ndarray:
        if entry.sample_id not in self._linear_cache:
            wave = read_wav(os.path.join(corpus.root, entry.wav))
            spec = self.processor.linear_spectrogram(wave)
            self._linear_cache[entry.sample_id] = spec.mags / self.model.postnet.mag_scale
        return self._linear_cache[entry.sample_id]

    def postnet_step(self, corpus: Corpus, step: int) -> float:
        """Un paso L1 de la postnet sobre mels reales y magnitudes lineales."""
        entries = corpus.split("train")
        rng = partitioned_rng(self.config.seed, step, 2)
        picks = rng.choice(
            len(entries), size=self.config.batch_size, replace=len(entries) < self.config.batch_size
        )
        window = self._window(entries)
        mels, mags = [], []
        for index in picks:
            entry = entries[int(index)]
            clip, mel = corpus.load_sample(entry)
            linear = self._linear_target(corpus, entry)
            _, mel_w, start = sample_window(clip, mel, window, rng)
            mels.append(mel_w)
            mags.append(linear[:, 4 * start : 4 * (start + window)])

        model = self.model
        names = model.store.names(POSTNET_PREFIXES)
        tensors = [model.store[n] for n in names]
        predicted = model.postnet_forward(np.stack(mels).astype(model.dtype))
        loss = postnet_loss(predicted, np.stack(mags).astype(model.dtype))
        if not np.isfinite(loss.item()):
            raise NumericError(f"Non-finite postnet loss at step {step}")
        grads = gradients(loss, tensors)
        self.postnet_optimizer.update(dict(zip(names, tensors)), dict(zip(names, grads)))
        return loss.item()

    def fit_postnet(self, corpus: Corpus, out_path: str, steps: int = None) -> List[float]:
        """
        Entrena la postnet por separado y guarda el modelo completo.

        Returns:
            List[float]: Pérdida por paso
        """
        steps = steps or self.config.postnet_steps
        history = []
        for step in range(steps):
            if self.stop_requested:
                self.logger.warning(f"Stop requested; postnet training stopped at step {step}")
                break
            history.append(self.postnet_step(corpus, step))
            self.postnet_steps_done += 1
            if step % self.config.log_every == 0:
                self.logger.info(f"Postnet step {step}: L1={history[-1]:.5f}")
        self.save_checkpoint(out_path)
        return history

    def get_stats(self) -> Dict:
        return self.stats.copy()
