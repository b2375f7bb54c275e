"""
Evaluación a posteriori de VCA-GAN
==================================

- Puntuaciones de sincronía por barrido de desfases entre rasgos de vídeo
  y de audio (distancia en el desfase nulo y confianza local).
- Fidelidad mel: L1 y convergencia espectral.
- Recuperación de tokens: clasificación de cada segmento del mel generado
  por la plantilla de fonema más cercana, con precisión global y
  restringida a homófenos.
- Exportación de artefactos: MELB, CSV, PGM, WAV y mapas de atención.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import tensor_engine as te
from .audio_processor import AudioProcessor, LinearSpectrogram, MelSpectrogram, Waveform
from .corpus_builder import HOMOPHENES, PHONEMES, Corpus, TokenScript
from .media_io import write_matrix_csv, write_melb, write_pgm, write_summary, write_wav
from .vca_gan import VCAGAN
from ..utils import resolve_worker_count


class EvaluationError(Exception):
    """Excepción para errores de evaluación"""

    pass


@dataclass
class SyncScores:
    """Distancia en desfase nulo, confianza y curva d(o)."""

    lse_d: float
    lse_c: float
    distances: Dict[int, float]

    @property
    def best_offset(self) -> int:
        return min(self.distances, key=lambda o: (self.distances[o], abs(o)))


@dataclass
class TokenRecovery:
    accuracy: float
    homophene_accuracy: Optional[float]
    predictions: List[str]
    correct: int = 0
    homophene_correct: int = 0
    homophene_total: int = 0


@dataclass
class PhonemeTemplates:
    """Segmento mel medio por fonema (F × longitud de token)."""

    templates: Dict[str, np.ndarray]
    segment_frames: int

    def labels(self) -> List[str]:
        return list(self.templates)


def _unit_rows(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    return features / np.maximum(norms, 1e-8)


def _offset_distances(f_v: np.ndarray, f_a: np.ndarray, offsets: Sequence[int], frames: slice) -> Dict[int, float]:
    """d(o) = media de ‖v_t − a_{t+o}‖ sobre las t de `frames` con t+o válido."""
    total = f_v.shape[0]
    start, stop = frames.start, frames.stop
    out = {}
    for o in offsets:
        lo = max(start, -o)
        hi = min(stop, total - o)
        if hi <= lo:
            continue
        out[o] = float(np.mean(np.linalg.norm(f_v[lo:hi] - f_a[lo + o : hi + o], axis=-1)))
    return out


def sync_scores(
    f_v: np.ndarray,
    f_a: np.ndarray,
    max_offset: int = 8,
    probe_window: int = 5,
) -> SyncScores:
    """
    Barrido de desfases −max_offset..+max_offset sobre rasgos normalizados L2.

    Args:
        f_v: Rasgos visuales locales (T, D)
        f_a: Rasgos de audio (T, D)
        max_offset: Desfase máximo en fotogramas
        probe_window: Ventana de la confianza local (stride 1)

    Returns:
        SyncScores: lse_d = d(0); lse_c = mediana por ventana de
            (media_o d(o) − min_o d(o))

    Raises:
        EvaluationError: Formas distintas o desfase ≥ T
    """
    f_v = np.asarray(f_v, dtype=np.float64)
    f_a = np.asarray(f_a, dtype=np.float64)
    if f_v.shape != f_a.shape or f_v.ndim != 2:
        raise EvaluationError(f"Feature shapes must match as (T, D), got {f_v.shape} and {f_a.shape}")
    frames = f_v.shape[0]
    if max_offset >= frames:
        raise EvaluationError(f"Offset range ±{max_offset} exceeds sequence length {frames}")

    f_v, f_a = _unit_rows(f_v), _unit_rows(f_a)
    offsets = range(-max_offset, max_offset + 1)
    distances = _offset_distances(f_v, f_a, offsets, slice(0, frames))

    width = min(probe_window, frames)
    confidences = []
    for start in range(frames - width + 1):
        local = _offset_distances(f_v, f_a, offsets, slice(start, start + width))
        values = np.array(list(local.values()))
        confidences.append(float(values.mean() - values.min()))
    return SyncScores(distances[0], float(np.median(confidences)), distances)


def mel_metrics(predicted: np.ndarray, target: np.ndarray) -> Dict[str, float]:
    """
    L1 medio elemento a elemento y SC = ‖y − ŷ‖_F / ‖y‖_F.

    Raises:
        EvaluationError: Formas distintas
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise EvaluationError(f"Mel shapes differ: {predicted.shape} vs {target.shape}")
    reference = np.linalg.norm(target)
    difference = np.linalg.norm(target - predicted)
    if reference == 0.0:
        sc = 0.0 if difference == 0.0 else float("inf")
    else:
        sc = float(difference / reference)
    return {"l1": float(np.mean(np.abs(target - predicted))), "spectral_convergence": sc}


def build_templates(corpus: Corpus, split: str = "train", mel_per_frame: int = 4) -> PhonemeTemplates:
    """
    Media de los segmentos mel de cada fonema en un split.

    Raises:
        EvaluationError: Si algún fonema no aparece
    """
    sums: Dict[str, np.ndarray] = {}
    counts: Dict[str, int] = {}
    segment = None
    for entry in corpus.split(split):
        _, mel = corpus.load_sample(entry)
        segment = entry.script.frames_per_token * mel_per_frame
        for index, phoneme in enumerate(entry.script.tokens):
            chunk = mel[:, index * segment : (index + 1) * segment].astype(np.float64)
            sums[phoneme] = sums.get(phoneme, 0.0) + chunk
            counts[phoneme] = counts.get(phoneme, 0) + 1
    missing = [p for p in PHONEMES if p not in counts]
    if missing:
        raise EvaluationError(f"Template set is incomplete; no examples for {missing}")
    return PhonemeTemplates({p: sums[p] / counts[p] for p in PHONEMES}, segment)


def token_recovery(mel: np.ndarray, script: TokenScript, templates: PhonemeTemplates) -> TokenRecovery:
    """
    Clasifica cada segmento de token por la plantilla más cercana (L1).

    Raises:
        EvaluationError: Plantillas incompletas o longitud incoherente
    """
    missing = [p for p in set(script.tokens) if p not in templates.templates]
    if missing:
        raise EvaluationError(f"Template set is incomplete; missing {sorted(missing)}")
    segment = templates.segment_frames
    mel = np.asarray(mel, dtype=np.float64)
    if mel.shape[1] != segment * len(script.tokens):
        raise EvaluationError(
            f"Mel has {mel.shape[1]} frames, script needs {segment * len(script.tokens)}"
        )

    labels = templates.labels()
    stacked = np.stack([templates.templates[p] for p in labels])
    predictions = []
    for index in range(len(script.tokens)):
        chunk = mel[:, index * segment : (index + 1) * segment]
        distances = np.mean(np.abs(stacked - chunk[None]), axis=(1, 2))
        predictions.append(labels[int(np.argmin(distances))])

    hits = [p == t for p, t in zip(predictions, script.tokens)]
    homophene_hits = [h for h, t in zip(hits, script.tokens) if t in HOMOPHENES]
    return TokenRecovery(
        accuracy=sum(hits) / len(hits),
        homophene_accuracy=(sum(homophene_hits) / len(homophene_hits)) if homophene_hits else None,
        predictions=predictions,
        correct=sum(hits),
        homophene_correct=sum(homophene_hits),
        homophene_total=len(homophene_hits),
    )


@dataclass
class SampleEvaluation:
    sample_id: str
    mel: Dict[str, float]
    sync: SyncScores
    tokens: TokenRecovery


@dataclass
class SplitReport:
    metrics: Dict[str, float]
    samples: List[SampleEvaluation] = field(default_factory=list)


class Evaluator:
    """
    Evaluación de un modelo entrenado sobre un split del corpus.

    Los rasgos de sincronía se calculan con los codificadores de `scorer`
    (por defecto el propio modelo).
    """

    def __init__(
        self,
        model: VCAGAN,
        processor: AudioProcessor = None,
        scorer: VCAGAN = None,
        max_offset: int = 8,
        probe_window: int = 5,
        use_postnet: bool = False,
        griffin_lim_iters: int = 100,
        workers: int = None,
        logger: logging.Logger = None,
    ):
        self.model = model
        self.processor = processor or AudioProcessor()
        self.scorer = scorer or model
        self.max_offset = max_offset
        self.probe_window = probe_window
        self.use_postnet = use_postnet
        self.griffin_lim_iters = griffin_lim_iters
        self.workers = resolve_worker_count(workers)
        self.logger = logger or logging.getLogger(__name__)

    def synthesize_mel(self, clip: np.ndarray):
        """Síntesis determinista (ruido nulo) sin grafo."""
        with te.no_grad():
            return self.model.synthesize(clip)

    def sync_features(self, clip: np.ndarray, mel: np.ndarray):
        """(F_v, F_a) de un clip y un mel con los codificadores del evaluador."""
        with te.no_grad():
            f_v = self.scorer.encode_local_visual(clip)
            f_a = self.scorer.encode_local_audio(mel)
        return f_v.data[0], f_a.data[0]

    def evaluate_sample(self, corpus: Corpus, entry, templates: PhonemeTemplates) -> SampleEvaluation:
        clip, mel = corpus.load_sample(entry)
        result = self.synthesize_mel(clip)
        predicted = result.final.data[0]
        f_v, f_a = self.sync_features(clip, predicted)
        return SampleEvaluation(
            entry.sample_id,
            mel_metrics(predicted, mel),
            sync_scores(f_v, f_a, self.max_offset, self.probe_window),
            token_recovery(predicted, entry.script, templates),
        )

    def evaluate(self, corpus: Corpus, split: str = "test", templates: PhonemeTemplates = None) -> SplitReport:
        """
        Métricas medias del split; la precisión de homófenos se agrega por
        token, no por clip.

        Raises:
            EvaluationError: Split vacío o plantillas incompletas
        """
        entries = corpus.split(split)
        if not entries:
            raise EvaluationError(f"Split '{split}' is empty")
        templates = templates or build_templates(corpus)

        results: List[Optional[SampleEvaluation]] = [None] * len(entries)
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            futures = {
                executor.submit(self.evaluate_sample, corpus, entry, templates): index
                for index, entry in enumerate(entries)
            }
            for future in as_completed(futures):
                results[futures[future]] = future.result()

        tokens = sum(len(e.script.tokens) for e in entries)
        homophene_total = sum(r.tokens.homophene_total for r in results)
        metrics = {
            "samples": float(len(results)),
            "mel_l1": float(np.mean([r.mel["l1"] for r in results])),
            "mel_sc": float(np.mean([r.mel["spectral_convergence"] for r in results])),
            "lse_d": float(np.mean([r.sync.lse_d for r in results])),
            "lse_c": float(np.mean([r.sync.lse_c for r in results])),
            "sync_offset0_rate": float(np.mean([r.sync.best_offset == 0 for r in results])),
            "token_accuracy": sum(r.tokens.correct for r in results) / tokens,
            "homophene_accuracy": (
                sum(r.tokens.homophene_correct for r in results) / homophene_total
                if homophene_total
                else float("nan")
            ),
            "chance_accuracy": 1.0 / len(PHONEMES),
        }
        self.logger.info(
            f"Evaluated {len(results)} '{split}' samples: "
            + ", ".join(f"{k}={v:.4f}" for k, v in metrics.items())
        )
        return SplitReport(metrics, results)

    # ------------------------------------------------------------------
    # Artefactos
    # ------------------------------------------------------------------

    def vocode(self, mel: np.ndarray, frames: int) -> Waveform:
        """Mel normalizado → muestras (postnet o banco transpuesto + Griffin-Lim)."""
        processor = self.processor
        if self.use_postnet:
            mags = self.model.postnet.magnitudes(self.model.params(), te.Tensor(mel))
            spec = LinearSpectrogram(mags, processor.window, processor.hop)
        else:
            spec = processor.mel_to_linear(
                MelSpectrogram(mel, processor.hop, processor.sample_rate, processor.fps, True)
            )
        length = frames * processor.samples_per_video_frame
        return processor.griffin_lim(spec, self.griffin_lim_iters, length=length)

    def export_artifacts(self, clip: np.ndarray, out_dir: str, stem: str = "sample") -> Dict[str, str]:
        """
        Sintetiza un clip y escribe sus artefactos.

        Returns:
            Dict[str, str]: Tipo de artefacto → ruta
        """
        os.makedirs(out_dir, exist_ok=True)
        processor = self.processor
        result = self.synthesize_mel(clip)
        mel = result.final.data[0]
        frames = result.local.shape[1]

        paths = {
            "melb": os.path.join(out_dir, f"{stem}.melb"),
            "csv": os.path.join(out_dir, f"{stem}_mel.csv"),
            "pgm": os.path.join(out_dir, f"{stem}_mel.pgm"),
            "wav": os.path.join(out_dir, f"{stem}.wav"),
        }
        write_melb(
            paths["melb"],
            MelSpectrogram(mel, processor.hop, processor.sample_rate, processor.fps, True),
        )
        write_matrix_csv(paths["csv"], mel)
        write_pgm(paths["pgm"], mel, flip_vertical=True)
        write_wav(paths["wav"], self.vocode(mel, frames))

        for stage, weights in enumerate(result.attention):
            if weights is None:
                continue
            key = f"attention_s{stage + 2}"
            paths[key] = os.path.join(out_dir, f"{stem}_{key}.csv")
            write_matrix_csv(paths[key], weights[0])

        self.logger.info(f"Exported {len(paths)} artifacts for '{stem}' into {out_dir}")
        return paths

    def write_report(self, report: SplitReport, path: str) -> None:
        write_summary(path, report.metrics)
