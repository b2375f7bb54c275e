"""
Constructor del corpus sintético vídeo/audio
============================================

Genera pares (vídeo de labios, audio) a partir de guiones de fonemas con
una correspondencia fonema → visema conocida y pares homófenos (m/b, f/v)
que comparten visema. El miembro del par se decide por el token situado
dos posiciones antes, fuera del campo receptivo temporal local, de modo
que solo el contexto global puede resolver la ambigüedad.

Disposición en disco:
    manifest.tsv   id, wav, melb, video, script, split
    wav/           audio PCM 16 bits
    mel/           espectrogramas MELB normalizados
    video/         clips VID0
"""

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tensor_engine as te
from .audio_processor import AudioProcessor, MelSpectrogram, Waveform
from .media_io import read_melb, read_video, write_melb, write_video, write_wav
from ..utils import partitioned_rng, resolve_worker_count

PHONEMES: Tuple[str, ...] = ("sil", "aa", "iy", "uw", "eh", "ow", "m", "b", "f", "v", "th", "r")

# Visema por fonema; m/b y f/v comparten forma de labios
VISEME_OF: Dict[str, int] = {
    "sil": 0, "aa": 1, "iy": 2, "uw": 3, "eh": 4, "ow": 5,
    "m": 6, "b": 6, "f": 7, "v": 7, "th": 8, "r": 9,
}

# (alto de la apertura, ancho de labios) en píxeles para un fotograma de 32
VISEME_SHAPES: Dict[int, Tuple[float, float]] = {
    0: (0.0, 14.0),
    1: (9.0, 14.0),
    2: (3.0, 18.0),
    3: (4.0, 8.0),
    4: (6.0, 16.0),
    5: (7.0, 10.0),
    6: (0.0, 12.0),
    7: (2.0, 15.0),
    8: (3.5, 12.0),
    9: (5.0, 11.0),
}

# Formantes (F1, F2) en Hz; los homófenos suenan distinto
FORMANTS: Dict[str, Tuple[float, float]] = {
    "aa": (730.0, 1090.0),
    "iy": (270.0, 2290.0),
    "uw": (300.0, 870.0),
    "eh": (530.0, 1840.0),
    "ow": (570.0, 840.0),
    "m": (280.0, 1200.0),
    "b": (620.0, 2600.0),
    "f": (400.0, 3100.0),
    "v": (760.0, 1500.0),
    "th": (450.0, 2000.0),
    "r": (460.0, 1300.0),
}

HOMOPHENE_PAIRS: Tuple[Tuple[str, str], ...] = (("m", "b"), ("f", "v"))
HOMOPHENES = frozenset(p for pair in HOMOPHENE_PAIRS for p in pair)
# El primer miembro del par sigue a estos tokens (dos posiciones antes)
FIRST_MEMBER_CUES = frozenset({"aa", "iy", "eh"})
UNAMBIGUOUS = tuple(p for p in PHONEMES if p not in HOMOPHENES)
VOWELS = frozenset({"aa", "iy", "uw", "eh", "ow"})


def bigram_table() -> Dict[str, np.ndarray]:
    """
    Probabilidades de transición hacia los tokens no ambiguos.

    Se alterna vocal y consonante con peso 3 frente a 1 y no se repite el
    token anterior. Las filas de los homófenos son las de cualquier
    consonante.

    Returns:
        Dict[str, np.ndarray]: Fila de probabilidades por token anterior,
        indexada como UNAMBIGUOUS
    """
    table = {}
    for previous in PHONEMES:
        weights = np.array(
            [
                0.0 if nxt == previous else (3.0 if (nxt in VOWELS) != (previous in VOWELS) else 1.0)
                for nxt in UNAMBIGUOUS
            ]
        )
        table[previous] = weights / weights.sum()
    return table


BIGRAMS = bigram_table()

SPLITS = ("train", "val", "test")


class CorpusError(Exception):
    """Excepción para errores de generación o lectura del corpus"""

    pass


@dataclass
class TokenScript:
    """Secuencia de fonemas con duración fija por token."""

    tokens: List[str]
    frames_per_token: int = 4

    def __post_init__(self):
        unknown = [t for t in self.tokens if t not in VISEME_OF]
        if unknown:
            raise CorpusError(f"Unknown phonemes in script: {unknown}")

    @property
    def frames(self) -> int:
        return len(self.tokens) * self.frames_per_token

    def visemes(self) -> List[int]:
        return [VISEME_OF[t] for t in self.tokens]

    def homophene_positions(self) -> List[int]:
        return [i for i, t in enumerate(self.tokens) if t in HOMOPHENES]

    def to_string(self) -> str:
        return " ".join(self.tokens)

    @classmethod
    def from_string(cls, text: str, frames_per_token: int = 4) -> "TokenScript":
        return cls(text.split(), frames_per_token)


def homophene_member(pair: Tuple[str, str], cue: str) -> str:
    """Miembro del par que corresponde al token de contexto `cue`."""
    return pair[0] if cue in FIRST_MEMBER_CUES else pair[1]


@dataclass
class RenderedPair:
    """Clip de vídeo, audio y mel normalizado de un mismo guion."""

    clip: np.ndarray
    wave: Waveform
    script: TokenScript
    mel: Optional[MelSpectrogram] = None


@dataclass
class CorpusEntry:
    sample_id: str
    wav: str
    melb: str
    video: str
    script: TokenScript
    split: str


@dataclass
class Corpus:
    """Manifiesto cargado con caché de muestras en memoria."""

    root: str
    entries: List[CorpusEntry]
    fps: int = 25
    _cache: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def split(self, name: str) -> List[CorpusEntry]:
        if name not in SPLITS:
            raise CorpusError(f"Unknown split '{name}'; expected one of {SPLITS}")
        return [e for e in self.entries if e.split == name]

    def load_sample(self, entry: CorpusEntry) -> Tuple[np.ndarray, np.ndarray]:
        """Clip (T, H, W, C) y mel normalizado (F, 4T) de una entrada."""
        if entry.sample_id not in self._cache:
            clip = read_video(os.path.join(self.root, entry.video))
            mel = read_melb(os.path.join(self.root, entry.melb), fps=self.fps).values
            if mel.shape[1] != 4 * clip.shape[0]:
                raise CorpusError(
                    f"Sample {entry.sample_id}: mel has {mel.shape[1]} frames, "
                    f"expected {4 * clip.shape[0]}"
                )
            self._cache[entry.sample_id] = (clip, mel)
        return self._cache[entry.sample_id]

    def __len__(self) -> int:
        return len(self.entries)


def multiscale_targets(mel: np.ndarray, n_mels: int = 80, stages: int = 3) -> List[np.ndarray]:
    """
    Objetivos por escala por interpolación bilineal: (F/4, L/4), (F/2, L/2), y.

    Args:
        mel: (F, L) o (N, F, L)
        n_mels: F esperado
        stages: Número de escalas

    Returns:
        List[np.ndarray]: Objetivos de menor a mayor resolución; el último
            es el propio mel sin modificar

    Raises:
        CorpusError: Si F no es el esperado o L no es múltiplo de 4
    """
    mel = np.asarray(mel)
    if mel.ndim not in (2, 3) or mel.shape[-2] != n_mels:
        raise CorpusError(f"Expected mel with {n_mels} bins, got shape {mel.shape}")
    frames = mel.shape[-1]
    factor = 2 ** (stages - 1)
    if frames % factor != 0:
        raise CorpusError(f"Mel length {frames} is not divisible by {factor}")

    targets = []
    with te.no_grad():
        for stage in range(stages - 1):
            shrink = 2 ** (stages - 1 - stage)
            resized = te.bilinear_resize(te.Tensor(mel), n_mels // shrink, frames // shrink)
            targets.append(resized.data)
    targets.append(mel)
    return targets


def sample_window(
    clip: np.ndarray,
    mel: np.ndarray,
    length: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Ventana contigua de `length` fotogramas y sus 4·length tramas mel.

    Returns:
        Tuple: (clip[t:t+L], mel[:, 4t:4(t+L)], t)

    Raises:
        CorpusError: length fuera de [1, T]
    """
    frames = clip.shape[0]
    if not 1 <= length <= frames:
        raise CorpusError(f"Window length {length} must be in [1, {frames}]")
    start = int(rng.integers(0, frames - length + 1))
    return clip[start : start + length], mel[..., 4 * start : 4 * (start + length)], start


class CorpusBuilder:
    """
    Renderizador procedural de guiones, vídeo y audio.

    Los aleatorios se derivan de (semilla, índice) para que el resultado no
    dependa del orden de ejecución de los hilos.
    """

    def __init__(
        self,
        processor: AudioProcessor = None,
        clip_frames: int = 16,
        frames_per_token: int = 4,
        frame_size: int = 32,
        homophene_rate: float = 0.4,
        workers: int = None,
        logger: logging.Logger = None,
    ):
        """
        Args:
            processor: Cadena de audio (perfil fps incluido)
            clip_frames: Fotogramas por clip (múltiplo de frames_per_token)
            frames_per_token: Fotogramas por fonema
            frame_size: Lado del fotograma en píxeles
            homophene_rate: Probabilidad de un homófeno en posiciones con contexto
            workers: Hilos de renderizado (por defecto según VCAGAN_THREADS)
            logger: Logger opcional
        """
        if clip_frames % frames_per_token != 0:
            raise CorpusError(
                f"clip_frames={clip_frames} must be a multiple of frames_per_token={frames_per_token}"
            )
        self.processor = processor or AudioProcessor()
        self.clip_frames = clip_frames
        self.frames_per_token = frames_per_token
        self.frame_size = frame_size
        self.homophene_rate = homophene_rate
        self.workers = resolve_worker_count(workers)
        self.logger = logger or logging.getLogger(__name__)

        scale = frame_size / 32.0
        grid = np.arange(frame_size) - (frame_size - 1) / 2.0
        self._yy, self._xx = np.meshgrid(grid, grid, indexing="ij")
        self._scale = scale

    @property
    def tokens_per_clip(self) -> int:
        return self.clip_frames // self.frames_per_token

    # ------------------------------------------------------------------
    # Guiones
    # ------------------------------------------------------------------

    def make_script(self, rng: np.random.Generator) -> TokenScript:
        """
        Guion aleatorio según la gramática de bigramas. Los homófenos solo
        aparecen con un token de contexto dos posiciones antes, que decide
        el miembro del par.
        """
        tokens: List[str] = []
        for position in range(self.tokens_per_clip):
            if position >= 2 and rng.random() < self.homophene_rate:
                pair = HOMOPHENE_PAIRS[int(rng.integers(len(HOMOPHENE_PAIRS)))]
                tokens.append(homophene_member(pair, tokens[position - 2]))
            else:
                if tokens:
                    index = int(rng.choice(len(UNAMBIGUOUS), p=BIGRAMS[tokens[-1]]))
                else:
                    index = int(rng.integers(len(UNAMBIGUOUS)))
                tokens.append(UNAMBIGUOUS[index])
        return TokenScript(tokens, self.frames_per_token)

    # ------------------------------------------------------------------
    # Vídeo
    # ------------------------------------------------------------------

    @staticmethod
    def _soft_ellipse(xx, yy, half_width, half_height, sharpness=4.0):
        if half_width <= 0 or half_height <= 0:
            return np.zeros_like(xx)
        radius = np.sqrt((xx / half_width) ** 2 + (yy / half_height) ** 2)
        return 1.0 / (1.0 + np.exp(-sharpness * (1.0 - radius) * min(half_width, half_height)))

    def render_frame(self, viseme: int, dx: float, dy: float, gain: float) -> np.ndarray:
        opening, width = VISEME_SHAPES[viseme]
        xx = self._xx - dx * self._scale
        yy = self._yy - dy * self._scale
        half_w = 0.5 * width * self._scale
        half_h = 0.5 * opening * self._scale
        lips = self._soft_ellipse(xx, yy, half_w + 3 * self._scale, half_h + 3 * self._scale)
        mouth = self._soft_ellipse(xx, yy, half_w, half_h)
        frame = 0.25 + 0.55 * lips - 0.7 * mouth
        return np.clip(frame * gain, 0.0, 1.0)

    def render_video(self, script: TokenScript, rng: np.random.Generator) -> np.ndarray:
        """
        Clip (T, H, W, 1) con una elipse de labios por visema.

        El temblor (desplazamiento y ganancia) se sortea por fotograma sin
        depender del token, así que dos homófenos producen píxeles idénticos.
        """
        frames = []
        for viseme in script.visemes():
            for _ in range(script.frames_per_token):
                dx, dy = rng.uniform(-1.0, 1.0, size=2)
                gain = 1.0 + rng.uniform(-0.03, 0.03)
                frames.append(self.render_frame(viseme, dx, dy, gain))
        return np.stack(frames)[..., None]

    # ------------------------------------------------------------------
    # Audio
    # ------------------------------------------------------------------

    def _tone(self, phoneme: str, t: np.ndarray, f0: float) -> np.ndarray:
        f1, f2 = FORMANTS[phoneme]
        nyquist = self.processor.sample_rate / 2.0
        harmonics = np.arange(1, int(4000.0 // f0) + 1)
        freqs = harmonics * f0
        freqs = freqs[freqs < nyquist]
        bandwidth = 150.0
        weights = (
            np.exp(-(((freqs - f1) / bandwidth) ** 2))
            + np.exp(-(((freqs - f2) / bandwidth) ** 2))
            + 0.02
        )
        return np.sin(2.0 * np.pi * np.outer(t, freqs)) @ weights

    def render_audio(self, script: TokenScript, rng: np.random.Generator) -> Waveform:
        """
        Tono armónico con dos formantes por fonema, silencio a cero y rampas
        de coseno alzado de 10 ms en los bordes de cada token.
        """
        sr = self.processor.sample_rate
        segment = script.frames_per_token * self.processor.samples_per_video_frame
        f0 = 120.0 + rng.uniform(-10.0, 10.0)
        ramp = int(round(0.01 * sr))
        envelope = np.ones(segment)
        rise = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        envelope[:ramp] = rise
        envelope[-ramp:] = rise[::-1]

        samples = np.zeros(segment * len(script.tokens))
        for index, phoneme in enumerate(script.tokens):
            if phoneme == "sil":
                continue
            start = index * segment
            t = (start + np.arange(segment)) / sr
            tone = self._tone(phoneme, t, f0)
            peak = np.max(np.abs(tone))
            samples[start : start + segment] = 0.3 * tone / peak * envelope
        return Waveform(samples, sr)

    # ------------------------------------------------------------------
    # Pares y corpus
    # ------------------------------------------------------------------

    def render_pair(self, seed: int, index: int, script: TokenScript = None) -> RenderedPair:
        """Par completo derivado de (semilla, índice)."""
        rng = partitioned_rng(seed, index)
        script = script or self.make_script(rng)
        clip = self.render_video(script, rng)
        wave = self.render_audio(script, rng)
        mel = self.processor.mel_spectrogram(wave, normalized=True)
        if mel.frames != 4 * clip.shape[0]:
            raise CorpusError(
                f"Alignment broken: {mel.frames} mel frames for {clip.shape[0]} video frames"
            )
        return RenderedPair(clip, wave, script, mel)

    @staticmethod
    def split_assignment(n_samples: int, seed: int) -> List[str]:
        """Reparto 80/10/10 tras una permutación con semilla."""
        n_train = n_samples * 8 // 10
        n_val = n_samples // 10
        order = np.random.default_rng(seed).permutation(n_samples)
        labels = ["test"] * n_samples
        for rank, index in enumerate(order):
            if rank < n_train:
                labels[index] = "train"
            elif rank < n_train + n_val:
                labels[index] = "val"
        return labels

    def _write_sample(self, out_dir: str, seed: int, index: int, split: str) -> CorpusEntry:
        pair = self.render_pair(seed, index)
        sample_id = f"s{index:05d}"
        entry = CorpusEntry(
            sample_id,
            os.path.join("wav", f"{sample_id}.wav"),
            os.path.join("mel", f"{sample_id}.melb"),
            os.path.join("video", f"{sample_id}.vid"),
            pair.script,
            split,
        )
        write_wav(os.path.join(out_dir, entry.wav), pair.wave)
        write_melb(os.path.join(out_dir, entry.melb), pair.mel)
        write_video(os.path.join(out_dir, entry.video), pair.clip)
        return entry

    def build_corpus(self, out_dir: str, n_samples: int, seed: int) -> List[CorpusEntry]:
        """
        Genera el corpus completo y su manifiesto.

        Args:
            out_dir: Directorio de salida
            n_samples: Número de pares (≥ 1)
            seed: Semilla global

        Returns:
            List[CorpusEntry]: Entradas en orden de índice

        Raises:
            CorpusError: n < 1 o fallo de E/S
        """
        if n_samples < 1:
            raise CorpusError(f"n_samples must be >= 1, got {n_samples}")
        for sub in ("wav", "mel", "video"):
            os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

        splits = self.split_assignment(n_samples, seed)
        entries: List[Optional[CorpusEntry]] = [None] * n_samples
        self.logger.info(
            f"Rendering {n_samples} samples into {out_dir} with {self.workers} workers"
        )

        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            futures = {
                executor.submit(self._write_sample, out_dir, seed, i, splits[i]): i
                for i in range(n_samples)
            }
            for future in as_completed(futures):
                index = futures[future]
                try:
                    entries[index] = future.result()
                except OSError as e:
                    raise CorpusError(f"I/O failure while writing sample {index}: {e}")

        write_manifest(os.path.join(out_dir, "manifest.tsv"), entries)
        counts = {s: splits.count(s) for s in SPLITS}
        self.logger.info(f"Corpus ready: {counts}")
        return entries


MANIFEST_FIELDS = ("id", "wav", "melb", "video", "script", "split")


def write_manifest(path: str, entries: Sequence[CorpusEntry]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for e in entries:
            writer.writerow([e.sample_id, e.wav, e.melb, e.video, e.script.to_string(), e.split])


def load_corpus(root: str, fps: int = 25, frames_per_token: int = 4) -> Corpus:
    """
    Lee `manifest.tsv` de un corpus.

    Raises:
        CorpusError: Manifiesto ausente o con columnas inesperadas
    """
    path = os.path.join(root, "manifest.tsv")
    if not os.path.exists(path):
        raise CorpusError(f"Corpus manifest not found: {path}")

    entries = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle, delimiter="\t")
        if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
            raise CorpusError(f"Unexpected manifest columns {reader.fieldnames} in {path}")
        for row in reader:
            entries.append(
                CorpusEntry(
                    row["id"],
                    row["wav"],
                    row["melb"],
                    row["video"],
                    TokenScript.from_string(row["script"], frames_per_token),
                    row["split"],
                )
            )
    if not entries:
        raise CorpusError(f"Corpus manifest is empty: {path}")
    return Corpus(root, entries, fps)
