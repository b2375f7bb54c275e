"""
Procesado de audio: filtrado, STFT, mel y Griffin-Lim
=====================================================

Front-end y back-end de audio del sistema: filtro paso alto Butterworth,
STFT con ventana Hann centrada por reflexión, proyección mel con
compresión logarítmica y normalización a [-1, 1], e inversión de fase
iterativa por Griffin-Lim.

Perfiles de trama de vídeo (16 kHz):
- 25 fps: ventana 640, salto 160
- 30 fps: ventana 532, salto 133
En ambos casos un clip de T fotogramas produce exactamente 4T tramas mel.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import librosa
import numpy as np
from scipy import signal

FRAME_PROFILES: Dict[int, Tuple[int, int]] = {25: (640, 160), 30: (532, 133)}


class DspError(Exception):
    """Excepción para errores de procesado de señal"""

    pass


@dataclass
class Waveform:
    """Señal mono en [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise DspError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def rms(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))


@dataclass
class LinearSpectrogram:
    """Magnitudes no negativas (bins × tramas)."""

    mags: np.ndarray
    window: int
    hop: int

    @property
    def bins(self) -> int:
        return self.mags.shape[0]

    @property
    def frames(self) -> int:
        return self.mags.shape[1]


@dataclass
class MelSpectrogram:
    """
    Espectrograma mel F × L.

    `values` está en log natural salvo que `normalized` sea True, en cuyo
    caso está mapeado afínmente a [-1, 1].
    """

    values: np.ndarray
    hop: int = 160
    sample_rate: int = 16000
    fps: int = 25
    normalized: bool = False

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass
class MelFilterbank:
    """Banco de filtros triangulares F × bins."""

    weights: np.ndarray
    f_min: float
    f_max: float
    sample_rate: int = 16000

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def bins(self) -> int:
        return self.weights.shape[1]


def _reflect_index(index: np.ndarray, length: int) -> np.ndarray:
    """Índices reflejados sin repetir el borde (como np.pad mode='reflect')."""
    if length == 1:
        return np.zeros_like(index)
    period = 2 * (length - 1)
    folded = np.mod(index, period)
    return np.where(folded > length - 1, period - folded, folded)


def two_sided_norm(spec: np.ndarray) -> float:
    """
    Norma de Frobenius del espectro completo a partir del unilateral.

    Los bins interiores aparecen dos veces en el espectro bilateral; DC y
    Nyquist (ventana par) una sola.
    """
    weights = np.full(spec.shape[0], 2.0)
    weights[0] = 1.0
    if spec.shape[0] > 1:
        weights[-1] = 1.0
    return float(np.sqrt(np.sum(weights[:, None] * np.abs(spec) ** 2)))


class AudioProcessor:
    """
    Cadena de audio configurable por frecuencia de muestreo y perfil fps.
    """

    def __init__(
        self,
        sample_rate: int = 16000,
        fps: int = 25,
        n_mels: int = 80,
        f_min: float = 55.0,
        f_max: float = 8000.0,
        log_floor: float = 1e-5,
        log_ceiling: float = 6.0,
        highpass_cutoff: float = 55.0,
        highpass_order: int = 4,
        logger: logging.Logger = None,
    ):
        """
        Args:
            sample_rate: Frecuencia de muestreo en Hz
            fps: Perfil de vídeo (25 o 30)
            n_mels: Número de bandas mel
            f_min: Frecuencia mínima del banco mel
            f_max: Frecuencia máxima del banco mel
            log_floor: Suelo antes del logaritmo
            log_ceiling: Valor log que se mapea a +1 en la normalización
            highpass_cutoff: Corte del filtro paso alto en Hz
            highpass_order: Orden del Butterworth (par)
            logger: Logger opcional

        Raises:
            DspError: Perfil fps desconocido o rango de frecuencias inválido
        """
        if fps not in FRAME_PROFILES:
            raise DspError(f"Unsupported fps profile {fps}; expected one of {sorted(FRAME_PROFILES)}")
        if not 0 <= f_min < f_max <= sample_rate / 2:
            raise DspError(
                f"Invalid mel range f_min={f_min}, f_max={f_max} for sr={sample_rate}"
            )
        if log_ceiling <= math.log(log_floor):
            raise DspError("log_ceiling must exceed log(log_floor)")

        self.sample_rate = sample_rate
        self.fps = fps
        self.window, self.hop = FRAME_PROFILES[fps]
        self.n_mels = n_mels
        self.f_min = f_min
        self.f_max = f_max
        self.log_floor = log_floor
        self.log_ceiling = log_ceiling
        self.highpass_cutoff = highpass_cutoff
        self.highpass_order = highpass_order
        self.logger = logger or logging.getLogger(__name__)

    # ------------------------------------------------------------------
    # Geometría
    # ------------------------------------------------------------------

    @property
    def bins(self) -> int:
        return self.window // 2 + 1

    @property
    def samples_per_video_frame(self) -> int:
        """Muestras por fotograma de vídeo: 4 saltos (640 a 25 fps, 532 a 30 fps)."""
        return 4 * self.hop

    def frame_count(self, n_samples: int, hop: int = None) -> int:
        return math.ceil(n_samples / (hop or self.hop))

    # ------------------------------------------------------------------
    # Filtro paso alto
    # ------------------------------------------------------------------

    def highpass(self, wave: Waveform, cutoff: float = None) -> Waveform:
        """
        Filtro Butterworth paso alto en secciones de segundo orden.

        Args:
            wave: Señal de entrada
            cutoff: Frecuencia de corte en Hz (por defecto la configurada)

        Returns:
            Waveform: Señal filtrada (estado inicial nulo, lineal e invariante)

        Raises:
            DspError: Corte no positivo o por encima de sr/2
        """
        cutoff = self.highpass_cutoff if cutoff is None else cutoff
        if cutoff <= 0 or wave.sample_rate <= 2 * cutoff:
            raise DspError(
                f"Invalid highpass cutoff {cutoff} Hz for sample rate {wave.sample_rate}"
            )
        if len(wave.samples) == 0:
            return Waveform(wave.samples.copy(), wave.sample_rate)

        sos = signal.butter(
            self.highpass_order, cutoff, btype="highpass", fs=wave.sample_rate, output="sos"
        )
        return Waveform(signal.sosfilt(sos, wave.samples), wave.sample_rate)

    # ------------------------------------------------------------------
    # STFT / ISTFT
    # ------------------------------------------------------------------

    def _frame_index(self, n_samples: int, window: int, hop: int) -> np.ndarray:
        n_frames = self.frame_count(n_samples, hop)
        index = (
            np.arange(n_frames)[:, None] * hop
            - window // 2
            + np.arange(window)[None, :]
        )
        return _reflect_index(index, n_samples)

    def stft(
        self, wave: Waveform, window: int = None, hop: int = None
    ) -> Tuple[LinearSpectrogram, np.ndarray]:
        """
        STFT con ventana Hann periódica y tramas centradas por reflexión.

        Args:
            wave: Señal
            window: Longitud de ventana (por defecto la del perfil)
            hop: Salto (por defecto el del perfil)

        Returns:
            Tuple[LinearSpectrogram, np.ndarray]: Magnitudes y fases
                (bins × ceil(len/hop))

        Raises:
            DspError: Señal vacía o window < hop
        """
        spec = self.complex_stft(wave.samples, window, hop)
        window = window or self.window
        hop = hop or self.hop
        return LinearSpectrogram(np.abs(spec), window, hop), np.angle(spec)

    def complex_stft(self, samples: np.ndarray, window: int = None, hop: int = None) -> np.ndarray:
        window = window or self.window
        hop = hop or self.hop
        samples = np.asarray(samples, dtype=np.float64)
        if len(samples) < 1:
            raise DspError("STFT requires at least one sample")
        if not window >= hop >= 1:
            raise DspError(f"STFT requires window >= hop >= 1, got window={window}, hop={hop}")

        hann = signal.get_window("hann", window, fftbins=True)
        frames = samples[self._frame_index(len(samples), window, hop)] * hann
        return np.fft.rfft(frames, axis=1).T

    def istft(
        self, spec: np.ndarray, length: int, window: int = None, hop: int = None
    ) -> np.ndarray:
        """
        Inversa por mínimos cuadrados de la STFT anterior.

        Cada muestra es la suma solapada de las tramas ponderadas por la
        ventana dividida por la suma de cuadrados de la ventana, plegando
        las muestras reflejadas de los bordes sobre su origen.

        Args:
            spec: Espectro complejo (bins × tramas)
            length: Longitud de la señal reconstruida
            window: Longitud de ventana
            hop: Salto

        Returns:
            np.ndarray: Señal reconstruida
        """
        window = window or self.window
        hop = hop or self.hop
        hann = signal.get_window("hann", window, fftbins=True)
        index = self._frame_index(length, window, hop)
        if index.shape[0] != spec.shape[1]:
            raise DspError(
                f"Spectrogram has {spec.shape[1]} frames, expected {index.shape[0]} for length {length}"
            )

        frames = np.fft.irfft(spec.T, n=window, axis=1) * hann
        numerator = np.bincount(index.ravel(), weights=frames.ravel(), minlength=length)
        denominator = np.bincount(
            index.ravel(),
            weights=np.broadcast_to(hann**2, frames.shape).ravel(),
            minlength=length,
        )
        safe = np.where(denominator > 1e-10, denominator, 1.0)
        return np.where(denominator > 1e-10, numerator / safe, 0.0)

    # ------------------------------------------------------------------
    # Mel
    # ------------------------------------------------------------------

    @cached_property
    def filterbank(self) -> MelFilterbank:
        """Banco mel HTK (2595·log10(1 + f/700)) sin normalización de área."""
        weights = librosa.filters.mel(
            sr=self.sample_rate,
            n_fft=self.window,
            n_mels=self.n_mels,
            fmin=self.f_min,
            fmax=self.f_max,
            htk=True,
            norm=None,
        ).astype(np.float64)
        return MelFilterbank(weights, self.f_min, self.f_max, self.sample_rate)

    def mel_project(
        self, spec: LinearSpectrogram, fb: MelFilterbank = None
    ) -> MelSpectrogram:
        """
        Proyección mel con compresión log(max(fb·mags, suelo)).

        Raises:
            DspError: Si el número de bins no coincide
        """
        fb = fb or self.filterbank
        if fb.bins != spec.bins:
            raise DspError(
                f"Filterbank has {fb.bins} bins but spectrogram has {spec.bins}"
            )
        values = np.log(np.maximum(fb.weights @ spec.mags, self.log_floor))
        return MelSpectrogram(values, spec.hop, self.sample_rate, self.fps, False)

    def normalize(self, mel: MelSpectrogram) -> MelSpectrogram:
        """Mapea [log(suelo), techo] a [-1, 1] (con recorte)."""
        if mel.normalized:
            return mel
        low = math.log(self.log_floor)
        scaled = 2.0 * (mel.values - low) / (self.log_ceiling - low) - 1.0
        return MelSpectrogram(np.clip(scaled, -1.0, 1.0), mel.hop, mel.sample_rate, mel.fps, True)

    def denormalize(self, mel: MelSpectrogram) -> MelSpectrogram:
        if not mel.normalized:
            return mel
        low = math.log(self.log_floor)
        values = (np.asarray(mel.values) + 1.0) * 0.5 * (self.log_ceiling - low) + low
        return MelSpectrogram(values, mel.hop, mel.sample_rate, mel.fps, False)

    def linear_spectrogram(self, wave: Waveform) -> LinearSpectrogram:
        """Magnitudes de la señal filtrada paso alto."""
        spec, _ = self.stft(self.highpass(wave))
        return spec

    def mel_spectrogram(self, wave: Waveform, normalized: bool = True) -> MelSpectrogram:
        """
        Cadena completa: paso alto → STFT → mel log → normalización opcional.

        Args:
            wave: Señal a la frecuencia configurada
            normalized: Devolver valores en [-1, 1]

        Returns:
            MelSpectrogram: F × ceil(len/hop)
        """
        if wave.sample_rate != self.sample_rate:
            raise DspError(
                f"Expected sample rate {self.sample_rate}, got {wave.sample_rate}"
            )
        mel = self.mel_project(self.linear_spectrogram(wave))
        return self.normalize(mel) if normalized else mel

    def mel_to_linear(self, mel: MelSpectrogram) -> LinearSpectrogram:
        """
        Aproximación lineal por el banco transpuesto (sin postnet).

        Cada banda reparte su energía por igual entre sus bins y cada bin
        promedia las bandas que lo cubren.
        """
        weights = self.filterbank.weights
        energy = np.exp(self.denormalize(mel).values)
        row_sums = weights.sum(axis=1, keepdims=True)
        per_bin = energy / np.where(row_sums > 0, row_sums, 1.0)
        coverage = weights.sum(axis=0)[:, None]
        mags = (weights.T @ per_bin) / np.where(coverage > 0, coverage, 1.0)
        return LinearSpectrogram(np.where(coverage > 0, mags, 0.0), self.window, self.hop)

    # ------------------------------------------------------------------
    # Griffin-Lim
    # ------------------------------------------------------------------

    @staticmethod
    def spectral_convergence(estimate: np.ndarray, target: np.ndarray) -> float:
        """‖|S(x̂)| − M‖ / ‖M‖ medido sobre el espectro bilateral."""
        target_norm = two_sided_norm(target)
        if target_norm == 0.0:
            return 0.0 if two_sided_norm(estimate) == 0.0 else float("inf")
        return two_sided_norm(np.abs(estimate) - target) / target_norm

    def griffin_lim(
        self,
        spec: LinearSpectrogram,
        iters: int = 100,
        length: int = None,
        history: Optional[List[float]] = None,
    ) -> Waveform:
        """
        Reconstrucción de fase por proyecciones alternas desde fase cero.

        Args:
            spec: Magnitudes objetivo
            iters: Número de iteraciones (≥ 1)
            length: Longitud de la señal (por defecto tramas · salto)
            history: Lista donde se añade la convergencia espectral de cada
                iteración (no creciente)

        Returns:
            Waveform: Señal estimada

        Raises:
            DspError: iters < 1 o magnitudes negativas
        """
        if iters < 1:
            raise DspError(f"Griffin-Lim requires iters >= 1, got {iters}")
        mags = np.asarray(spec.mags, dtype=np.float64)
        if np.any(mags < 0):
            raise DspError("Griffin-Lim magnitudes must be non-negative")
        length = length or spec.frames * spec.hop
        if self.frame_count(length, spec.hop) != spec.frames:
            raise DspError(
                f"Length {length} is inconsistent with {spec.frames} frames at hop {spec.hop}"
            )

        phase = np.ones_like(mags, dtype=np.complex128)
        samples = np.zeros(length)
        for _ in range(iters):
            samples = self.istft(mags * phase, length, spec.window, spec.hop)
            rebuilt = self.complex_stft(samples, spec.window, spec.hop)
            if history is not None:
                history.append(self.spectral_convergence(rebuilt, mags))
            magnitude = np.abs(rebuilt)
            phase = np.where(
                magnitude > 0, rebuilt / np.where(magnitude > 0, magnitude, 1.0), 1.0
            )

        return Waveform(samples, self.sample_rate)

    def __repr__(self) -> str:
        return (
            f"AudioProcessor(sr={self.sample_rate}, fps={self.fps}, window={self.window}, "
            f"hop={self.hop}, n_mels={self.n_mels})"
        )
