"""
Modelo VCA-GAN
==============

Ensambla codificadores, generador multiescala con atención de contexto
visual, discriminadores y postnet sobre un único almacén de parámetros.

La síntesis es un único paso hacia delante: no hay bucle sobre las tramas
de salida, lo que se comprueba con contadores de instrumentación.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .discriminator import DiscriminatorScores, MultiScaleDiscriminator, temporal_average
from .encoders import AudioEncoder, GlobalVisualEncoder, LocalVisualEncoder
from .generator import Generator
from .media_io import read_checkpoint, write_checkpoint
from .model_config import ModelConfig, ModelError
from .parameter_store import ParameterError, ParameterStore
from .postnet import Postnet
from .tensor_engine import Tensor

GENERATOR_PREFIXES = ("phi_v", "phi_c", "psi", "attn", "heads", "phi_a")
DISCRIMINATOR_PREFIXES = ("disc",)
POSTNET_PREFIXES = ("postnet",)


@dataclass
class SynthesisResult:
    """Salidas de una síntesis: mels por etapa, mapas de atención y rasgos."""

    mels: List[Tensor]
    attention: List[Optional[np.ndarray]]
    local: Tensor
    context: Tensor
    noise: Tensor
    speech: List[Tensor] = field(default_factory=list)

    @property
    def final(self) -> Tensor:
        return self.mels[-1]


class VCAGAN:
    """
    Red completa φ_v, φ_c, ψ_1..ψ_n, cabezas mel, φ_a, D_i y postnet.

    Todos los métodos de forward aceptan un mapeo de parámetros opcional
    (por defecto los entrenables) para poder evaluar con vistas congeladas.
    """

    def __init__(
        self,
        config: ModelConfig = None,
        seed: int = 0,
        mag_scale: float = 160.0,
        logger: logging.Logger = None,
    ):
        """
        Args:
            config: Configuración estructural
            seed: Semilla de inicialización de parámetros
            mag_scale: Escala de magnitudes lineales de la postnet
            logger: Logger opcional
        """
        self.config = config or ModelConfig()
        self.logger = logger or logging.getLogger(__name__)
        self.store = ParameterStore(self.config.np_dtype, seed=seed, logger=self.logger)

        self.phi_v = LocalVisualEncoder(self.store, self.config)
        self.phi_c = GlobalVisualEncoder(self.store, self.config)
        self.generator = Generator(self.store, self.config)
        self.phi_a = AudioEncoder(self.store, self.config)
        self.discriminator = MultiScaleDiscriminator(self.store, self.config)
        self.postnet = Postnet(self.store, self.config, mag_scale=mag_scale)

        self._lock = threading.Lock()
        self.counters: Dict[str, int] = {"synthesize": 0, "generator_stack": 0, "attention": 0}

    @property
    def dtype(self):
        return self.config.np_dtype

    # ------------------------------------------------------------------
    # Parámetros e instrumentación
    # ------------------------------------------------------------------

    def params(self, detach: Sequence[str] = ()) -> Dict[str, Tensor]:
        return self.store.view(detach)

    def _resolve(self, params: Optional[Mapping[str, Tensor]]) -> Mapping[str, Tensor]:
        return self.params() if params is None else params

    def _count(self, key: str, amount: int = 1) -> None:
        with self._lock:
            self.counters[key] += amount

    def reset_counters(self) -> None:
        with self._lock:
            for key in self.counters:
                self.counters[key] = 0

    def counter_snapshot(self) -> Dict[str, int]:
        with self._lock:
            return dict(self.counters)

    # ------------------------------------------------------------------
    # Conversión de entradas
    # ------------------------------------------------------------------

    def as_clip(self, clip) -> Tensor:
        """
        Convierte un clip T×H×W×C (o N×T×H×W×C) en Tensor del dtype del modelo.

        Raises:
            ModelError: Clip vacío o de rango inválido
        """
        if isinstance(clip, Tensor):
            return clip
        array = np.asarray(clip, dtype=self.dtype)
        if array.ndim not in (4, 5):
            raise ModelError(f"Video clip must be T×H×W×C or N×T×H×W×C, got {array.shape}")
        if array.shape[-4] == 0:
            raise ModelError("Video clip has T=0 frames")
        return Tensor(array)

    def as_mel(self, mel) -> Tensor:
        if isinstance(mel, Tensor):
            return mel
        return Tensor(np.asarray(mel, dtype=self.dtype))

    def sample_noise(
        self, batch: int, frames: int, rng: np.random.Generator = None
    ) -> Tensor:
        """
        Ruido z (N, D_z, F/4, T) normal estándar; ceros si no se pasa rng.
        """
        shape = (batch, self.config.d_noise, self.config.stage_bins(0), frames)
        if rng is None:
            return Tensor(np.zeros(shape, dtype=self.dtype))
        return Tensor(rng.standard_normal(shape).astype(self.dtype))

    # ------------------------------------------------------------------
    # Operaciones del modelo
    # ------------------------------------------------------------------

    def encode_local_visual(self, clip, params=None) -> Tensor:
        return self.phi_v(self._resolve(params), self.as_clip(clip))

    def encode_global_visual(self, local: Tensor, params=None) -> Tensor:
        return self.phi_c(self._resolve(params), local)

    def encode_local_audio(self, mel, params=None) -> Tensor:
        return self.phi_a(self._resolve(params), self.as_mel(mel))

    def initial_generate(self, local: Tensor, noise: Tensor, params=None) -> Tensor:
        return self.generator.coarse(self._resolve(params), local, noise)

    def audio_visual_attention(self, stage: int, speech: Tensor, context: Tensor, params=None):
        """
        Contexto visual global de la etapa `stage` (0-based) y su mapa A.
        """
        if self.config.use_attention:
            self._count("attention")
        return self.generator.context_for(self._resolve(params), stage, speech, context)

    def refine_step(self, stage: int, speech: Tensor, context_feature: Tensor, params=None) -> Tensor:
        return self.generator.refiners[stage](self._resolve(params), speech, context_feature)

    def mel_head(self, stage: int, speech: Tensor, params=None) -> Tensor:
        return self.generator.heads[stage](self._resolve(params), speech)

    def synthesize(
        self,
        clip,
        noise: Tensor = None,
        rng: np.random.Generator = None,
        params=None,
    ) -> SynthesisResult:
        """
        Síntesis en un único paso hacia delante.

        Args:
            clip: Vídeo (T, H, W, C) o (N, T, H, W, C)
            noise: Ruido explícito; si falta se muestrea con rng (o ceros)
            rng: Generador para el ruido
            params: Mapeo de parámetros opcional

        Returns:
            SynthesisResult: ŷ_1..ŷ_n (N, F_i, T_i), mapas de atención
                (N, T_i, T), F_v y C_v
        """
        params = self._resolve(params)
        clip = self.as_clip(clip)
        local = self.encode_local_visual(clip, params)
        context = self.encode_global_visual(local, params)
        if noise is None:
            noise = self.sample_noise(local.shape[0], local.shape[1], rng)

        self._count("synthesize")
        self._count("generator_stack")

        speech = self.initial_generate(local, noise, params)
        representations = [speech]
        mels = [self.mel_head(0, speech, params)]
        maps: List[Optional[np.ndarray]] = []
        for stage in range(self.config.stages - 1):
            context_feature, weights = self.audio_visual_attention(stage, speech, context, params)
            maps.append(None if weights is None else weights.data)
            speech = self.refine_step(stage, speech, context_feature, params)
            representations.append(speech)
            mels.append(self.mel_head(stage + 1, speech, params))

        return SynthesisResult(mels, maps, local, context, noise, representations)

    def discriminate(self, mels: List[Tensor], context: Tensor, params=None) -> List[DiscriminatorScores]:
        """Puntuaciones de las escalas activas condicionadas por M(C_v)."""
        return self.discriminator(self._resolve(params), mels, temporal_average(context))

    def postnet_forward(self, mel, params=None) -> Tensor:
        return self.postnet(self._resolve(params), self.as_mel(mel))

    # ------------------------------------------------------------------
    # Persistencia
    # ------------------------------------------------------------------

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return self.store.state_arrays()

    def load_state(self, arrays: Mapping[str, np.ndarray]) -> None:
        """
        Carga los parámetros del modelo ignorando entradas ajenas (estado
        del optimizador).

        Raises:
            ModelError: Si falta algún parámetro o las formas no coinciden
        """
        model_arrays = {k: v for k, v in arrays.items() if k in self.store}
        missing = [name for name in self.store if name not in model_arrays]
        if missing:
            raise ModelError(
                f"Checkpoint lacks {len(missing)} model parameters (first: {missing[0]}); "
                f"check --no-attention / --single-discriminator flags"
            )
        try:
            self.store.load_arrays(model_arrays)
        except ParameterError as e:
            raise ModelError(str(e))

    def save(self, path: str, extra: Mapping[str, np.ndarray] = None) -> int:
        arrays = self.state_arrays()
        if extra:
            arrays.update(extra)
        version = write_checkpoint(path, arrays)
        self.logger.debug(f"Saved checkpoint {path} (VCAG v{version}, {len(arrays)} tensors)")
        return version

    def load(self, path: str) -> Dict[str, np.ndarray]:
        """Carga un checkpoint y devuelve todas sus entradas."""
        arrays = read_checkpoint(path)
        self.load_state(arrays)
        return arrays

    def __repr__(self) -> str:
        return (
            f"VCAGAN(params={self.store.num_elements()}, attention={self.config.use_attention}, "
            f"discriminators={len(self.discriminator.stages)}, dtype={self.config.dtype})"
        )
