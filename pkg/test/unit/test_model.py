"""
Tests unitarios para el modelo VCA-GAN
======================================

Configuración, almacén de parámetros, codificadores, generador con
atención, discriminadores, postnet y el ensamblado completo.
"""

import math
import os
import shutil
import sys
import tempfile
import unittest
from test.utils.tiny_models import tiny_config, tiny_model

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

from src.classes import tensor_engine as te
from src.classes.generator import VisualContextAttention, flatten_speech, repeat_spectral, split_speech
from src.classes.gradient_checker import GradientChecker
from src.classes.model_config import ModelConfig, ModelError
from src.classes.parameter_store import ParameterError, ParameterStore
from src.classes.tensor_engine import Tensor
from src.classes.vca_gan import DISCRIMINATOR_PREFIXES, GENERATOR_PREFIXES, VCAGAN


class TestModelConfig(unittest.TestCase):
    """Tests para ModelConfig."""

    def test_default_stage_geometry(self):
        """Test para F/4, F/2, F y T, 2T, 4T."""
        config = ModelConfig()
        self.assertEqual([config.stage_bins(s) for s in range(3)], [20, 40, 80])
        self.assertEqual([config.stage_frames(s, 16) for s in range(3)], [16, 32, 64])
        self.assertEqual(config.context_channels(0), 32)

    def test_validation_errors(self):
        """Test para configuraciones incoherentes."""
        with self.assertRaises(ModelError):
            ModelConfig(generator_channels=(64, 32), generator_blocks=(1, 1))
        with self.assertRaises(ModelError):
            ModelConfig(n_mels=82)
        with self.assertRaises(ModelError):
            ModelConfig(d_model=63)
        with self.assertRaises(ModelError):
            ModelConfig(alpha=3)
        with self.assertRaises(ModelError):
            ModelConfig(dtype="float16")

    def test_lists_coerced_to_tuples(self):
        """Test para la conversión de listas a tuplas."""
        config = ModelConfig(generator_blocks=[1, 2, 3])
        self.assertEqual(config.generator_blocks, (1, 2, 3))
        self.assertEqual(config.to_dict()["generator_blocks"], (1, 2, 3))


class TestParameterStore(unittest.TestCase):
    """Tests para ParameterStore."""

    def test_deterministic_initialization(self):
        """Test para la misma semilla y la misma huella."""
        a, b = ParameterStore(seed=3), ParameterStore(seed=3)
        for store in (a, b):
            store.create("w", (4, 5))
            store.create("b", (4,), zeros=True)
        self.assertEqual(a.checksum(), b.checksum())
        bound = 1.0 / math.sqrt(5)
        self.assertTrue(np.all(np.abs(a["w"].data) <= bound))
        np.testing.assert_array_equal(a["b"].data, 0.0)

    def test_duplicates_and_unknown_names(self):
        """Test para nombres duplicados y desconocidos."""
        store = ParameterStore()
        store.create("x.w", (2, 2))
        with self.assertRaises(ParameterError):
            store.create("x.w", (2, 2))
        with self.assertRaises(ParameterError):
            store["missing"]
        with self.assertRaises(ParameterError):
            store.create("bad", (0, 2))

    def test_prefix_filtering_and_view(self):
        """Test para filtros por prefijo y vistas desacopladas."""
        store = ParameterStore()
        store.create("gen.w", (2,))
        store.create("generic.w", (2,))
        store.create("disc.w", (2,))
        self.assertEqual(store.names(["gen"]), ["gen.w"])
        view = store.view(detach=["disc"])
        self.assertFalse(view["disc.w"].requires_grad)
        self.assertIs(view["gen.w"], store["gen.w"])
        self.assertEqual(store.prefixes(), ["gen", "generic", "disc"])

    def test_load_arrays_strict(self):
        """Test para la carga estricta de datos."""
        store = ParameterStore()
        store.create("w", (2, 3))
        with self.assertRaises(ParameterError):
            store.load_arrays({"w": np.zeros((3, 2))})
        with self.assertRaises(ParameterError):
            store.load_arrays({"w": np.zeros((2, 3)), "extra": np.zeros(1)})
        store.load_arrays({"w": np.ones((2, 3))})
        np.testing.assert_array_equal(store["w"].data, 1.0)


class TestGeneratorOperators(unittest.TestCase):
    """Tests para R, 𝓕, 𝓢 y la atención de contexto visual."""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_repeat_spectral(self):
        """Test para filas espectrales idénticas."""
        local = Tensor(self.rng.standard_normal((2, 5, 3)))
        out = repeat_spectral(local, 4).data
        self.assertEqual(out.shape, (2, 3, 4, 5))
        for row in range(4):
            np.testing.assert_array_equal(out[:, :, row, :], np.transpose(local.data, (0, 2, 1)))

    def test_flatten_split_inverse(self):
        """Test para 𝓢(𝓕(x)) == x."""
        speech = Tensor(self.rng.standard_normal((2, 3, 4, 5)))
        flat = flatten_speech(speech)
        self.assertEqual(flat.shape, (2, 5, 12))
        np.testing.assert_array_equal(split_speech(flat, 4).data, speech.data)
        with self.assertRaises(ModelError):
            split_speech(flat, 5)

    def test_attention_matches_direct_computation(self):
        """Test para la atención frente a un cálculo directo en numpy."""
        store = ParameterStore(seed=1)
        attn = VisualContextAttention(store, "attn", bins=4, channels=6, d_model=8, d_attention=5, alpha=2)
        speech = self.rng.standard_normal((1, 6, 4, 7))
        context = self.rng.standard_normal((1, 3, 8))
        feature, weights = attn(store.view(), Tensor(speech), Tensor(context))

        flat = np.transpose(speech[0], (2, 1, 0)).reshape(7, 24)
        scores = (flat @ store[attn.w_q].data) @ (context[0] @ store[attn.w_k].data).T / math.sqrt(5)
        expected_a = np.exp(scores - scores.max(axis=1, keepdims=True))
        expected_a /= expected_a.sum(axis=1, keepdims=True)
        attended = expected_a @ (context[0] @ store[attn.w_v].data)
        expected_f = np.transpose(attended.reshape(7, 4, 3), (2, 1, 0))

        np.testing.assert_allclose(weights.data[0], expected_a, atol=1e-12)
        np.testing.assert_allclose(feature.data[0], expected_f, atol=1e-12)
        np.testing.assert_allclose(weights.data.sum(axis=-1), 1.0)

    def test_identical_context_rows_give_uniform_attention(self):
        """Test para A = 1/T y F_c constante en el eje de consultas si C_v no varía."""
        store = ParameterStore(seed=2)
        attn = VisualContextAttention(store, "attn", bins=4, channels=6, d_model=8, d_attention=5, alpha=2)
        speech = self.rng.standard_normal((1, 6, 4, 9))
        context = np.tile(self.rng.standard_normal((1, 1, 8)), (1, 7, 1))
        feature, weights = attn(store.view(), Tensor(speech), Tensor(context))
        np.testing.assert_allclose(weights.data, np.full((1, 9, 7), 1.0 / 7), rtol=0, atol=1e-15)
        for query in range(1, 9):
            np.testing.assert_allclose(feature.data[..., query], feature.data[..., 0], atol=1e-12)

    def test_attention_rejects_indivisible_alpha(self):
        """Test para α que no divide el ancho de canal."""
        with self.assertRaises(ModelError):
            VisualContextAttention(ParameterStore(), "a", 4, 6, 8, 5, alpha=4)


class TestVCAGAN(unittest.TestCase):
    """Tests para el ensamblado completo."""

    @classmethod
    def setUpClass(cls):
        cls.model = tiny_model(seed=0)
        cls.rng = np.random.default_rng(0)

    def clip(self, frames, batch=None):
        shape = (frames, 16, 16, 1) if batch is None else (batch, frames, 16, 16, 1)
        return self.rng.uniform(0.0, 1.0, shape)

    def test_temporal_preservation(self):
        """Test para secuencias de longitud T y mels de 4T tramas."""
        with te.no_grad():
            for frames in (1, 8, 16, 24):
                result = self.model.synthesize(self.clip(frames))
                self.assertEqual(result.local.shape, (1, frames, 8))
                self.assertEqual(result.context.shape, (1, frames, 8))
                self.assertEqual(result.final.shape, (1, 16, 4 * frames))
                self.assertEqual(
                    [m.shape for m in result.mels],
                    [(1, 4, frames), (1, 8, 2 * frames), (1, 16, 4 * frames)],
                )

    def test_attention_maps_shape_and_rows(self):
        """Test para mapas (N, T_i, T) cuyas filas suman 1."""
        with te.no_grad():
            result = self.model.synthesize(self.clip(6, batch=2))
        self.assertEqual([a.shape for a in result.attention], [(2, 6, 6), (2, 12, 6)])
        for weights in result.attention:
            np.testing.assert_allclose(weights.sum(axis=-1), 1.0)
            self.assertTrue(np.all(weights >= 0))

    def test_single_forward_pass_counters(self):
        """Test para un único paso del generador por síntesis."""
        self.model.reset_counters()
        with te.no_grad():
            self.model.synthesize(self.clip(10))
        self.assertEqual(
            self.model.counter_snapshot(), {"synthesize": 1, "generator_stack": 1, "attention": 2}
        )

    def test_output_range_and_determinism(self):
        """Test para salidas en [-1, 1] y deterministas con el mismo ruido."""
        clip = self.clip(4)
        with te.no_grad():
            first = self.model.synthesize(clip, rng=np.random.default_rng(5)).final.data
            second = self.model.synthesize(clip, rng=np.random.default_rng(5)).final.data
        np.testing.assert_array_equal(first, second)
        self.assertTrue(np.all(np.abs(first) <= 1.0))

    def test_noise_changes_output(self):
        """Test para la influencia del ruido z."""
        clip = self.clip(4)
        with te.no_grad():
            zero = self.model.synthesize(clip).final.data
            noisy = self.model.synthesize(clip, rng=np.random.default_rng(1)).final.data
        self.assertFalse(np.allclose(zero, noisy))

    def test_invalid_clips(self):
        """Test para clips de rango o canales inválidos."""
        with self.assertRaises(ModelError):
            self.model.synthesize(np.zeros((16, 16, 1)))
        with self.assertRaises(ModelError):
            self.model.synthesize(np.zeros((4, 16, 16, 3)))

    def test_audio_encoder_alignment(self):
        """Test para F_a con la misma longitud T que F_v."""
        with te.no_grad():
            features = self.model.encode_local_audio(self.rng.uniform(-1, 1, (2, 16, 28)))
        self.assertEqual(features.shape, (2, 7, 8))
        with self.assertRaises(ModelError):
            self.model.encode_local_audio(np.zeros((1, 16, 30)))

    def test_discriminator_scores_per_stage(self):
        """Test para una puntuación condicional e incondicional por etapa."""
        with te.no_grad():
            result = self.model.synthesize(self.clip(4, batch=3))
            scores = self.model.discriminate(result.mels, result.context)
        self.assertEqual(len(scores), 3)
        for stage in scores:
            self.assertEqual(stage.unconditional.shape, (3,))
            self.assertEqual(stage.conditional.shape, (3,))
            p_u, p_c = stage.probabilities()
            self.assertTrue(np.all((p_u > 0) & (p_u < 1)))
        with self.assertRaises(ModelError):
            self.model.discriminate(result.mels[:2], result.context)

    def test_postnet_non_negative(self):
        """Test para magnitudes lineales no negativas de la postnet."""
        with te.no_grad():
            out = self.model.postnet_forward(self.rng.uniform(-1, 1, (16, 12)))
        self.assertEqual(out.shape, (1, 321, 12))
        self.assertTrue(np.all(out.data >= 0))
        with self.assertRaises(ModelError):
            self.model.postnet_forward(np.zeros((80, 12)))

    def test_refiner_accepts_zero_context(self):
        """Test para un F_c nulo: el refinador sigue dando una salida válida."""
        frames = 5
        with te.no_grad():
            local = self.model.encode_local_visual(self.clip(frames))
            speech = self.model.initial_generate(local, self.model.sample_noise(1, frames))
            zeros = Tensor(np.zeros((1, self.model.config.context_channels(0), 4, frames)))
            refined = self.model.refine_step(0, speech, zeros)
            mel = self.model.mel_head(1, refined).data
        self.assertEqual(refined.shape, (1, 4, 8, 2 * frames))
        self.assertTrue(np.all(np.isfinite(refined.data)))
        self.assertEqual(mel.shape, (1, 8, 2 * frames))
        self.assertTrue(np.all(np.abs(mel) <= 1.0))

    def test_global_context_sees_first_frame(self):
        """Test para que f_v^1 influya en C_v en el último instante."""
        local = self.rng.standard_normal((1, 6, 8))
        perturbed = local.copy()
        perturbed[0, 0] += 0.5
        with te.no_grad():
            base = self.model.encode_global_visual(Tensor(local)).data
            moved = self.model.encode_global_visual(Tensor(perturbed)).data
        self.assertGreater(np.max(np.abs(moved[0, -1] - base[0, -1])), 1e-6)

    def test_gradients_reach_generator_parameters(self):
        """Test para gradientes no nulos en los parámetros del generador."""
        model = tiny_model(seed=1)
        result = model.synthesize(self.clip(3), rng=np.random.default_rng(0))
        result.final.sum().backward()
        grads = [model.store[n].grad for n in model.store.names(["psi", "heads", "attn"])]
        self.assertTrue(any(g is not None and np.any(g != 0) for g in grads))


class TestEndToEndGradient(unittest.TestCase):
    """Tests para el gradiente de ŷ_n respecto a todos los parámetros del camino de síntesis."""

    @pytest.mark.slow
    def test_finite_differences_over_every_parameter(self):
        """Test para diferencias centrales sobre cada tensor de φ_v, φ_c, ψ, atención y cabezas."""
        model = tiny_model(seed=3, activation="silu")
        rng = np.random.default_rng(5)
        clip = Tensor(rng.uniform(0.0, 1.0, (1, 3, 16, 16, 1)))
        noise = model.sample_noise(1, 3, np.random.default_rng(6))
        weights = rng.standard_normal((1, 16, 12))
        names = model.store.names(["phi_v", "phi_c", "psi", "attn", "heads"])
        base = model.params()

        def closure(*tensors):
            params = dict(base)
            params.update(zip(names, tensors))
            final = model.synthesize(clip, noise=noise, params=params).final
            return te.mul(final, weights).sum()

        checker = GradientChecker(max_elements=6, seed=0)
        result = checker.check(closure, [model.store[n].data for n in names])
        self.assertEqual(len(result.per_input), len(names))
        self.assertTrue(result.passed(1e-4), result.max_relative_error)


class TestModelVariants(unittest.TestCase):
    """Tests para las variantes de ablación y la persistencia."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp(prefix="vcagan_model_")

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_no_attention_has_no_attention_parameters(self):
        """Test para la variante sin atención."""
        model = tiny_model(use_attention=False)
        self.assertEqual(model.store.names(["attn"]), [])
        model.reset_counters()
        with te.no_grad():
            result = model.synthesize(np.zeros((4, 16, 16, 1)))
        self.assertEqual(result.attention, [None, None])
        self.assertEqual(result.final.shape, (1, 16, 16))
        self.assertEqual(model.counter_snapshot()["attention"], 0)

    def test_single_discriminator(self):
        """Test para la variante con un único discriminador."""
        model = tiny_model(single_discriminator=True)
        self.assertEqual(model.discriminator.stages, [2])
        self.assertTrue(all(n.startswith("disc.d3.") for n in model.store.names(DISCRIMINATOR_PREFIXES)))

    def test_float32_model(self):
        """Test para parámetros y salidas en float32."""
        model = tiny_model(dtype="float32")
        with te.no_grad():
            result = model.synthesize(np.zeros((2, 16, 16, 1)))
        self.assertEqual(result.final.dtype, np.float32)

    def test_save_and_load(self):
        """Test para guardar y recargar un modelo con estado extra."""
        path = os.path.join(self.temp_dir, "m.vcag")
        source = tiny_model(seed=4)
        source.save(path, extra={"adam.gen.step": np.array([3.0])})
        target = tiny_model(seed=9)
        arrays = target.load(path)
        self.assertIn("adam.gen.step", arrays)
        self.assertEqual(source.store.checksum(), target.store.checksum())

    def test_load_mismatched_variant(self):
        """Test para cargar pesos sin atención en un modelo con atención."""
        path = os.path.join(self.temp_dir, "noattn.vcag")
        tiny_model(use_attention=False).save(path)
        with self.assertRaises(ModelError) as ctx:
            tiny_model().load(path)
        self.assertIn("--no-attention", str(ctx.exception))

    def test_prefix_groups_cover_every_parameter(self):
        """Test para que todos los parámetros pertenezcan a un grupo."""
        model = tiny_model()
        groups = set(model.store.names(GENERATOR_PREFIXES)) | set(model.store.names(DISCRIMINATOR_PREFIXES))
        groups |= set(model.store.names(["postnet"]))
        self.assertEqual(groups, set(model.store.names()))


class TestDefaultConfiguration(unittest.TestCase):
    """Tests de forma con la configuración de escritorio por defecto."""

    def test_shape_contract(self):
        """Test para mels de 80×4T con T ∈ {8, 16, 24}."""
        model = VCAGAN(ModelConfig(), seed=0)
        rng = np.random.default_rng(0)
        with te.no_grad():
            for frames in (8, 16, 24):
                result = model.synthesize(rng.uniform(0, 1, (frames, 32, 32, 1)))
                self.assertEqual(result.final.shape, (1, 80, 4 * frames))
                self.assertEqual(result.mels[0].shape, (1, 20, frames))
                self.assertEqual(result.mels[1].shape, (1, 40, 2 * frames))


if __name__ == "__main__":
    unittest.main()
