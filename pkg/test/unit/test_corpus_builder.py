"""
Tests unitarios para el corpus sintético
========================================

Guiones con homófenos, renderizado de vídeo y audio, generación del
corpus, objetivos multiescala y muestreo de ventanas.
"""

import filecmp
import os
import shutil
import sys
import tempfile
import unittest
from test.utils.tiny_models import tiny_builder

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

from src.classes.audio_processor import AudioProcessor
from src.classes.corpus_builder import (
    BIGRAMS,
    FIRST_MEMBER_CUES,
    HOMOPHENE_PAIRS,
    PHONEMES,
    UNAMBIGUOUS,
    VISEME_OF,
    VOWELS,
    CorpusBuilder,
    CorpusError,
    TokenScript,
    load_corpus,
    multiscale_targets,
    sample_window,
)
from src.classes.media_io import write_melb


class TestTokenScript(unittest.TestCase):
    """Tests para los guiones de fonemas."""

    def test_alphabet(self):
        """Test para 12 fonemas, 10 visemas y 2 pares de homófenos."""
        self.assertEqual(len(PHONEMES), 12)
        self.assertEqual(len(set(VISEME_OF.values())), 10)
        self.assertEqual(len(HOMOPHENE_PAIRS), 2)
        for first, second in HOMOPHENE_PAIRS:
            self.assertEqual(VISEME_OF[first], VISEME_OF[second])

    def test_string_round_trip_and_frames(self):
        """Test para la conversión a texto y el número de fotogramas."""
        script = TokenScript.from_string("aa sil m iy")
        self.assertEqual(script.to_string(), "aa sil m iy")
        self.assertEqual(script.frames, 16)
        self.assertEqual(script.homophene_positions(), [2])

    def test_unknown_phoneme(self):
        """Test para fonemas desconocidos."""
        with self.assertRaises(CorpusError):
            TokenScript(["aa", "zz"])

    def test_homophenes_follow_their_cue(self):
        """Test para homófenos con contexto dos posiciones antes."""
        builder = CorpusBuilder(clip_frames=32, workers=1)
        rng = np.random.default_rng(0)
        seen = 0
        for _ in range(200):
            script = builder.make_script(rng)
            for position in script.homophene_positions():
                seen += 1
                self.assertGreaterEqual(position, 2)
                token = script.tokens[position]
                pair = next(p for p in HOMOPHENE_PAIRS if token in p)
                cue = script.tokens[position - 2]
                expected = pair[0] if cue in FIRST_MEMBER_CUES else pair[1]
                self.assertEqual(token, expected)
        self.assertGreater(seen, 0)

    def test_bigram_grammar(self):
        """Test para filas de transición normalizadas y sin repetición inmediata."""
        for previous, row in BIGRAMS.items():
            self.assertAlmostEqual(row.sum(), 1.0)
            if previous in UNAMBIGUOUS:
                self.assertEqual(row[UNAMBIGUOUS.index(previous)], 0.0)

        builder = CorpusBuilder(clip_frames=32, homophene_rate=0.0, workers=1)
        rng = np.random.default_rng(1)
        alternating = same_class = 0
        for _ in range(100):
            tokens = builder.make_script(rng).tokens
            for previous, current in zip(tokens, tokens[1:]):
                self.assertNotEqual(previous, current)
                if (previous in VOWELS) != (current in VOWELS):
                    alternating += 1
                else:
                    same_class += 1
        self.assertGreater(alternating, same_class)


class TestRendering(unittest.TestCase):
    """Tests para el renderizado de vídeo y audio."""

    @classmethod
    def setUpClass(cls):
        cls.builder = CorpusBuilder(workers=1)

    def test_homophene_segments_are_pixel_identical(self):
        """Test para píxeles idénticos en un par de homófenos."""
        first = self.builder.render_pair(7, 3, TokenScript.from_string("aa sil m iy"))
        second = self.builder.render_pair(7, 3, TokenScript.from_string("aa sil b iy"))
        np.testing.assert_array_equal(first.clip, second.clip)
        segment = slice(32, 48)
        self.assertFalse(np.allclose(first.wave.samples, second.wave.samples))
        self.assertFalse(np.allclose(first.mel.values[:, segment], second.mel.values[:, segment]))

    def test_same_seed_same_pixels(self):
        """Test para el determinismo del renderizado."""
        a = self.builder.render_pair(1, 2)
        b = self.builder.render_pair(1, 2)
        np.testing.assert_array_equal(a.clip, b.clip)
        np.testing.assert_array_equal(a.wave.samples, b.wave.samples)
        self.assertEqual(a.script.tokens, b.script.tokens)

    def test_clip_and_audio_geometry(self):
        """Test para T×32×32×1 en [0, 1], 640·T muestras y 4T tramas."""
        pair = self.builder.render_pair(0, 0)
        self.assertEqual(pair.clip.shape, (16, 32, 32, 1))
        self.assertTrue(np.all((pair.clip >= 0) & (pair.clip <= 1)))
        self.assertEqual(len(pair.wave.samples), 640 * 16)
        self.assertEqual(pair.mel.frames, 64)
        self.assertLessEqual(np.max(np.abs(pair.wave.samples)), 1.0)

    def test_silence_is_closed_and_quiet(self):
        """Test para labios cerrados y audio nulo en el silencio."""
        pair = self.builder.render_pair(0, 1, TokenScript.from_string("sil aa sil aa"))
        np.testing.assert_array_equal(pair.wave.samples[:4 * 640], 0.0)
        center = self.builder.frame_size // 2
        silent = pair.clip[0, center, center, 0]
        open_mouth = pair.clip[4, center, center, 0]
        self.assertGreater(silent, open_mouth)

    def test_distinct_phonemes_differ_more_than_repeats(self):
        """Test para mayor distancia mel entre fonemas distintos que entre repeticiones."""
        script = TokenScript.from_string("aa aa uw uw")
        pair = self.builder.render_pair(5, 0, script)
        mel = pair.mel.values
        seg = lambda k: mel[:, 16 * k + 4 : 16 * k + 12]
        same = np.mean(np.abs(seg(0) - seg(1)))
        different = np.mean(np.abs(seg(1) - seg(2)))
        self.assertGreater(different, same)

    def test_invalid_clip_length(self):
        """Test para clips que no son múltiplo de la duración del token."""
        with self.assertRaises(CorpusError):
            CorpusBuilder(clip_frames=10, workers=1)

    def test_griffin_lim_sanity_on_corpus_audio(self):
        """Test para SC < 0.15 al invertir magnitudes reales del corpus."""
        pair = self.builder.render_pair(3, 4)
        processor = self.builder.processor
        spec = processor.linear_spectrogram(pair.wave)
        history = []
        processor.griffin_lim(spec, iters=100, length=len(pair.wave.samples), history=history)
        self.assertLess(history[-1], 0.15)


class TestCorpus(unittest.TestCase):
    """Tests para la generación y lectura del corpus."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp(prefix="vcagan_corpus_")

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_split_proportions(self):
        """Test para el reparto 80/10/10."""
        labels = CorpusBuilder.split_assignment(200, seed=0)
        self.assertEqual((labels.count("train"), labels.count("val"), labels.count("test")), (160, 20, 20))
        self.assertEqual(CorpusBuilder.split_assignment(200, 0), labels)

    def test_build_is_byte_identical(self):
        """Test para corpus idénticos byte a byte con la misma semilla."""
        first = os.path.join(self.temp_dir, "a")
        second = os.path.join(self.temp_dir, "b")
        tiny_builder(workers=2).build_corpus(first, 6, seed=11)
        tiny_builder(workers=1).build_corpus(second, 6, seed=11)
        names = ["manifest.tsv"] + [
            os.path.join(sub, f"s{i:05d}.{ext}")
            for i in range(6)
            for sub, ext in (("wav", "wav"), ("mel", "melb"), ("video", "vid"))
        ]
        match, mismatch, errors = filecmp.cmpfiles(first, second, names, shallow=False)
        self.assertEqual(mismatch, [])
        self.assertEqual(errors, [])

    def test_manifest_and_alignment(self):
        """Test para el manifiesto y 4T tramas mel por muestra."""
        root = os.path.join(self.temp_dir, "c")
        entries = tiny_builder().build_corpus(root, 10, seed=0)
        corpus = load_corpus(root)
        self.assertEqual(len(corpus), 10)
        self.assertEqual([e.sample_id for e in corpus.entries], [e.sample_id for e in entries])
        self.assertEqual(len(corpus.split("train")), 8)
        for entry in corpus.entries:
            clip, mel = corpus.load_sample(entry)
            self.assertEqual(clip.shape, (8, 16, 16, 1))
            self.assertEqual(mel.shape, (16, 32))
            self.assertTrue(np.all(np.abs(mel) <= 1.0))
        with self.assertRaises(CorpusError):
            corpus.split("holdout")

    def test_misaligned_sample_detected(self):
        """Test para un mel con un número de tramas incorrecto."""
        root = os.path.join(self.temp_dir, "d")
        tiny_builder().build_corpus(root, 2, seed=0)
        corpus = load_corpus(root)
        entry = corpus.entries[0]
        mel = AudioProcessor(n_mels=16).mel_spectrogram(
            tiny_builder().render_pair(0, 0).wave
        )
        mel.values = mel.values[:, :-1]
        write_melb(os.path.join(root, entry.melb), mel)
        with self.assertRaises(CorpusError):
            corpus.load_sample(entry)

    def test_missing_manifest_and_invalid_size(self):
        """Test para manifiesto ausente y n < 1."""
        with self.assertRaises(CorpusError):
            load_corpus(self.temp_dir)
        with self.assertRaises(CorpusError):
            tiny_builder().build_corpus(self.temp_dir, 0, seed=0)


class TestTargetsAndWindows(unittest.TestCase):
    """Tests para objetivos multiescala y ventanas."""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    @staticmethod
    def bilinear_oracle(image, out_h, out_w):
        """Interpolación bilineal directa con centros de píxel."""
        in_h, in_w = image.shape
        out = np.zeros((out_h, out_w))
        for i in range(out_h):
            y = min(max((i + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1)
            y0 = int(np.floor(y))
            y1 = min(y0 + 1, in_h - 1)
            for j in range(out_w):
                x = min(max((j + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1)
                x0 = int(np.floor(x))
                x1 = min(x0 + 1, in_w - 1)
                fy, fx = y - y0, x - x0
                out[i, j] = (
                    (1 - fy) * ((1 - fx) * image[y0, x0] + fx * image[y0, x1])
                    + fy * ((1 - fx) * image[y1, x0] + fx * image[y1, x1])
                )
        return out

    def test_scales_and_identity(self):
        """Test para 20×T, 40×2T y la identidad en la última escala."""
        mel = self.rng.uniform(-1, 1, (80, 64))
        y1, y2, y3 = multiscale_targets(mel)
        self.assertEqual((y1.shape, y2.shape), ((20, 16), (40, 32)))
        self.assertIs(y3, mel)
        np.testing.assert_allclose(y1, self.bilinear_oracle(mel, 20, 16), atol=1e-12)

    def test_constant_mel(self):
        """Test para un mel constante en todas las escalas."""
        for target in multiscale_targets(np.full((2, 80, 32), -0.25)):
            np.testing.assert_allclose(target, -0.25)

    def test_wrong_shapes(self):
        """Test para F incorrecto o L no divisible."""
        with self.assertRaises(CorpusError):
            multiscale_targets(np.zeros((40, 64)))
        with self.assertRaises(CorpusError):
            multiscale_targets(np.zeros((80, 66)))

    def test_window_alignment_and_bounds(self):
        """Test para ventanas [t, t+L) y [4t, 4(t+L))."""
        clip = self.rng.uniform(0, 1, (16, 4, 4, 1))
        mel = self.rng.uniform(-1, 1, (8, 64))
        full_clip, full_mel, start = sample_window(clip, mel, 16, self.rng)
        self.assertEqual(start, 0)
        np.testing.assert_array_equal(full_clip, clip)
        np.testing.assert_array_equal(full_mel, mel)

        for _ in range(20):
            w_clip, w_mel, start = sample_window(clip, mel, 5, self.rng)
            self.assertEqual(w_mel.shape[1], 4 * w_clip.shape[0])
            np.testing.assert_array_equal(w_clip, clip[start : start + 5])
            np.testing.assert_array_equal(w_mel, mel[:, 4 * start : 4 * start + 20])

        with self.assertRaises(CorpusError):
            sample_window(clip, mel, 17, self.rng)

    def test_window_determinism(self):
        """Test para la misma ventana con la misma semilla."""
        clip = np.zeros((16, 2, 2, 1))
        mel = np.zeros((8, 64))
        starts = [sample_window(clip, mel, 4, np.random.default_rng(9))[2] for _ in range(3)]
        self.assertEqual(len(set(starts)), 1)


if __name__ == "__main__":
    unittest.main()
