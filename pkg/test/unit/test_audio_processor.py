"""
Tests unitarios para el procesado de audio
==========================================

Filtro paso alto, STFT, proyección mel, normalización y Griffin-Lim.
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", ".."))

from src.classes.audio_processor import (
    AudioProcessor,
    DspError,
    LinearSpectrogram,
    MelSpectrogram,
    Waveform,
)

SR = 16000


def tone(freq: float, seconds: float = 1.0, amplitude: float = 0.5) -> Waveform:
    t = np.arange(int(SR * seconds)) / SR
    return Waveform(amplitude * np.sin(2 * np.pi * freq * t), SR)


def db(ratio: float) -> float:
    return 20.0 * np.log10(ratio)


class TestHighpass(unittest.TestCase):
    """Tests para el filtro Butterworth paso alto."""

    def setUp(self):
        self.processor = AudioProcessor()

    def test_zero_signal(self):
        """Test para la señal nula."""
        out = self.processor.highpass(Waveform(np.zeros(1000), SR))
        np.testing.assert_array_equal(out.samples, 0.0)

    def test_dc_removed(self):
        """Test para la eliminación de un offset continuo."""
        wave = Waveform(np.full(SR, 0.5), SR)
        out = self.processor.highpass(wave)
        self.assertLess(np.sum(out.samples**2), 0.01 * np.sum(wave.samples**2))

    def test_low_frequencies_attenuated(self):
        """Test para una atenuación de al menos 20 dB a 20 Hz."""
        wave = tone(20.0, seconds=2.0)
        out = self.processor.highpass(wave)
        steady = slice(SR, 2 * SR)
        ratio = Waveform(out.samples[steady]).rms() / Waveform(wave.samples[steady]).rms()
        self.assertLess(db(ratio), -20.0)

    def test_passband_preserves_rms(self):
        """Test para un tono de 440 Hz dentro de 1 dB."""
        wave = tone(440.0)
        out = self.processor.highpass(wave)
        self.assertLess(abs(db(out.rms() / wave.rms())), 1.0)

    def test_time_invariance(self):
        """Test para salida desplazada ante entrada desplazada."""
        rng = np.random.default_rng(0)
        samples = rng.uniform(-0.5, 0.5, 4000)
        shift = 123
        base = self.processor.highpass(Waveform(samples, SR)).samples
        shifted = self.processor.highpass(
            Waveform(np.concatenate([np.zeros(shift), samples]), SR)
        ).samples
        np.testing.assert_allclose(shifted[shift:], base, atol=1e-9)

    def test_invalid_cutoff(self):
        """Test para cortes inválidos."""
        wave = Waveform(np.zeros(100), SR)
        with self.assertRaises(DspError):
            self.processor.highpass(wave, cutoff=0.0)
        with self.assertRaises(DspError):
            self.processor.highpass(wave, cutoff=9000.0)


class TestStft(unittest.TestCase):
    """Tests para la STFT centrada."""

    def setUp(self):
        self.processor = AudioProcessor()

    def test_one_second_yields_one_hundred_frames(self):
        """Test para 100 tramas por segundo (4 por fotograma a 25 fps)."""
        spec, phases = self.processor.stft(tone(440.0))
        self.assertEqual(spec.frames, 100)
        self.assertEqual(spec.bins, 321)
        self.assertEqual(phases.shape, spec.mags.shape)

    def test_four_frames_per_video_frame(self):
        """Test para 4T tramas en ambos perfiles de vídeo."""
        for fps in (25, 30):
            processor = AudioProcessor(fps=fps)
            for frames in (1, 8, 16, 24):
                samples = np.zeros(frames * processor.samples_per_video_frame)
                spec, _ = processor.stft(Waveform(samples, SR))
                self.assertEqual(spec.frames, 4 * frames, f"fps={fps} T={frames}")

    def test_zero_signal_has_zero_magnitudes(self):
        """Test para magnitudes nulas con señal nula."""
        spec, _ = self.processor.stft(Waveform(np.zeros(1600), SR))
        np.testing.assert_array_equal(spec.mags, 0.0)

    def test_sinusoid_peak_bin(self):
        """Test para el pico en el bin de 1 kHz en las tramas interiores."""
        spec, _ = self.processor.stft(tone(1000.0))
        expected = int(round(1000.0 / (SR / self.processor.window)))
        peaks = np.argmax(spec.mags[:, 2:-2], axis=0)
        np.testing.assert_array_equal(peaks, expected)

    def test_invalid_arguments(self):
        """Test para señal vacía y ventana menor que el salto."""
        with self.assertRaises(DspError):
            self.processor.complex_stft(np.zeros(0))
        with self.assertRaises(DspError):
            self.processor.complex_stft(np.zeros(100), window=64, hop=128)

    def test_istft_inverts_stft(self):
        """Test para la reconstrucción exacta del espectro complejo."""
        rng = np.random.default_rng(1)
        samples = rng.uniform(-0.5, 0.5, 3200)
        spec = self.processor.complex_stft(samples)
        np.testing.assert_allclose(self.processor.istft(spec, len(samples)), samples, atol=1e-10)

    def test_unsupported_fps(self):
        """Test para perfiles de vídeo desconocidos."""
        with self.assertRaises(DspError):
            AudioProcessor(fps=24)


class TestMel(unittest.TestCase):
    """Tests para el banco mel y la proyección logarítmica."""

    def setUp(self):
        self.processor = AudioProcessor()

    def test_filterbank_shape_and_unimodal_rows(self):
        """Test para filas triangulares no negativas."""
        fb = self.processor.filterbank
        self.assertEqual(fb.weights.shape, (80, 321))
        self.assertTrue(np.all(fb.weights >= 0))
        for row in fb.weights:
            nonzero = np.flatnonzero(row)
            self.assertGreater(len(nonzero), 0)
            segment = row[nonzero[0] : nonzero[-1] + 1]
            peak = int(np.argmax(segment))
            self.assertTrue(np.all(np.diff(segment[: peak + 1]) >= 0))
            self.assertTrue(np.all(np.diff(segment[peak:]) <= 0))

    def test_filterbank_covers_band(self):
        """Test para cobertura de todos los bins entre f_min y f_max."""
        fb = self.processor.filterbank
        freqs = np.arange(fb.bins) * SR / self.processor.window
        inside = (freqs > 55.0 + 25.0) & (freqs < 8000.0 - 25.0)
        self.assertTrue(np.all(fb.weights[:, inside].sum(axis=0) > 0))

    def test_zero_magnitudes_hit_floor(self):
        """Test para el suelo logarítmico."""
        spec = LinearSpectrogram(np.zeros((321, 5)), 640, 160)
        mel = self.processor.mel_project(spec)
        np.testing.assert_allclose(mel.values, np.log(1e-5))
        self.assertEqual(mel.n_mels, 80)

    def test_impulse_only_reaches_covering_rows(self):
        """Test para un impulso en un único bin."""
        mags = np.zeros((321, 1))
        mags[100, 0] = 1.0
        mel = self.processor.mel_project(LinearSpectrogram(mags, 640, 160))
        covering = self.processor.filterbank.weights[:, 100] > 0
        floor = np.log(1e-5)
        self.assertTrue(np.all(mel.values[covering, 0] >= floor))
        self.assertTrue(np.any(mel.values[covering, 0] > floor))
        np.testing.assert_allclose(mel.values[~covering, 0], floor)

    def test_bin_mismatch(self):
        """Test para espectros con distinto número de bins."""
        with self.assertRaises(DspError):
            self.processor.mel_project(LinearSpectrogram(np.zeros((100, 3)), 198, 160))

    def test_normalize_range_and_inverse(self):
        """Test para normalizar a [-1, 1] y deshacerlo."""
        mel = self.processor.mel_spectrogram(tone(440.0), normalized=False)
        normalized = self.processor.normalize(mel)
        self.assertTrue(normalized.normalized)
        self.assertLessEqual(normalized.values.max(), 1.0)
        self.assertGreaterEqual(normalized.values.min(), -1.0)
        restored = self.processor.denormalize(normalized)
        inside = mel.values < self.processor.log_ceiling
        np.testing.assert_allclose(restored.values[inside], mel.values[inside], atol=1e-9)

    def test_mel_spectrogram_rejects_other_sample_rates(self):
        """Test para frecuencias de muestreo distintas de la configurada."""
        with self.assertRaises(DspError):
            self.processor.mel_spectrogram(Waveform(np.zeros(800), 8000))

    def test_mel_to_linear_non_negative(self):
        """Test para magnitudes lineales aproximadas no negativas."""
        mel = self.processor.mel_spectrogram(tone(440.0, seconds=0.2))
        linear = self.processor.mel_to_linear(mel)
        self.assertEqual(linear.mags.shape, (321, mel.frames))
        self.assertTrue(np.all(linear.mags >= 0))


class TestGriffinLim(unittest.TestCase):
    """Tests para la reconstrucción de fase."""

    def setUp(self):
        self.processor = AudioProcessor()

    def test_sinusoid_converges(self):
        """Test para SC < 0.1 en un tono de 440 Hz tras 100 iteraciones."""
        wave = tone(440.0)
        spec, _ = self.processor.stft(wave)
        history = []
        out = self.processor.griffin_lim(spec, iters=100, length=len(wave.samples), history=history)
        self.assertEqual(len(out.samples), len(wave.samples))
        self.assertEqual(len(history), 100)
        self.assertLess(history[-1], 0.1)

    def test_convergence_non_increasing(self):
        """Test para SC no creciente (holgura 1e-6)."""
        spec, _ = self.processor.stft(tone(440.0, seconds=0.5))
        history = []
        self.processor.griffin_lim(spec, iters=30, history=history)
        self.assertTrue(np.all(np.diff(history) <= 1e-6))

    def test_more_iterations_not_worse_on_smooth_mags(self):
        """Test para SC(100) ≤ SC(10) sobre magnitudes suaves aleatorias."""
        rng = np.random.default_rng(2)
        coarse = rng.uniform(0.0, 1.0, (12, 6))
        rows = np.linspace(0, 11, 321)
        cols = np.linspace(0, 5, 20)
        smooth = np.array([np.interp(cols, np.arange(6), r) for r in coarse])
        smooth = np.array([np.interp(rows, np.arange(12), c) for c in smooth.T]).T
        spec = LinearSpectrogram(smooth, 640, 160)
        short, long = [], []
        self.processor.griffin_lim(spec, iters=10, history=short)
        self.processor.griffin_lim(spec, iters=100, history=long)
        self.assertLessEqual(long[-1], short[-1] + 1e-6)

    def test_zero_mags_give_zero_wave(self):
        """Test para magnitudes nulas."""
        out = self.processor.griffin_lim(LinearSpectrogram(np.zeros((321, 8)), 640, 160), iters=3)
        np.testing.assert_array_equal(out.samples, 0.0)

    def test_invalid_arguments(self):
        """Test para iteraciones < 1 y magnitudes negativas."""
        spec = LinearSpectrogram(np.ones((321, 4)), 640, 160)
        with self.assertRaises(DspError):
            self.processor.griffin_lim(spec, iters=0)
        with self.assertRaises(DspError):
            self.processor.griffin_lim(LinearSpectrogram(-np.ones((321, 4)), 640, 160))


class TestWaveform(unittest.TestCase):
    """Tests para el tipo Waveform."""

    def test_invalid_sample_rate(self):
        """Test para frecuencias no positivas."""
        with self.assertRaises(DspError):
            Waveform(np.zeros(3), 0)

    def test_duration_and_rms(self):
        """Test para duración y RMS."""
        wave = Waveform(np.ones(8000), SR)
        self.assertAlmostEqual(wave.duration, 0.5)
        self.assertAlmostEqual(wave.rms(), 1.0)
        self.assertEqual(Waveform(np.zeros(0), SR).rms(), 0.0)


if __name__ == "__main__":
    unittest.main()
