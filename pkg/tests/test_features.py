import numpy as np
import pytest

from seldkit.arrays import anechoic_ir, default_tetrahedral_array, foa_gains
from seldkit.features import (FFT_SIZE, HOP_LEN, WINDOW_LEN, extract,
                              gcc_phat, intensity_vectors, log_mel,
                              mel_filterbank, n_stft_frames, stft,
                              _hann_periodic)
from seldkit.geometry import Doa, doa_to_unit_vector, random_doa
from seldkit.render import render_static


class TestStft:
    def test_sixty_seconds_gives_2998_frames(self):
        assert n_stft_frames(60 * 24000) == 2998

    def test_frame_count_formula_off_grid(self):
        # Generic lengths follow floor((n - 960) / 480) + 1.
        for n in (24001, 100000, 1440001):
            assert n_stft_frames(n) == (n - WINDOW_LEN) // HOP_LEN + 1

    def test_too_short_raises(self):
        with pytest.raises(ValueError, match="window"):
            n_stft_frames(959)
        assert n_stft_frames(WINDOW_LEN) == 1

    def test_tone_bin(self):
        t = np.arange(2 * 24000) / 24000
        tone = np.sin(2 * np.pi * 1000 * t)
        s = stft(np.stack([tone] * 4, axis=1))
        assert s.values.shape == (n_stft_frames(len(t)), 513, 4)
        peak = np.argmax(np.abs(s.values[10, :, 0]))
        assert peak == round(1000 / 24000 * FFT_SIZE)

    def test_parseval_per_frame(self):
        rng = np.random.default_rng(0)
        audio = rng.standard_normal((24000, 4))
        s = stft(audio)
        window = _hann_periodic(WINDOW_LEN)
        for t in (0, 7, 20):
            chunk = audio[t * HOP_LEN: t * HOP_LEN + WINDOW_LEN] \
                * window[:, None]
            time_energy = np.sum(chunk ** 2, axis=0)
            spec = s.values[t]
            freq_energy = (np.abs(spec[0]) ** 2 + np.abs(spec[-1]) ** 2 +
                           2 * np.sum(np.abs(spec[1:-1]) ** 2, axis=0)) \
                / FFT_SIZE
            np.testing.assert_allclose(freq_energy, time_energy, rtol=1e-6)

    def test_shift_by_one_hop_shifts_frames(self):
        rng = np.random.default_rng(1)
        audio = rng.standard_normal((24000, 4))
        shifted = np.vstack([np.zeros((HOP_LEN, 4)), audio])
        a = stft(audio).values
        b = stft(shifted).values
        interior = min(a.shape[0], b.shape[0] - 1)
        np.testing.assert_allclose(b[1:interior + 1], a[:interior],
                                   rtol=0, atol=1e-9)


class TestLogMel:
    def test_silence_floor(self):
        lm = log_mel(stft(np.zeros((24000, 4))))
        np.testing.assert_array_equal(lm, -100.0)

    def test_white_noise_finite(self):
        rng = np.random.default_rng(2)
        lm = log_mel(stft(rng.standard_normal((24000, 4))))
        assert np.all(np.isfinite(lm))
        assert lm.shape[1] == 64

    def test_matches_dense_matrix_oracle(self):
        # Independent per-band triangle construction and explicit loops.
        t = np.arange(24000) / 24000
        tone = np.sin(2 * np.pi * 3000 * t)
        s = stft(np.stack([tone] * 4, axis=1))
        power = np.abs(s.values[:, :, 0]) ** 2

        def hz_to_mel(f):
            return 2595.0 * np.log10(1.0 + f / 700.0)

        def mel_to_hz(m):
            return 700.0 * (10 ** (m / 2595.0) - 1.0)

        edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(12000.0), 66))
        bins = np.arange(513) * 24000 / 1024
        expected = np.zeros((power.shape[0], 64))
        for b in range(64):
            lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
            w = np.zeros(513)
            for k, f in enumerate(bins):
                if lo <= f <= mid:
                    w[k] = (f - lo) / (mid - lo)
                elif mid < f <= hi:
                    w[k] = (hi - f) / (hi - mid)
            expected[:, b] = power @ w
        got = log_mel(s)[:, :, 0]
        np.testing.assert_allclose(got, 10 * np.log10(expected + 1e-10),
                                   rtol=1e-6, atol=1e-9)
        # The band containing 3 kHz dominates.
        band_hz = np.argmax(got.mean(axis=0))
        assert edges[band_hz] < 3000 < edges[band_hz + 2]

    def test_filterbank_shape_and_coverage(self):
        fb = mel_filterbank()
        assert fb.shape == (64, 513)
        assert np.all(fb >= 0)
        assert np.all(fb.max(axis=1) > 0)


class TestIntensity:
    def test_w_only_field_gives_zero(self):
        rng = np.random.default_rng(3)
        audio = np.zeros((24000, 4))
        audio[:, 0] = rng.standard_normal(24000)
        iv = intensity_vectors(stft(audio))
        np.testing.assert_allclose(iv, 0.0, atol=1e-12)

    def test_plane_wave_direction(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            d = random_doa(rng)
            noise = rng.standard_normal(24000)
            audio = noise[:, None] * foa_gains(d)[None, :]
            iv = intensity_vectors(stft(audio))
            vec = iv.sum(axis=(0, 1))
            vec /= np.linalg.norm(vec)
            cos = float(vec @ doa_to_unit_vector(d))
            assert np.degrees(np.arccos(min(1.0, cos))) < 1.0

    def test_opposite_waves_cancel(self):
        rng = np.random.default_rng(5)
        noise = rng.standard_normal(24000)
        audio = noise[:, None] * (foa_gains(Doa(0, 0)) +
                                  foa_gains(Doa(-180, 0)))[None, :]
        iv = intensity_vectors(stft(audio))
        assert np.max(np.abs(iv)) < 1e-9

    def test_rendered_plane_wave_direction(self):
        # Through the actual anechoic renderer, not a synthetic field.
        from seldkit.arrays import foa_ideal_array
        rng = np.random.default_rng(6)
        d = Doa(111.0, -24.0)
        audio = render_static(rng.standard_normal(12000),
                              anechoic_ir(d, 1.7, foa_ideal_array()))
        iv = intensity_vectors(stft(audio))
        vec = iv.sum(axis=(0, 1))
        vec /= np.linalg.norm(vec)
        cos = float(vec @ doa_to_unit_vector(d))
        assert np.degrees(np.arccos(min(1.0, cos))) < 1.0

    def test_wrong_channel_count(self):
        with pytest.raises(ValueError):
            intensity_vectors(stft(np.zeros((24000, 2))))


class TestGccPhat:
    def test_identical_channels_peak_at_zero(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(24000)
        audio = np.stack([x] * 4, axis=1)
        cc = gcc_phat(stft(audio))
        assert cc.shape[1:] == (64, 6)
        peaks = np.argmax(cc.mean(axis=0), axis=0)
        assert np.all(peaks == 32)  # lag 0
        assert cc.mean(axis=0)[32, 0] > 0.9

    def test_integer_delay_sign_convention(self):
        # Channel j lagging channel i by 5 samples peaks at +5.
        rng = np.random.default_rng(8)
        x = rng.standard_normal(24000)
        audio = rng.standard_normal((24000, 4)) * 0.01
        audio[:, 0] = x
        audio[5:, 1] = x[:-5]
        cc = gcc_phat(stft(audio)).mean(axis=0)
        assert np.argmax(cc[:, 0]) == 32 + 5

    def test_independent_noise_has_no_dominant_lag(self):
        rng = np.random.default_rng(9)
        audio = rng.standard_normal((24000, 4))
        cc = gcc_phat(stft(audio))
        # Median over frames: no lag should exceed 3x the RMS of the lag
        # vector.
        med = np.median(cc, axis=0)
        for p in range(6):
            lag_vec = med[:, p]
            assert np.max(np.abs(lag_vec)) <= 3.0 * np.sqrt(
                np.mean(lag_vec ** 2)) + 1e-9

    def test_geometric_tdoa_through_renderer(self):
        arr = default_tetrahedral_array()
        rng = np.random.default_rng(10)
        d = Doa(70.0, 10.0)
        audio = render_static(rng.standard_normal(12000),
                              anechoic_ir(d, 2.0, arr))
        cc = gcc_phat(stft(audio))
        u = doa_to_unit_vector(d)
        pos = arr.sensor_positions()
        from seldkit.features import MIC_PAIRS
        for p, (i, j) in enumerate(MIC_PAIRS):
            tdoa = (pos[i] - pos[j]) @ u / 343.0 * 24000
            peak = np.argmax(np.median(cc[:, :, p], axis=0)) - 32
            assert abs(peak - tdoa) <= 0.5 + 1e-9


class TestExtract:
    def test_shapes(self):
        rng = np.random.default_rng(11)
        audio = rng.standard_normal((48000, 4))
        foa = extract(audio, "foa")
        mic = extract(audio, "mic")
        T = n_stft_frames(48000)
        assert foa.tensor.shape == (T, 64, 7)
        assert mic.tensor.shape == (T, 64, 10)

    def test_spatial_channels_follow_mel(self):
        rng = np.random.default_rng(12)
        audio = rng.standard_normal((48000, 4))
        s = stft(audio)
        stack = extract(audio, "foa").tensor
        np.testing.assert_array_equal(stack[:, :, :4], log_mel(s))
        np.testing.assert_array_equal(stack[:, :, 4:], intensity_vectors(s))

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            extract(np.zeros((24000, 4)), "stereo")
