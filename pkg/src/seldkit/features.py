"""Input features for SELD models: per-channel log-mel spectrograms plus
FOA acoustic intensity vectors or tetrahedral GCC-PHAT lag sequences.

STFT parameters are fixed for the 24 kHz material: 40 ms Hann windows
(960 samples, zero-padded to a 1024-point FFT) hopped every 20 ms, with the
first window starting at sample 0 (no pre-padding).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .arrays import SAMPLE_RATE

WINDOW_S = 0.040
HOP_S = 0.020
FFT_SIZE = 1024
WINDOW_LEN = int(round(WINDOW_S * SAMPLE_RATE))  # 960
HOP_LEN = int(round(HOP_S * SAMPLE_RATE))  # 480
N_BINS = FFT_SIZE // 2 + 1  # 513
N_MELS = 64
N_GCC_LAGS = 64
MEL_FMIN_HZ = 0.0
MEL_FMAX_HZ = 12000.0
POWER_FLOOR = 1e-10
PHAT_FLOOR = 1e-12
MIC_PAIRS = tuple(combinations(range(4), 2))


@dataclass
class StftTensor:
    """Complex STFT, shape (frames, 513, channels)."""

    values: np.ndarray
    window_s: float = WINDOW_S
    hop_s: float = HOP_S
    fft_size: int = FFT_SIZE
    sample_rate: int = SAMPLE_RATE

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass
class FeatureStack:
    """Stacked model input, (frames, 64, K): K=7 for FOA, K=10 for MIC."""

    format: str
    tensor: np.ndarray


def n_stft_frames(n_samples: int) -> int:
    """Frame count for a signal of `n_samples`; a final window ending
    exactly at the signal end is not counted (a 60 s file gives 2998)."""
    if n_samples < WINDOW_LEN:
        raise ValueError(f"audio shorter than one window ({WINDOW_LEN} samples)")
    return max(1, int(np.ceil((n_samples - WINDOW_LEN) / HOP_LEN)))


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(audio: np.ndarray) -> StftTensor:
    """Hann-windowed STFT of (n, channels) audio at the fixed parameters."""
    audio = np.asarray(audio, dtype=float)
    if audio.ndim == 1:
        audio = audio[:, None]
    n_frames = n_stft_frames(audio.shape[0])
    window = _hann_periodic(WINDOW_LEN)
    frames = np.zeros((n_frames, WINDOW_LEN, audio.shape[1]))
    for t in range(n_frames):
        start = t * HOP_LEN
        chunk = audio[start: start + WINDOW_LEN]
        frames[t, : chunk.shape[0]] = chunk
    frames *= window[None, :, None]
    return StftTensor(values=np.fft.rfft(frames, n=FFT_SIZE, axis=1))


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS) -> np.ndarray:
    """Triangular HTK-mel filterbank over the FFT bins, shape (n_mels, 513)."""
    edges_mel = np.linspace(_hz_to_mel(MEL_FMIN_HZ), _hz_to_mel(MEL_FMAX_HZ),
                            n_mels + 2)
    edges_hz = _mel_to_hz(edges_mel)
    bin_hz = np.arange(N_BINS) * SAMPLE_RATE / FFT_SIZE
    bank = np.zeros((n_mels, N_BINS))
    for b in range(n_mels):
        lo, mid, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        rising = (bin_hz - lo) / (mid - lo)
        falling = (hi - bin_hz) / (hi - mid)
        bank[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


_filterbank_cache: dict[int, np.ndarray] = {}


def _bank(n_mels: int) -> np.ndarray:
    fb = _filterbank_cache.get(n_mels)
    if fb is None:
        fb = mel_filterbank(n_mels)
        _filterbank_cache[n_mels] = fb
    return fb


def log_mel(s: StftTensor, n_mels: int = N_MELS) -> np.ndarray:
    """Per-channel log-mel power, (frames, n_mels, channels), in dB."""
    power = np.abs(s.values) ** 2
    mel = np.einsum("mk,tkc->tmc", _bank(n_mels), power)
    return 10.0 * np.log10(mel + POWER_FLOOR)


def intensity_vectors(s: StftTensor) -> np.ndarray:
    """Mel-aggregated, energy-normalized acoustic intensity, (frames, 64, 3).

    Expects ACN/SN3D channels (W, Y, Z, X); components are returned in
    Cartesian (x, y, z) order to match the DOA convention.
    """
    if s.values.shape[2] != 4:
        raise ValueError("intensity vectors need 4 FOA channels")
    w = s.values[:, :, 0]
    xyz = s.values[:, :, [3, 1, 2]]  # (X, Y, Z)
    intensity = np.real(np.conj(w)[:, :, None] * xyz)
    energy = np.abs(w) ** 2 + np.sum(np.abs(xyz) ** 2, axis=2) / 3.0
    fb = _bank(N_MELS)
    mel_i = np.einsum("mk,tkc->tmc", fb, intensity)
    mel_e = np.einsum("mk,tk->tm", fb, energy)
    return mel_i / (mel_e[:, :, None] + POWER_FLOOR)


def gcc_phat(s: StftTensor) -> np.ndarray:
    """PHAT-weighted cross-correlation lags for the 6 channel pairs,
    (frames, 64, 6), lags -32..+31 centered on zero.

    A positive peak lag for pair (i, j) means channel j lags channel i.
    """
    if s.values.shape[2] != 4:
        raise ValueError("GCC-PHAT needs 4 microphone channels")
    half = N_GCC_LAGS // 2
    out = np.zeros((s.n_frames, N_GCC_LAGS, len(MIC_PAIRS)))
    for p, (i, j) in enumerate(MIC_PAIRS):
        cross = np.conj(s.values[:, :, i]) * s.values[:, :, j]
        cc = np.fft.irfft(cross / (np.abs(cross) + PHAT_FLOOR),
                          n=FFT_SIZE, axis=1)
        out[:, :, p] = np.concatenate([cc[:, -half:], cc[:, :half]], axis=1)
    return out


def extract(audio: np.ndarray, fmt: str) -> FeatureStack:
    """Full feature stack for one 4-channel recording."""
    if fmt not in ("foa", "mic"):
        raise ValueError(f"unknown format {fmt!r}")
    s = stft(audio)
    mel = log_mel(s)
    spatial = intensity_vectors(s) if fmt == "foa" else gcc_phat(s)
    return FeatureStack(format=fmt,
                        tensor=np.concatenate([mel, spatial], axis=2))
