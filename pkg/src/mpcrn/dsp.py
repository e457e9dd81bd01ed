"""Waveform <-> spectrogram conversion: framing, windowing, FFT, overlap-add.

All analysis math runs in double precision. Spectrograms are complex128
arrays of shape (frames, bins) with bins = fft_size // 2 + 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput

SAMPLE_RATE = 16000

# Phase of a zero-magnitude bin is undefined; pick (cos, sin) = (1, 0)
# whenever magnitude <= PHASE_EPS so downstream math stays deterministic.
PHASE_EPS = 1e-12


def hamming_window(n: int) -> np.ndarray:
    """Periodic (DFT-even) Hamming window of length n."""
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftConfig:
    """Analysis geometry: 32 ms window / 8 ms hop / 512-point FFT at 16 kHz."""

    win_len: int = 512
    hop: int = 128
    fft_size: int = 512

    def __post_init__(self):
        if self.win_len <= 0 or self.hop <= 0 or self.fft_size <= 0:
            raise InvalidInput("win_len, hop and fft_size must be positive")
        if self.win_len % self.hop != 0:
            raise InvalidInput("hop must divide win_len")
        if self.win_len > self.fft_size:
            raise InvalidInput("win_len must not exceed fft_size")

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    def window(self) -> np.ndarray:
        return hamming_window(self.win_len)

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.win_len:
            return 0
        return (n_samples - self.win_len) // self.hop + 1


def stft(x: np.ndarray, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Short-time Fourier transform.

    Frame m covers samples [m*hop, m*hop + win_len); no center padding, so
    framing is causal. Samples past the last full frame are ignored.

    Args:
        x: 1-D waveform, nominal range [-1, 1].
        cfg: analysis geometry.

    Returns:
        Complex spectrogram of shape (frames, bins).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInput("waveform must be a non-empty 1-D array")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("waveform contains non-finite samples")
    if x.size < cfg.win_len:
        raise InvalidInput(
            f"waveform too short for one frame: {x.size} < {cfg.win_len}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.win_len)[:: cfg.hop]
    return np.fft.rfft(frames * cfg.window(), n=cfg.fft_size, axis=1)


def istft(spec: np.ndarray, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Inverse STFT by weighted overlap-add.

    The synthesis window equals the analysis window; every output sample is
    normalized by the sum of squared windows that cover it, so
    istft(stft(x)) reproduces x exactly on all framed samples.

    Returns:
        Waveform of length (frames - 1) * hop + win_len.
    """
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != cfg.bins:
        raise InvalidInput(
            f"spectrogram must have shape (frames, {cfg.bins}), got {spec.shape}"
        )
    win = cfg.window()
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=1)[:, : cfg.win_len] * win
    n_out = (spec.shape[0] - 1) * cfg.hop + cfg.win_len
    num = np.zeros(n_out)
    den = np.zeros(n_out)
    wsq = win * win
    for m in range(spec.shape[0]):
        start = m * cfg.hop
        num[start : start + cfg.win_len] += frames[m]
        den[start : start + cfg.win_len] += wsq
    # Hamming is strictly positive, so den never vanishes.
    return num / den


def magnitude_phase(spec: np.ndarray):
    """Split a complex spectrogram into (magnitude, cos phase, sin phase).

    Bins with magnitude <= PHASE_EPS get the degenerate-phase convention
    (cos, sin) = (1, 0); everywhere else cos^2 + sin^2 == 1.
    """
    spec = np.asarray(spec)
    mag = np.abs(spec)
    safe = np.maximum(mag, PHASE_EPS)
    cos = np.where(mag > PHASE_EPS, spec.real / safe, 1.0)
    sin = np.where(mag > PHASE_EPS, spec.imag / safe, 0.0)
    return mag, cos, sin
