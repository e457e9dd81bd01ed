"""Synthetic clean/noise mixtures for desk-scale training and evaluation.

Clean signals are harmonic tones (randomized fundamental, 3-8 partials,
slow amplitude envelope), which have enough spectral structure for masking
to be learnable. Noise is white, pink, or band-limited. Mixtures hit the
requested SNR exactly by scaling the noise.
"""

from dataclasses import dataclass

import numpy as np

from .dsp import SAMPLE_RATE
from .errors import InvalidInput


@dataclass(frozen=True)
class SynthMixSpec:
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0)
    duration: float = 3.0
    count: int = 16
    seed: int = 0
    noise_kind: str = "white"            # white | pink | band
    f0_range: tuple = (80.0, 300.0)
    harmonics: tuple = (3, 8)
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.noise_kind not in ("white", "pink", "band"):
            raise InvalidInput(f"unknown noise kind {self.noise_kind!r}")
        if self.duration <= 0 or self.count < 1:
            raise InvalidInput("duration must be positive and count >= 1")


def harmonic_voice(rng: np.random.Generator, n: int, sr: int = SAMPLE_RATE,
                   f0_range=(80.0, 300.0), harmonics=(3, 8)) -> np.ndarray:
    """Harmonic tone with randomized partial amplitudes and a slow envelope."""
    t = np.arange(n) / sr
    f0 = rng.uniform(*f0_range)
    n_harm = int(rng.integers(harmonics[0], harmonics[1] + 1))
    x = np.zeros(n)
    for k in range(1, n_harm + 1):
        fk = k * f0
        if fk >= 0.475 * sr:
            break
        amp = rng.uniform(0.5, 1.0) / k
        x += amp * np.sin(2 * np.pi * fk * t + rng.uniform(0, 2 * np.pi))
    env_rate = rng.uniform(0.5, 2.0)
    env = 0.4 + 0.6 * (0.5 + 0.5 * np.sin(2 * np.pi * env_rate * t
                                          + rng.uniform(0, 2 * np.pi)))
    x *= env
    rms = np.sqrt(np.mean(x * x))
    x *= 0.1 / max(rms, 1e-12)
    peak = np.max(np.abs(x))
    if peak > 0.99:
        x *= 0.99 / peak
    return x


def noise_signal(rng: np.random.Generator, n: int, kind: str = "white",
                 sr: int = SAMPLE_RATE) -> np.ndarray:
    """Unit-RMS noise of the requested color."""
    white = rng.standard_normal(n)
    if kind == "white":
        out = white
    elif kind == "pink":
        spec = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, d=1.0 / sr)
        spec[1:] /= np.sqrt(freqs[1:])
        spec[0] = 0.0
        out = np.fft.irfft(spec, n=n)
    elif kind == "band":
        lo = rng.uniform(100.0, 2000.0)
        hi = lo + rng.uniform(500.0, 4000.0)
        spec = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, d=1.0 / sr)
        spec[(freqs < lo) | (freqs > hi)] = 0.0
        out = np.fft.irfft(spec, n=n)
    else:
        raise InvalidInput(f"unknown noise kind {kind!r}")
    rms = np.sqrt(np.mean(out * out))
    return out / max(rms, 1e-12)


def mix_at_snr(clean: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    """clean + scaled noise, hitting snr_db exactly (up to float rounding)."""
    p_clean = float(np.mean(clean * clean))
    p_noise = float(np.mean(noise * noise))
    if p_clean == 0.0 or p_noise == 0.0:
        raise InvalidInput("cannot mix a silent clean or noise signal")
    scale = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return clean + scale * noise


def synth_pair(rng: np.random.Generator, spec: SynthMixSpec):
    """One (noisy, clean) pair drawn from the mixture spec."""
    n = int(round(spec.duration * spec.sample_rate))
    clean = harmonic_voice(rng, n, spec.sample_rate, spec.f0_range, spec.harmonics)
    noise = noise_signal(rng, n, spec.noise_kind, spec.sample_rate)
    snr = spec.snr_db[int(rng.integers(len(spec.snr_db)))]
    return mix_at_snr(clean, noise, snr), clean


def synth_batch(spec: SynthMixSpec, stream: int | None = None):
    """Deterministic batch of spec.count (noisy, clean) pairs.

    The same (spec.seed, stream) always yields the same batch; distinct
    stream keys (e.g. training step numbers) yield independent batches.
    """
    key = spec.seed if stream is None else [spec.seed, stream]
    rng = np.random.default_rng(key)
    return [synth_pair(rng, spec) for _ in range(spec.count)]
