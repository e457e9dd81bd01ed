"""PCM16 mono WAV input/output (stdlib wave module)."""

import wave

import numpy as np

from .dsp import SAMPLE_RATE
from .errors import InvalidInput, ParseError

PCM16_SCALE = 32768.0


def read_wav(path, expect_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Read a mono PCM16 WAV as float64 in [-1, 1).

    Raises:
        InvalidInput: wrong channel count, sample width, or sample rate
            (no silent resampling).
        ParseError: not a parseable RIFF/WAV file.
    """
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            frames = f.readframes(f.getnframes())
    except (wave.Error, EOFError) as e:
        raise ParseError(f"malformed WAV file {path}: {e}") from None
    if channels != 1:
        raise InvalidInput(f"{path}: expected mono audio, got {channels} channels")
    if width != 2:
        raise InvalidInput(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if rate != expect_rate:
        raise InvalidInput(
            f"{path}: expected {expect_rate} Hz, got {rate} Hz (resampling is out of scope)")
    return pcm16_to_float(np.frombuffer(frames, dtype="<i2"))


def write_wav(path, wave_data: np.ndarray, rate: int = SAMPLE_RATE):
    """Write float samples as a mono PCM16 WAV (values clipped to range)."""
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(rate)
        f.writeframes(float_to_pcm16(wave_data).tobytes())


def pcm16_to_float(samples: np.ndarray) -> np.ndarray:
    return samples.astype(np.float64) / PCM16_SCALE


def float_to_pcm16(wave_data: np.ndarray) -> np.ndarray:
    scaled = np.round(np.asarray(wave_data, dtype=np.float64) * PCM16_SCALE)
    return np.clip(scaled, -32768, 32767).astype("<i2")
