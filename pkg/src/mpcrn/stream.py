"""Frame-by-frame causal inference with per-stream state.

Feed win_len - hop samples once (prime), then exactly hop samples per call.
Each call analyzes the newest full window, runs one network step with
carried state, and emits the hop-sized chunk of enhanced samples that no
future frame can touch. The algorithmic delay is therefore one window
(32 ms at the default geometry), and the emitted samples match the offline
pipeline bit-for-float: same frames, same per-sample window normalization.
"""

import statistics
import time

import numpy as np

from .dsp import StftConfig
from .errors import InvalidInput
from .model import MPCRN, MaskTriple, ModelConfig
from .pipeline import enhance_waveform, identity_masks
from .reconstruction import reconstruct_cartesian, reconstruct_polar


class StreamEngine:
    """One engine per stream; owns all mutable state for that stream.

    An engine must be driven by one thread at a time but may move between
    threads between calls; independent engines share the (read-only) model.
    """

    def __init__(self, model: MPCRN | None, stft_cfg: StftConfig = StftConfig(),
                 recon: str = "polar"):
        self.model = model
        self.cfg = stft_cfg
        self.recon = recon
        self._window = stft_cfg.window()
        self._wsq = self._window * self._window
        self._analysis = np.zeros(stft_cfg.win_len)     # newest win_len samples
        self._ola_num = np.zeros(stft_cfg.win_len)
        self._ola_den = np.zeros(stft_cfg.win_len)
        self._net_state = (model.init_stream_state(stft_cfg.bins)
                           if model is not None else None)
        self._primed = False
        self.frames_processed = 0

    def reset(self):
        """Return to the zero-initialized state."""
        self._analysis[...] = 0.0
        self._ola_num[...] = 0.0
        self._ola_den[...] = 0.0
        if self.model is not None:
            self._net_state = self.model.init_stream_state(self.cfg.bins)
        self._primed = False
        self.frames_processed = 0

    def state_nbytes(self) -> int:
        """Footprint of the per-stream state; constant for the stream's life."""
        total = self._analysis.nbytes + self._ola_num.nbytes + self._ola_den.nbytes
        if self._net_state is not None:
            for group in self._net_state:
                total += sum(a.nbytes for a in group)
        return total

    def prime(self, samples: np.ndarray):
        """Load the first win_len - hop input samples."""
        samples = np.asarray(samples, dtype=np.float64)
        need = self.cfg.win_len - self.cfg.hop
        if self._primed:
            raise InvalidInput("stream already primed")
        if samples.size != need:
            raise InvalidInput(f"priming needs exactly {need} samples, got {samples.size}")
        self._analysis[self.cfg.hop:] = samples
        self._primed = True

    def process_frame(self, chunk: np.ndarray) -> np.ndarray:
        """Consume hop input samples, emit hop enhanced samples."""
        if not self._primed:
            raise InvalidInput("prime() the stream before processing frames")
        chunk = np.asarray(chunk, dtype=np.float64)
        hop = self.cfg.hop
        if chunk.size != hop:
            raise InvalidInput(f"chunk must be exactly {hop} samples, got {chunk.size}")
        self._analysis[:-hop] = self._analysis[hop:]
        self._analysis[-hop:] = chunk
        spec = np.fft.rfft(self._analysis * self._window, n=self.cfg.fft_size)
        if self.model is None:
            masks = identity_masks(spec.shape)
        else:
            x_t = np.stack([spec.real, spec.imag])[None].astype(self.model.store.dtype)
            out = self.model.step(x_t, self._net_state)
            masks = MaskTriple(*(m[0].astype(np.float64) for m in out))
        if self.recon == "polar":
            s_hat = reconstruct_polar(masks.mag, masks.real, masks.imag, spec)
        else:
            s_hat = reconstruct_cartesian(self.recon, masks.real, masks.imag, spec)
        frame = np.fft.irfft(s_hat, n=self.cfg.fft_size)[: self.cfg.win_len]
        self._ola_num += frame * self._window
        self._ola_den += self._wsq
        out_chunk = self._ola_num[:hop] / self._ola_den[:hop]
        self._ola_num[:-hop] = self._ola_num[hop:]
        self._ola_num[-hop:] = 0.0
        self._ola_den[:-hop] = self._ola_den[hop:]
        self._ola_den[-hop:] = 0.0
        self.frames_processed += 1
        return out_chunk

    def process(self, wave: np.ndarray) -> np.ndarray:
        """Convenience driver: prime once, then stream all full hops."""
        wave = np.asarray(wave, dtype=np.float64)
        prime_len = self.cfg.win_len - self.cfg.hop
        if wave.size < self.cfg.win_len:
            raise InvalidInput("waveform shorter than one analysis window")
        self.prime(wave[:prime_len])
        hop = self.cfg.hop
        n_chunks = (wave.size - prime_len) // hop
        out = np.empty(n_chunks * hop)
        for k in range(n_chunks):
            start = prime_len + k * hop
            out[k * hop:(k + 1) * hop] = self.process_frame(wave[start:start + hop])
        return out


def benchmark_rtf(model_cfg: ModelConfig = ModelConfig(), duration: float = 3.0,
                  runs: int = 5, mode: str = "stream", seed: int = 0,
                  stft_cfg: StftConfig = StftConfig()) -> dict:
    """Median real-time factor (processing time / audio duration), single thread.

    mode "stream" drives the frame-by-frame engine; "offline" times the
    whole-utterance pipeline. BLAS pools are pinned to one thread for the
    measurement.
    """
    import threadpoolctl

    if runs < 1:
        raise InvalidInput("need at least one run")
    model = MPCRN(model_cfg, seed=seed)
    rng = np.random.default_rng(seed)
    wave = 0.1 * rng.standard_normal(int(duration * 16000))
    rtfs = []
    with threadpoolctl.threadpool_limits(limits=1):
        for _ in range(runs):
            if mode == "stream":
                engine = StreamEngine(model, stft_cfg)
                t0 = time.perf_counter()
                engine.process(wave)
                dt = time.perf_counter() - t0
            elif mode == "offline":
                t0 = time.perf_counter()
                enhance_waveform(model, wave, stft_cfg)
                dt = time.perf_counter() - t0
            else:
                raise InvalidInput(f"unknown benchmark mode {mode!r}")
            rtfs.append(dt / duration)
    return {
        "mode": mode,
        "duration_s": duration,
        "runs": rtfs,
        "rtf_median": statistics.median(rtfs),
    }
