"""Full enhancement network: encoder, parallel sequence modeling, decoder, heads.

Layout of the forward graph (feature tensors are (batch, channel, time, freq)):

    input (B, 2, T, F)  -- real/imag planes of the noisy spectrogram
      -> 5 x [causal Conv2d -> BatchNorm2d -> PReLU]        (freq halves each)
      -> 3 x PSM block                                      (shape preserved)
      -> 4 x [causal ConvTranspose2d -> BatchNorm2d -> PReLU]
      -> 1 x causal ConvTranspose2d (3 output channels)
      -> channel 0 -> sigmoid  = magnitude mask  in (0, 1)
         channels 1,2 -> tanh  = phase-mask cos/sin estimates in (-1, 1)

Each PSM block runs a GRU over time (per frequency lane) and a BiGRU over
frequency (per frame) in parallel, each followed by layer norm and PReLU,
then fuses the summed branches through a 1x1 conv + BN + PReLU back to the
input channel count. Everything is causal in time, so the whole network can
run frame by frame with carried state.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParseError, ShapeError
from .nn.layers import BatchNorm2d, Conv2d, ConvTranspose2d, LayerNorm, PReLU, Sigmoid, Tanh
from .nn.params import ParamStore
from .nn.rnn import GRU, BiGRU


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. kernel and stride are (freq, time)."""

    enc_channels: tuple = (16, 32, 64, 128, 256)
    dec_channels: tuple = (128, 64, 32, 16, 3)
    psm_hidden: tuple = (128, 64, 32)
    input_channels: int = 2
    kernel: tuple = (5, 2)
    stride: tuple = (2, 1)

    def __post_init__(self):
        if len(self.enc_channels) != len(self.dec_channels):
            raise ShapeError("encoder and decoder must have the same depth")
        if self.dec_channels[-1] != 3:
            raise ShapeError("last decoder block must emit 3 mask channels")
        if self.stride[1] != 1:
            raise ShapeError("time stride must be 1 (causal streaming)")
        if not self.psm_hidden:
            raise ShapeError("need at least one PSM block")

    @classmethod
    def with_encoder(cls, enc_channels, psm_hidden, **kw):
        """Mirror-derived decoder: reversed encoder channels plus the 3-channel head."""
        dec = tuple(reversed(enc_channels[:-1])) + (3,)
        return cls(enc_channels=tuple(enc_channels), dec_channels=dec,
                   psm_hidden=tuple(psm_hidden), **kw)

    def to_text(self) -> str:
        """Canonical key=value block (embedded in checkpoint headers)."""
        lines = [
            "enc_channels=" + ",".join(str(c) for c in self.enc_channels),
            "dec_channels=" + ",".join(str(c) for c in self.dec_channels),
            "psm_hidden=" + ",".join(str(c) for c in self.psm_hidden),
            f"input_channels={self.input_channels}",
            "kernel=" + ",".join(str(c) for c in self.kernel),
            "stride=" + ",".join(str(c) for c in self.stride),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"bad config line: {raw!r}")
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
        try:
            return cls(
                enc_channels=tuple(int(v) for v in kv["enc_channels"].split(",")),
                dec_channels=tuple(int(v) for v in kv["dec_channels"].split(",")),
                psm_hidden=tuple(int(v) for v in kv["psm_hidden"].split(",")),
                input_channels=int(kv["input_channels"]),
                kernel=tuple(int(v) for v in kv["kernel"].split(",")),
                stride=tuple(int(v) for v in kv["stride"].split(",")),
            )
        except KeyError as e:
            raise ParseError(f"config missing key {e.args[0]!r}") from None


class MaskTriple(NamedTuple):
    """Network output: magnitude mask plus phase-mask cos/sin planes, (B, T, F)."""

    mag: np.ndarray
    real: np.ndarray
    imag: np.ndarray


def _clip_open(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Clamp to the largest representable open interval (lo, hi)."""
    dt = x.dtype.type
    return np.clip(x, np.nextafter(dt(lo), dt(0)), np.nextafter(dt(hi), dt(0)))


class EncBlock:
    def __init__(self, store, name, rng, in_ch, out_ch, kernel_tf, stride_f, pad_f):
        self.conv = Conv2d(store, f"{name}.conv", rng, in_ch, out_ch,
                           kernel=kernel_tf, stride_f=stride_f, pad_f=pad_f)
        self.bn = BatchNorm2d(store, f"{name}.bn", out_ch)
        self.act = PReLU(store, f"{name}.prelu", out_ch, axis=1)

    def forward(self, x, train, record=False):
        return self.act.forward(
            self.bn.forward(self.conv.forward(x, record), train, record), record)

    def backward(self, dy):
        return self.conv.backward(self.bn.backward(self.act.backward(dy)))

    def step(self, x_t, hist):
        y, hist = self.conv.step(x_t, hist)
        return self.act.forward(self.bn.step(y)), hist


class DecBlock:
    """Transposed-conv block; the final block skips BN/PReLU (mask head follows)."""

    def __init__(self, store, name, rng, in_ch, out_ch, kernel_tf, stride_f, pad_f,
                 final: bool):
        self.tconv = ConvTranspose2d(store, f"{name}.tconv", rng, in_ch, out_ch,
                                     kernel=kernel_tf, stride_f=stride_f, pad_f=pad_f)
        self.final = final
        if not final:
            self.bn = BatchNorm2d(store, f"{name}.bn", out_ch)
            self.act = PReLU(store, f"{name}.prelu", out_ch, axis=1)

    def forward(self, x, train, record=False):
        y = self.tconv.forward(x, record)
        if self.final:
            return y
        return self.act.forward(self.bn.forward(y, train, record), record)

    def backward(self, dy):
        if not self.final:
            dy = self.bn.backward(self.act.backward(dy))
        return self.tconv.backward(dy)

    def step(self, x_t, pending):
        y, pending = self.tconv.step(x_t, pending)
        if self.final:
            return y, pending
        return self.act.forward(self.bn.step(y)), pending


class PSMBlock:
    """Parallel sequence modeling: time GRU + frequency BiGRU, additive fusion."""

    def __init__(self, store, name, rng, channels: int, hidden: int):
        self.channels = channels
        self.hidden = hidden
        self.gru = GRU(store, f"{name}.time_gru", rng, channels, hidden)
        self.ln_t = LayerNorm(store, f"{name}.time_ln", hidden)
        self.act_t = PReLU(store, f"{name}.time_prelu", hidden, axis=-1)
        self.bigru = BiGRU(store, f"{name}.freq_bigru", rng, channels, hidden)
        self.ln_s = LayerNorm(store, f"{name}.freq_ln", hidden)
        self.act_s = PReLU(store, f"{name}.freq_prelu", hidden, axis=-1)
        self.fuse = Conv2d(store, f"{name}.fuse.conv", rng, hidden, channels,
                           kernel=(1, 1), stride_f=1, pad_f=0)
        self.bn = BatchNorm2d(store, f"{name}.fuse.bn", channels)
        self.act_f = PReLU(store, f"{name}.fuse.prelu", channels, axis=1)

    def forward(self, e, train, record=False):
        if e.shape[1] != self.channels:
            raise ShapeError(f"psm expects {self.channels} channels, got {e.shape}")
        b, c, t, f = e.shape
        # Temporal branch: frequency lanes, time steps, channel features.
        xt = np.ascontiguousarray(e.transpose(0, 3, 2, 1)).reshape(b * f, t, c)
        yt, _ = self.gru.forward(xt, record=record)
        yt = self.act_t.forward(self.ln_t.forward(yt, record), record)
        yt = yt.reshape(b, f, t, self.hidden).transpose(0, 3, 2, 1)
        # Spectral branch: frame lanes, frequency steps, channel features.
        xs = np.ascontiguousarray(e.transpose(0, 2, 3, 1)).reshape(b * t, f, c)
        ys = self.bigru.forward(xs, record=record)
        ys = self.act_s.forward(self.ln_s.forward(ys, record), record)
        ys = ys.reshape(b, t, f, self.hidden).transpose(0, 3, 1, 2)
        fused = np.ascontiguousarray(yt + ys)
        out = self.fuse.forward(fused, record)
        out = self.act_f.forward(self.bn.forward(out, train, record), record)
        if record:
            self._shape = (b, c, t, f)
        return out

    def backward(self, dy):
        b, c, t, f = self._shape
        d_fused = self.fuse.backward(self.bn.backward(self.act_f.backward(dy)))
        # Temporal branch.
        dyt = np.ascontiguousarray(d_fused.transpose(0, 3, 2, 1)).reshape(
            b * f, t, self.hidden)
        dyt = self.ln_t.backward(self.act_t.backward(dyt))
        dxt, _ = self.gru.backward(dyt)
        de_t = dxt.reshape(b, f, t, c).transpose(0, 3, 2, 1)
        # Spectral branch.
        dys = np.ascontiguousarray(d_fused.transpose(0, 2, 3, 1)).reshape(
            b * t, f, self.hidden)
        dys = self.ln_s.backward(self.act_s.backward(dys))
        dxs = self.bigru.backward(dys)
        de_s = dxs.reshape(b, t, f, c).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(de_t + de_s)

    def step(self, e_t, h, fuse_hist):
        """One frame. e_t: (B, C, F); h: carried GRU state (B*F, H)."""
        b, c, f = e_t.shape
        lanes = np.ascontiguousarray(e_t.transpose(0, 2, 1)).reshape(b * f, c)
        h = self.gru.step(lanes, h)
        yt = self.act_t.forward(self.ln_t.forward(h))
        yt = yt.reshape(b, f, self.hidden).transpose(0, 2, 1)
        xs = np.ascontiguousarray(e_t.transpose(0, 2, 1)).reshape(b, f, c)
        ys = self.act_s.forward(self.ln_s.forward(self.bigru.forward(xs)))
        ys = ys.transpose(0, 2, 1)
        fused = yt + ys
        out, fuse_hist = self.fuse.step(fused, fuse_hist)
        return self.act_f.forward(self.bn.step(out)), h, fuse_hist


class StreamState(NamedTuple):
    """Per-stream recurrent and convolutional history for frame-wise inference."""

    enc_hists: list
    psm_h: list
    psm_fuse_hists: list
    dec_hists: list


class MPCRN:
    """The assembled network plus its parameter store."""

    def __init__(self, cfg: ModelConfig = ModelConfig(), seed: int = 0,
                 dtype=np.float32):
        self.cfg = cfg
        self.store = ParamStore(dtype)
        rng = np.random.default_rng(seed)
        kt, kf = cfg.kernel[1], cfg.kernel[0]
        sf = cfg.stride[0]
        pad_f = (kf - 1) // 2
        self.enc = []
        in_ch = cfg.input_channels
        for i, out_ch in enumerate(cfg.enc_channels):
            self.enc.append(EncBlock(self.store, f"enc{i}", rng, in_ch, out_ch,
                                     (kt, kf), sf, pad_f))
            in_ch = out_ch
        self.psm = [
            PSMBlock(self.store, f"psm{i}", rng, in_ch, h)
            for i, h in enumerate(cfg.psm_hidden)
        ]
        self.dec = []
        for i, out_ch in enumerate(cfg.dec_channels):
            final = i == len(cfg.dec_channels) - 1
            self.dec.append(DecBlock(self.store, f"dec{i}", rng, in_ch, out_ch,
                                     (kt, kf), sf, pad_f, final))
            in_ch = out_ch
        # Bias the phase-cos channel positive so the predicted (cos, sin)
        # pair starts near (1, 0) -- the identity rotation -- instead of at
        # the origin, where the unit-modulus normalization is singular.
        self.dec[-1].tconv.b.value[1] = 0.5
        self.head_sig = Sigmoid()
        self.head_tanh = Tanh()

    # -- shape bookkeeping ----------------------------------------------

    def freq_chain(self, freq: int) -> list:
        """Frequency sizes through the encoder, last entry = bottleneck width."""
        sizes = [freq]
        for i, blk in enumerate(self.enc):
            nxt = blk.conv.out_freq(sizes[-1])
            if nxt < 1:
                raise ShapeError(f"encoder[{i}]: frequency size collapsed at {sizes[-1]}")
            sizes.append(nxt)
        return sizes

    def check_freq(self, freq: int):
        """The decoder must invert the encoder's frequency chain exactly."""
        sizes = self.freq_chain(freq)
        back = sizes[-1]
        for i, blk in enumerate(self.dec):
            back = blk.tconv.out_freq(back)
            want = sizes[-(i + 2)]
            if back != want:
                raise ShapeError(
                    f"decoder[{i}]: produces {back} frequency bins, expected {want}; "
                    f"input frequency size {freq} is not decoder-invertible")
        return sizes

    # -- offline forward / backward --------------------------------------

    def forward(self, x: np.ndarray, train: bool = False,
                record: bool = False) -> MaskTriple:
        if x.ndim != 4 or x.shape[1] != self.cfg.input_channels:
            raise ShapeError(
                f"input: expected (B, {self.cfg.input_channels}, T, F), got {x.shape}")
        self.check_freq(x.shape[3])
        y = np.ascontiguousarray(x, dtype=self.store.dtype)
        for blk in self.enc:
            y = blk.forward(y, train, record)
        for blk in self.psm:
            y = blk.forward(y, train, record)
        for blk in self.dec:
            y = blk.forward(y, train, record)
        mag = self.head_sig.forward(y[:, 0], record)
        ph = self.head_tanh.forward(y[:, 1:3], record)
        return MaskTriple(
            _clip_open(mag, 0.0, 1.0),
            _clip_open(ph[:, 0], -1.0, 1.0),
            _clip_open(ph[:, 1], -1.0, 1.0),
        )

    def backward(self, d_mag: np.ndarray, d_real: np.ndarray,
                 d_imag: np.ndarray) -> np.ndarray:
        d_out = np.empty(d_mag.shape[:1] + (3,) + d_mag.shape[1:],
                         dtype=self.store.dtype)
        d_out[:, 0] = self.head_sig.backward(d_mag.astype(self.store.dtype))
        d_out[:, 1:3] = self.head_tanh.backward(
            np.stack([d_real, d_imag], axis=1).astype(self.store.dtype))
        dy = d_out
        for blk in reversed(self.dec):
            dy = blk.backward(dy)
        for blk in reversed(self.psm):
            dy = blk.backward(dy)
        for blk in reversed(self.enc):
            dy = blk.backward(dy)
        self.store.grads_populated = True
        return dy

    # -- streaming --------------------------------------------------------

    def init_stream_state(self, freq: int, batch: int = 1) -> StreamState:
        sizes = self.check_freq(freq)
        dt = self.store.dtype
        enc_hists = []
        ch = self.cfg.input_channels
        for i, blk in enumerate(self.enc):
            enc_hists.append(np.zeros((batch, ch, blk.conv.kt - 1, sizes[i]), dtype=dt))
            ch = blk.conv.out_ch
        bottom = sizes[-1]
        psm_h = [np.zeros((batch * bottom, blk.hidden), dtype=dt) for blk in self.psm]
        fuse_hists = [
            np.zeros((batch, blk.hidden, blk.fuse.kt - 1, bottom), dtype=dt)
            for blk in self.psm
        ]
        dec_hists = []
        back = bottom
        for blk in self.dec:
            dec_hists.append(blk.tconv.init_pending(batch, back, dt))
            back = blk.tconv.out_freq(back)
        return StreamState(enc_hists, psm_h, fuse_hists, dec_hists)

    def step(self, x_t: np.ndarray, state: StreamState) -> MaskTriple:
        """Process one frame. x_t: (B, in_channels, F). Mutates `state`."""
        y = np.ascontiguousarray(x_t, dtype=self.store.dtype)
        for i, blk in enumerate(self.enc):
            y, state.enc_hists[i][...] = blk.step(y, state.enc_hists[i])
        for i, blk in enumerate(self.psm):
            y, h, fh = blk.step(y, state.psm_h[i], state.psm_fuse_hists[i])
            state.psm_h[i][...] = h
            state.psm_fuse_hists[i][...] = fh
        for i, blk in enumerate(self.dec):
            y, state.dec_hists[i][...] = blk.step(y, state.dec_hists[i])
        mag = self.head_sig.forward(y[:, 0])
        ph = self.head_tanh.forward(y[:, 1:3])
        return MaskTriple(
            _clip_open(mag, 0.0, 1.0),
            _clip_open(ph[:, 0], -1.0, 1.0),
            _clip_open(ph[:, 1], -1.0, 1.0),
        )

    # -- accounting -------------------------------------------------------

    def num_params(self) -> int:
        return self.store.num_scalars(trainable_only=True)


def count_params(cfg: ModelConfig = ModelConfig()) -> int:
    """Exact trainable scalar count for a configuration."""
    return MPCRN(cfg, seed=0).num_params()


def count_macs(cfg: ModelConfig = ModelConfig(), freq: int = 257,
               frames_per_second: float = 16000 / 128) -> float:
    """Multiply-accumulates per second of audio (conv and recurrent matmuls).

    Normalization and elementwise activations are excluded, matching the
    usual GMACs accounting for enhancement networks.
    """
    kf, kt = cfg.kernel
    sf = cfg.stride[0]
    pad_f = (kf - 1) // 2
    sizes = [freq]
    for _ in cfg.enc_channels:
        sizes.append((sizes[-1] + 2 * pad_f - kf) // sf + 1)
    per_frame = 0
    in_ch = cfg.input_channels
    for i, out_ch in enumerate(cfg.enc_channels):
        per_frame += out_ch * sizes[i + 1] * in_ch * kt * kf
        in_ch = out_ch
    bottom = sizes[-1]
    c = cfg.enc_channels[-1]
    for h in cfg.psm_hidden:
        gate = 3 * h * (c + h)
        per_frame += bottom * gate          # time GRU: one step per lane
        per_frame += 2 * bottom * gate      # freq BiGRU: both directions
        per_frame += bottom * h * c         # 1x1 fusion conv
    in_ch = c
    dec_sizes = list(reversed(sizes[:-1]))
    f_in = bottom
    for i, out_ch in enumerate(cfg.dec_channels):
        per_frame += in_ch * f_in * out_ch * kt * kf
        f_in = dec_sizes[i]
        in_ch = out_ch
    return per_frame * frames_per_second
