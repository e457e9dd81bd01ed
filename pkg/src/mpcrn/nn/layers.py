"""Neural primitives: causal 2-D conv / transposed conv, norms, activations.

Feature tensors are rank-4 float arrays indexed (batch, channel, time,
frequency). Convolutions are causal in time: the kernel covers the current
and previous frames only (left-only zero padding of kernel_t - 1 = 1 frame),
so output frame t never sees input frames > t.

Every layer implements forward(..., record=True) and backward(grad);
backward without a recorded forward raises UsageError. Parameter gradients
accumulate into the ParamStore slots.
"""

import numpy as np

from ..errors import ShapeError, UsageError
from .params import ParamStore


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (exp of a non-positive argument)."""
    s = 1.0 / (1.0 + np.exp(-np.abs(x)))
    return np.where(x >= 0, s, 1.0 - s)


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int, dtype):
    """Kaiming-style uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Minimal base: cache management shared by all layers."""

    def __init__(self):
        self._cache = None

    def _take_cache(self):
        if self._cache is None:
            raise UsageError(
                f"{type(self).__name__}.backward called without a recorded forward"
            )
        cache, self._cache = self._cache, None
        return cache


class Conv2d(Layer):
    """Causal strided 2-D convolution.

    kernel_t covers (previous, current) frames; frequency is padded
    symmetrically by pad_f and strided by stride_f.
    """

    def __init__(self, store: ParamStore, name: str, rng, in_ch: int, out_ch: int,
                 kernel=(2, 5), stride_f: int = 2, pad_f: int = 2):
        super().__init__()
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kt, self.kf = kernel
        self.stride_f = stride_f
        self.pad_f = pad_f
        fan_in = in_ch * self.kt * self.kf
        self.w = store.register(
            f"{name}.w", uniform_fan_in(rng, (out_ch, in_ch, self.kt, self.kf),
                                        fan_in, store.dtype))
        self.b = store.register(f"{name}.b", np.zeros(out_ch, dtype=store.dtype))

    def out_freq(self, f_in: int) -> int:
        return (f_in + 2 * self.pad_f - self.kf) // self.stride_f + 1

    def _im2col(self, xp: np.ndarray, t_out: int, f_out: int):
        # xp: padded input (B, C, T + kt - 1, F + 2 pad_f)
        win = np.lib.stride_tricks.sliding_window_view(xp, (self.kt, self.kf),
                                                       axis=(2, 3))
        win = win[:, :, :t_out, :: self.stride_f]  # (B, C, T, F_out, kt, kf)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(-1, self.in_ch * self.kt * self.kf)
        return np.ascontiguousarray(cols)

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(
                f"conv expects (B, {self.in_ch}, T, F), got {x.shape}")
        b, _, t, f = x.shape
        f_out = self.out_freq(f)
        xp = np.pad(x, ((0, 0), (0, 0), (self.kt - 1, 0), (self.pad_f, self.pad_f)))
        cols = self._im2col(xp, t, f_out)
        w2d = self.w.value.reshape(self.out_ch, -1)
        y = cols @ w2d.T + self.b.value
        y = y.reshape(b, t, f_out, self.out_ch).transpose(0, 3, 1, 2)
        if record:
            self._cache = (cols, x.shape, f_out)
        return np.ascontiguousarray(y)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cols, x_shape, f_out = self._take_cache()
        b, c, t, f = x_shape
        dy2d = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(-1, self.out_ch)
        self.b.grad += dy2d.sum(axis=0)
        self.w.grad += (dy2d.T @ cols).reshape(self.w.value.shape)
        dcols = (dy2d @ self.w.value.reshape(self.out_ch, -1))
        dcols = dcols.reshape(b, t, f_out, c, self.kt, self.kf).transpose(4, 5, 0, 3, 1, 2)
        dxp = np.zeros((b, c, t + self.kt - 1, f + 2 * self.pad_f), dtype=dy.dtype)
        for dt in range(self.kt):
            for df in range(self.kf):
                dxp[:, :, dt:dt + t, df:df + self.stride_f * f_out:self.stride_f] += \
                    dcols[dt, df]
        return dxp[:, :, self.kt - 1:, self.pad_f:self.pad_f + f]

    def step(self, x_t: np.ndarray, history: np.ndarray):
        """Single-frame inference. x_t: (B, C, F); history: (B, C, kt-1, F)."""
        b, _, f = x_t.shape
        f_out = self.out_freq(f)
        xp = np.zeros((b, self.in_ch, self.kt, f + 2 * self.pad_f), dtype=x_t.dtype)
        if self.kt > 1:
            xp[:, :, :-1, self.pad_f:self.pad_f + f] = history
        xp[:, :, -1, self.pad_f:self.pad_f + f] = x_t
        win = np.lib.stride_tricks.sliding_window_view(xp, self.kf, axis=3)
        win = win[:, :, :, :: self.stride_f]          # (B, C, kt, F_out, kf)
        cols = win.transpose(0, 3, 1, 2, 4).reshape(b * f_out, -1)
        y = cols @ self.w.value.reshape(self.out_ch, -1).T + self.b.value
        y = y.reshape(b, f_out, self.out_ch).transpose(0, 2, 1)
        return np.ascontiguousarray(y), xp[:, :, 1:, self.pad_f:self.pad_f + f]


class ConvTranspose2d(Layer):
    """Causal strided 2-D transposed convolution, the frequency mirror of Conv2d.

    The full transposed output is trimmed: pad_f bins off each frequency edge
    and the trailing (future) frame off the time axis, so
    out_freq(conv.out_freq(f)) == f and causality is preserved.
    """

    def __init__(self, store: ParamStore, name: str, rng, in_ch: int, out_ch: int,
                 kernel=(2, 5), stride_f: int = 2, pad_f: int = 2):
        super().__init__()
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kt, self.kf = kernel
        self.stride_f = stride_f
        self.pad_f = pad_f
        fan_in = in_ch * self.kt * self.kf
        self.w = store.register(
            f"{name}.w", uniform_fan_in(rng, (in_ch, out_ch, self.kt, self.kf),
                                        fan_in, store.dtype))
        self.b = store.register(f"{name}.b", np.zeros(out_ch, dtype=store.dtype))

    def out_freq(self, f_in: int) -> int:
        return (f_in - 1) * self.stride_f + self.kf - 2 * self.pad_f

    def _full_freq(self, f_in: int) -> int:
        return (f_in - 1) * self.stride_f + self.kf

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(
                f"tconv expects (B, {self.in_ch}, T, F), got {x.shape}")
        b, _, t, f = x.shape
        x2d = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(-1, self.in_ch)
        cols = x2d @ self.w.value.reshape(self.in_ch, -1)
        cols = cols.reshape(b, t, f, self.out_ch, self.kt, self.kf).transpose(4, 5, 0, 3, 1, 2)
        y_full = np.zeros((b, self.out_ch, t + self.kt - 1, self._full_freq(f)),
                          dtype=x.dtype)
        for dt in range(self.kt):
            for df in range(self.kf):
                y_full[:, :, dt:dt + t, df:df + self.stride_f * f:self.stride_f] += \
                    cols[dt, df]
        y = y_full[:, :, :t, self.pad_f:self.pad_f + self.out_freq(f)]
        y = y + self.b.value[:, None, None]
        if record:
            self._cache = (x2d, x.shape)
        return np.ascontiguousarray(y)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x2d, x_shape = self._take_cache()
        b, c, t, f = x_shape
        self.b.grad += dy.sum(axis=(0, 2, 3))
        dy_full = np.zeros((b, self.out_ch, t + self.kt - 1, self._full_freq(f)),
                           dtype=dy.dtype)
        dy_full[:, :, :t, self.pad_f:self.pad_f + dy.shape[3]] = dy
        taps = [
            dy_full[:, :, dt:dt + t, df:df + self.stride_f * f:self.stride_f]
            for dt in range(self.kt) for df in range(self.kf)
        ]
        g = np.stack(taps, axis=-1)                     # (B, out, T, F, kt*kf)
        g = np.ascontiguousarray(g.transpose(0, 2, 3, 1, 4)).reshape(
            b * t * f, self.out_ch * self.kt * self.kf)
        self.w.grad += (x2d.T @ g).reshape(self.w.value.shape)
        dx = g @ self.w.value.reshape(self.in_ch, -1).T
        return np.ascontiguousarray(dx.reshape(b, t, f, c).transpose(0, 3, 1, 2))

    def init_pending(self, batch: int, freq: int, dtype) -> np.ndarray:
        """Zeroed stream buffer: future-tap contributions not yet emitted."""
        return np.zeros((self.kt - 1, batch, freq, self.out_ch, self.kf), dtype=dtype)

    def step(self, x_t: np.ndarray, pending: np.ndarray):
        """Single-frame inference.

        x_t: (B, C, F). `pending` holds this layer's contributions to future
        output frames, from init_pending(); tap kernels of the current input
        beyond dt=0 are pushed onto it.
        """
        b, _, f = x_t.shape
        x2d = np.ascontiguousarray(x_t.transpose(0, 2, 1)).reshape(b * f, self.in_ch)
        cols = (x2d @ self.w.value.reshape(self.in_ch, -1)).reshape(
            b, f, self.out_ch, self.kt, self.kf)
        now = cols[:, :, :, 0, :] + pending[0]
        new_pending = np.empty_like(pending)
        for j in range(self.kt - 1):
            new_pending[j] = cols[:, :, :, j + 1, :]
            if j + 1 < self.kt - 1:
                new_pending[j] += pending[j + 1]
        now = now.transpose(0, 2, 1, 3)               # (B, out, F, kf)
        y_full = np.zeros((b, self.out_ch, self._full_freq(f)), dtype=x_t.dtype)
        for df in range(self.kf):
            y_full[:, :, df:df + self.stride_f * f:self.stride_f] += now[:, :, :, df]
        y = y_full[:, :, self.pad_f:self.pad_f + self.out_freq(f)]
        y = y + self.b.value[:, None]
        return y, new_pending


class BatchNorm2d(Layer):
    """Per-channel batch normalization over (batch, time, frequency).

    Train mode normalizes with batch statistics and updates the running
    buffers; eval mode (and streaming) is a fixed affine map using them.
    """

    def __init__(self, store: ParamStore, name: str, channels: int,
                 momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = store.register(f"{name}.gamma", np.ones(channels, dtype=store.dtype))
        self.beta = store.register(f"{name}.beta", np.zeros(channels, dtype=store.dtype))
        self.run_mean = store.register(f"{name}.run_mean",
                                       np.zeros(channels, dtype=store.dtype),
                                       trainable=False)
        self.run_var = store.register(f"{name}.run_var",
                                      np.ones(channels, dtype=store.dtype),
                                      trainable=False)

    def forward(self, x: np.ndarray, train: bool, record: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm expects {self.channels} channels, got {x.shape}")
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.run_mean.value[...] = ((1 - self.momentum) * self.run_mean.value
                                        + self.momentum * mean)
            self.run_var.value[...] = ((1 - self.momentum) * self.run_var.value
                                       + self.momentum * var)
        else:
            mean = self.run_mean.value
            var = self.run_var.value
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
        y = self.gamma.value[:, None, None] * xhat + self.beta.value[:, None, None]
        if record:
            self._cache = (xhat, inv_std, train)
        return y

    def step(self, x_t: np.ndarray) -> np.ndarray:
        """Running-statistics affine map for one frame: x_t is (B, C, F)."""
        inv_std = 1.0 / np.sqrt(self.run_var.value + self.eps)
        scale = self.gamma.value * inv_std
        shift = self.beta.value - self.run_mean.value * scale
        return x_t * scale[:, None] + shift[:, None]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std, train = self._take_cache()
        self.beta.grad += dy.sum(axis=(0, 2, 3))
        self.gamma.grad += (dy * xhat).sum(axis=(0, 2, 3))
        dxhat = dy * self.gamma.value[:, None, None]
        if not train:
            return dxhat * inv_std[:, None, None]
        n = dy.shape[0] * dy.shape[2] * dy.shape[3]
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return (inv_std[:, None, None] / n) * (
            n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)


class LayerNorm(Layer):
    """Normalization over the trailing feature axis."""

    def __init__(self, store: ParamStore, name: str, width: int, eps: float = 1e-5):
        super().__init__()
        self.width = width
        self.eps = eps
        self.gamma = store.register(f"{name}.gamma", np.ones(width, dtype=store.dtype))
        self.beta = store.register(f"{name}.beta", np.zeros(width, dtype=store.dtype))

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        if x.shape[-1] != self.width:
            raise ShapeError(f"layernorm expects width {self.width}, got {x.shape}")
        mean = x.mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + self.eps)
        xhat = (x - mean) * inv_std
        if record:
            self._cache = (xhat, inv_std)
        return self.gamma.value * xhat + self.beta.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std = self._take_cache()
        axes = tuple(range(dy.ndim - 1))
        self.beta.grad += dy.sum(axis=axes)
        self.gamma.grad += (dy * xhat).sum(axis=axes)
        dxhat = dy * self.gamma.value
        m = dxhat.mean(axis=-1, keepdims=True)
        mx = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv_std * (dxhat - m - xhat * mx)


class PReLU(Layer):
    """PReLU with one learned slope per channel along a chosen axis."""

    def __init__(self, store: ParamStore, name: str, channels: int, axis: int = 1,
                 init_slope: float = 0.25):
        super().__init__()
        self.channels = channels
        self.axis = axis
        self.slope = store.register(
            f"{name}.slope", np.full(channels, init_slope, dtype=store.dtype))

    def _bshape(self, ndim: int):
        shape = [1] * ndim
        shape[self.axis] = self.channels
        return shape

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        if x.shape[self.axis] != self.channels:
            raise ShapeError(
                f"prelu expects {self.channels} channels on axis {self.axis}, got {x.shape}")
        a = self.slope.value.reshape(self._bshape(x.ndim))
        y = np.where(x >= 0, x, a * x)
        if record:
            self._cache = x
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._take_cache()
        a = self.slope.value.reshape(self._bshape(x.ndim))
        axes = tuple(i for i in range(x.ndim) if i != self.axis % x.ndim)
        self.slope.grad += (dy * np.minimum(x, 0)).sum(axis=axes)
        return dy * np.where(x >= 0, 1.0, a)


class Sigmoid(Layer):
    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        y = sigmoid(x)
        if record:
            self._cache = y
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        y = self._take_cache()
        return dy * y * (1.0 - y)


class Tanh(Layer):
    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        y = np.tanh(x)
        if record:
            self._cache = y
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        y = self._take_cache()
        return dy * (1.0 - y * y)
