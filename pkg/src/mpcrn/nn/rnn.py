"""GRU and bidirectional GRU over batched lanes of sequences.

Sequences are (lanes, steps, features). The gate order in the packed weight
matrices is (reset, update, candidate):

    r_t = sigmoid(x_t W_ir + b_ir + h_prev W_hr + b_hr)
    z_t = sigmoid(x_t W_iz + b_iz + h_prev W_hz + b_hz)
    n_t = tanh(x_t W_in + b_in + r_t * (h_prev W_hn + b_hn))
    h_t = (1 - z_t) * n_t + z_t * h_prev

Incremental stepping with carried state is bit-identical to one whole-sequence
call; the bidirectional variant sums the two direction outputs so its width
stays hidden-sized.
"""

import numpy as np

from ..errors import ShapeError, UsageError
from .layers import sigmoid, uniform_fan_in
from .params import ParamStore


class GRU:
    def __init__(self, store: ParamStore, name: str, rng,
                 input_size: int, hidden: int):
        self.input_size = input_size
        self.hidden = hidden
        h = hidden
        self.w_ih = store.register(
            f"{name}.w_ih", uniform_fan_in(rng, (input_size, 3 * h), h, store.dtype))
        self.w_hh = store.register(
            f"{name}.w_hh", uniform_fan_in(rng, (h, 3 * h), h, store.dtype))
        self.b_ih = store.register(f"{name}.b_ih", np.zeros(3 * h, dtype=store.dtype))
        self.b_hh = store.register(f"{name}.b_hh", np.zeros(3 * h, dtype=store.dtype))
        self._cache = None

    def _check(self, x):
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeError(
                f"gru expects (lanes, steps, {self.input_size}), got {x.shape}")

    def init_state(self, lanes: int, dtype=None) -> np.ndarray:
        return np.zeros((lanes, self.hidden), dtype=dtype or self.w_ih.value.dtype)

    def forward(self, x: np.ndarray, h0: np.ndarray | None = None,
                record: bool = False):
        """Run the full recurrence. Returns (outputs, final state)."""
        self._check(x)
        n, t, _ = x.shape
        hdim = self.hidden
        h = self.init_state(n, x.dtype) if h0 is None else h0.astype(x.dtype, copy=True)
        gi = x @ self.w_ih.value + self.b_ih.value          # (N, T, 3H)
        y = np.empty((n, t, hdim), dtype=x.dtype)
        if record:
            rs = np.empty((n, t, hdim), dtype=x.dtype)
            zs = np.empty_like(rs)
            ns = np.empty_like(rs)
            sns = np.empty_like(rs)
            hprevs = np.empty_like(rs)
        for i in range(t):
            gh = h @ self.w_hh.value
            gh += self.b_hh.value
            rz = sigmoid(gi[:, i, :2 * hdim] + gh[:, :2 * hdim])
            r = rz[:, :hdim]
            z = rz[:, hdim:]
            sn = gh[:, 2 * hdim:]
            cand = np.tanh(gi[:, i, 2 * hdim:] + r * sn)
            if record:
                rs[:, i] = r
                zs[:, i] = z
                ns[:, i] = cand
                sns[:, i] = sn
                hprevs[:, i] = h
            h = cand + z * (h - cand)
            y[:, i] = h
        if record:
            self._cache = (x, rs, zs, ns, sns, hprevs)
        return y, h

    def step(self, x_t: np.ndarray, h: np.ndarray) -> np.ndarray:
        """One recurrence step (inference only). x_t: (lanes, C); h: (lanes, H).

        Arithmetic matches forward() exactly, so carried-state stepping is
        bit-identical to a whole-sequence call.
        """
        hdim = self.hidden
        gi = x_t @ self.w_ih.value + self.b_ih.value
        gh = h @ self.w_hh.value
        gh += self.b_hh.value
        rz = sigmoid(gi[:, :2 * hdim] + gh[:, :2 * hdim])
        r = rz[:, :hdim]
        z = rz[:, hdim:]
        cand = np.tanh(gi[:, 2 * hdim:] + r * gh[:, 2 * hdim:])
        return cand + z * (h - cand)

    def backward(self, dy: np.ndarray, dh_last: np.ndarray | None = None):
        """Backprop through time. Returns (dx, dh0)."""
        if self._cache is None:
            raise UsageError("GRU.backward called without a recorded forward")
        x, rs, zs, ns, sns, hprevs = self._cache
        self._cache = None
        n, t, hdim = dy.shape
        dgi = np.empty((n, t, 3 * hdim), dtype=dy.dtype)
        dgh = np.empty_like(dgi)
        dh = np.zeros((n, hdim), dtype=dy.dtype) if dh_last is None else dh_last.copy()
        for i in range(t - 1, -1, -1):
            dh = dh + dy[:, i]
            r, z, cand, sn, hprev = rs[:, i], zs[:, i], ns[:, i], sns[:, i], hprevs[:, i]
            dz = dh * (hprev - cand)
            dn = dh * (1.0 - z)
            dh = dh * z
            da_n = dn * (1.0 - cand * cand)
            dr = da_n * sn
            da_r = dr * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            dgi[:, i, :hdim] = da_r
            dgi[:, i, hdim:2 * hdim] = da_z
            dgi[:, i, 2 * hdim:] = da_n
            dgh[:, i, :hdim] = da_r
            dgh[:, i, hdim:2 * hdim] = da_z
            dgh[:, i, 2 * hdim:] = da_n * r
            dh = dh + dgh[:, i] @ self.w_hh.value.T
        gi2 = dgi.reshape(-1, 3 * hdim)
        gh2 = dgh.reshape(-1, 3 * hdim)
        self.w_ih.grad += x.reshape(-1, self.input_size).T @ gi2
        self.w_hh.grad += hprevs.reshape(-1, hdim).T @ gh2
        self.b_ih.grad += gi2.sum(axis=0)
        self.b_hh.grad += gh2.sum(axis=0)
        dx = dgi @ self.w_ih.value.T
        return dx, dh


class BiGRU:
    """One GRU per direction; outputs are summed elementwise.

    Summing (rather than concatenating) keeps the output width equal to the
    hidden size, so both sequence-modeling branches fuse by plain addition.
    The direction weights are stored stacked on a leading axis ([0] forward,
    [1] backward) and both recurrences run in a single loop of batched
    matmuls. The math per direction is the standard GRU recurrence above.
    """

    def __init__(self, store: ParamStore, name: str, rng,
                 input_size: int, hidden: int):
        self.input_size = input_size
        self.hidden = hidden
        h = hidden
        self.w_ih = store.register(
            f"{name}.w_ih", uniform_fan_in(rng, (2, input_size, 3 * h), h, store.dtype))
        self.w_hh = store.register(
            f"{name}.w_hh", uniform_fan_in(rng, (2, h, 3 * h), h, store.dtype))
        self.b_ih = store.register(f"{name}.b_ih", np.zeros((2, 3 * h), dtype=store.dtype))
        self.b_hh = store.register(f"{name}.b_hh", np.zeros((2, 3 * h), dtype=store.dtype))
        self._cache = None

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeError(
                f"bigru expects (lanes, steps, {self.input_size}), got {x.shape}")
        n, t, _ = x.shape
        hdim = self.hidden
        xs = np.stack([x, x[:, ::-1]])                      # (2, N, T, C)
        gi = (xs.reshape(2, n * t, -1) @ self.w_ih.value).reshape(2, n, t, 3 * hdim)
        gi += self.b_ih.value[:, None, None]
        h = np.zeros((2, n, hdim), dtype=x.dtype)
        y = np.empty((2, n, t, hdim), dtype=x.dtype)
        if record:
            rs = np.empty((2, n, t, hdim), dtype=x.dtype)
            zs = np.empty_like(rs)
            ns = np.empty_like(rs)
            sns = np.empty_like(rs)
            hprevs = np.empty_like(rs)
        for i in range(t):
            gh = np.matmul(h, self.w_hh.value)
            gh += self.b_hh.value[:, None]
            rz = sigmoid(gi[:, :, i, :2 * hdim] + gh[:, :, :2 * hdim])
            r = rz[:, :, :hdim]
            z = rz[:, :, hdim:]
            sn = gh[:, :, 2 * hdim:]
            cand = np.tanh(gi[:, :, i, 2 * hdim:] + r * sn)
            if record:
                rs[:, :, i] = r
                zs[:, :, i] = z
                ns[:, :, i] = cand
                sns[:, :, i] = sn
                hprevs[:, :, i] = h
            h = cand + z * (h - cand)
            y[:, :, i] = h
        if record:
            self._cache = (xs, rs, zs, ns, sns, hprevs)
        return y[0] + y[1][:, ::-1]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise UsageError("BiGRU.backward called without a recorded forward")
        xs, rs, zs, ns, sns, hprevs = self._cache
        self._cache = None
        n, t, hdim = dy.shape
        dys = np.stack([dy, dy[:, ::-1]])
        dgi = np.empty((2, n, t, 3 * hdim), dtype=dy.dtype)
        dgh = np.empty_like(dgi)
        dh = np.zeros((2, n, hdim), dtype=dy.dtype)
        for i in range(t - 1, -1, -1):
            dh = dh + dys[:, :, i]
            r, z, cand, sn = rs[:, :, i], zs[:, :, i], ns[:, :, i], sns[:, :, i]
            dz = dh * (hprevs[:, :, i] - cand)
            dn = dh * (1.0 - z)
            dh = dh * z
            da_n = dn * (1.0 - cand * cand)
            dr = da_n * sn
            dgi[:, :, i, :hdim] = dr * r * (1.0 - r)
            dgi[:, :, i, hdim:2 * hdim] = dz * z * (1.0 - z)
            dgi[:, :, i, 2 * hdim:] = da_n
            dgh[:, :, i, :2 * hdim] = dgi[:, :, i, :2 * hdim]
            dgh[:, :, i, 2 * hdim:] = da_n * r
            dh = dh + np.matmul(dgh[:, :, i], self.w_hh.value.transpose(0, 2, 1))
        gi2 = dgi.reshape(2, n * t, 3 * hdim)
        gh2 = dgh.reshape(2, n * t, 3 * hdim)
        x2 = xs.reshape(2, n * t, self.input_size)
        hp2 = hprevs.reshape(2, n * t, hdim)
        self.w_ih.grad += np.matmul(x2.transpose(0, 2, 1), gi2)
        self.w_hh.grad += np.matmul(hp2.transpose(0, 2, 1), gh2)
        self.b_ih.grad += gi2.sum(axis=1)
        self.b_hh.grad += gh2.sum(axis=1)
        dx = (gi2 @ self.w_ih.value.transpose(0, 2, 1)).reshape(2, n, t, -1)
        return dx[0] + dx[1][:, ::-1]
