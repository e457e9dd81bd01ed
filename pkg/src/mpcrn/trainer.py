"""Desk-scale signal-approximation training: RMSprop, plateau decay, mixtures.

One step: STFT both waveforms, run the network on the noisy spectrum in
train mode, reconstruct the enhanced spectrum with the selected mode,
evaluate the combined spectral loss against the clean spectrum, backprop,
and apply RMSprop. Everything is deterministic under the config seed.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .data import SynthMixSpec, synth_batch
from .dsp import StftConfig, stft
from .errors import InvalidInput, NumericalError, UsageError
from .loss import LossWeights, loss_total_grad
from .model import MPCRN, MaskTriple, ModelConfig
from .nn.params import ParamStore
from .reconstruction import (reconstruct_cartesian, reconstruct_cartesian_backward,
                             reconstruct_polar, reconstruct_polar_backward)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-8
    batch_size: int = 16
    epochs: int = 100
    steps_per_epoch: int = 8
    plateau_patience: int = 6
    lr_decay: float = 0.5
    chunk_seconds: float = 3.0
    seed: int = 0
    val_count: int = 8

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidInput("lr must be positive")
        if not 0.0 < self.lr_decay < 1.0:
            raise InvalidInput("lr_decay must lie in (0, 1)")
        if self.plateau_patience < 1:
            raise InvalidInput("plateau_patience must be >= 1")
        if self.batch_size < 1 or self.steps_per_epoch < 1:
            raise InvalidInput("batch_size and steps_per_epoch must be >= 1")


class RMSprop:
    """v <- a v + (1 - a) g^2;  theta <- theta - lr g / (sqrt(v) + eps)."""

    def __init__(self, store: ParamStore, lr: float = 2e-4, alpha: float = 0.99,
                 eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.alpha = alpha
        self.eps = eps
        self.v = {p.name: np.zeros_like(p.value) for p in store.trainable()}

    def step(self, lr: float | None = None):
        if not self.store.grads_populated:
            raise UsageError("rmsprop step before any backward pass")
        lr = self.lr if lr is None else lr
        for p in self.store.trainable():
            v = self.v[p.name]
            v *= self.alpha
            v += (1.0 - self.alpha) * p.grad * p.grad
            p.value -= lr * p.grad / (np.sqrt(v) + self.eps)


class PlateauScheduler:
    """Halve the rate after `patience` consecutive epochs without a new best."""

    def __init__(self, lr: float, patience: int = 6, factor: float = 0.5):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.bad_epochs = 0

    def update(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


def _crop_pair(noisy: np.ndarray, clean: np.ndarray, n: int,
               rng: np.random.Generator):
    """Random crop applied at the same offset to both signals."""
    if noisy.size <= n:
        return noisy, clean
    start = int(rng.integers(noisy.size - n + 1))
    return noisy[start:start + n], clean[start:start + n]


def _batch_spectra(batch, stft_cfg: StftConfig, cdtype):
    noisy = np.stack([stft(n, stft_cfg) for n, _ in batch]).astype(cdtype)
    clean = np.stack([stft(c, stft_cfg) for _, c in batch]).astype(cdtype)
    return noisy, clean


def _forward_loss(model: MPCRN, noisy, clean, recon: str, weights: LossWeights,
                  train: bool, record: bool):
    """Shared forward path; returns (loss, masks, s_hat, recon_cache, ds)."""
    x_in = np.stack([noisy.real, noisy.imag], axis=1).astype(model.store.dtype)
    masks = model.forward(x_in, train=train, record=record)
    if recon == "polar":
        s_hat, cache = reconstruct_polar(masks.mag, masks.real, masks.imag,
                                         noisy, want_cache=True)
    elif recon in ("r", "c", "e"):
        # "e" trains through the cartesian-product form: same function,
        # same gradient, numerically tighter.
        fwd_mode = "c" if recon == "e" else recon
        s_hat = reconstruct_cartesian(fwd_mode, masks.real, masks.imag, noisy)
        cache = None
    else:
        raise InvalidInput(f"unknown reconstruction mode {recon!r}")
    value, ds = loss_total_grad(s_hat, clean, weights)
    return value, masks, s_hat, cache, ds


def train_step(model: MPCRN, opt: RMSprop, batch, stft_cfg: StftConfig,
               recon: str = "polar", weights: LossWeights = LossWeights(),
               lr: float | None = None) -> float:
    """One optimization step on a batch of (noisy, clean) waveform pairs."""
    cdtype = np.complex64 if model.store.dtype == np.float32 else np.complex128
    noisy, clean = _batch_spectra(batch, stft_cfg, cdtype)
    value, masks, s_hat, cache, ds = _forward_loss(
        model, noisy, clean, recon, weights, train=True, record=True)
    if not np.isfinite(value):
        raise NumericalError(
            "non-finite training loss; first bad op: "
            + locate_nonfinite(model, noisy, clean, recon, weights))
    if recon == "polar":
        d_mag, d_pr, d_pi = reconstruct_polar_backward(cache, ds)
    else:
        fwd_mode = "c" if recon == "e" else recon
        d_pr, d_pi = reconstruct_cartesian_backward(fwd_mode, noisy, ds)
        d_mag = np.zeros_like(d_pr.real)
    model.store.zero_grads()
    model.backward(np.real(d_mag), np.real(d_pr), np.real(d_pi))
    opt.step(lr)
    return value


def eval_loss(model: MPCRN, batch, stft_cfg: StftConfig, recon: str = "polar",
              weights: LossWeights = LossWeights()) -> float:
    """Total loss on a batch with the network in eval mode."""
    cdtype = np.complex64 if model.store.dtype == np.float32 else np.complex128
    noisy, clean = _batch_spectra(batch, stft_cfg, cdtype)
    value, *_ = _forward_loss(model, noisy, clean, recon, weights,
                              train=False, record=False)
    return value


def locate_nonfinite(model: MPCRN, noisy, clean, recon, weights) -> str:
    """Replay the forward pass stage by stage and name the first bad output."""
    x_in = np.stack([noisy.real, noisy.imag], axis=1).astype(model.store.dtype)
    if not np.all(np.isfinite(x_in)):
        return "input spectra"
    y = x_in
    for i, blk in enumerate(model.enc):
        y = blk.forward(y, train=False)
        if not np.all(np.isfinite(y)):
            return f"enc{i}"
    for i, blk in enumerate(model.psm):
        y = blk.forward(y, train=False)
        if not np.all(np.isfinite(y)):
            return f"psm{i}"
    for i, blk in enumerate(model.dec):
        y = blk.forward(y, train=False)
        if not np.all(np.isfinite(y)):
            return f"dec{i}"
    masks = model.forward(x_in, train=False)
    if recon == "polar":
        s_hat = reconstruct_polar(masks.mag, masks.real, masks.imag, noisy)
    else:
        s_hat = reconstruct_cartesian("c" if recon == "e" else recon,
                                      masks.real, masks.imag, noisy)
    if not np.all(np.isfinite(s_hat.real)) or not np.all(np.isfinite(s_hat.imag)):
        return "reconstruction"
    return "loss"


@dataclass
class TrainResult:
    model: MPCRN
    curve: list = field(default_factory=list)   # (step, train_loss, val_loss, lr)
    val_losses: list = field(default_factory=list)


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, mix_spec: SynthMixSpec,
          recon: str = "polar", weights: LossWeights = LossWeights(),
          stft_cfg: StftConfig = StftConfig(),
          progress=None) -> TrainResult:
    """Full training run; deterministic under train_cfg.seed.

    Validation uses a held-out synthetic set (a separate seed stream) and
    feeds the plateau scheduler. The loss curve carries one row per step
    with the most recent validation loss.
    """
    model = MPCRN(model_cfg, seed=train_cfg.seed)
    opt = RMSprop(model.store, train_cfg.lr, train_cfg.rmsprop_alpha,
                  train_cfg.rmsprop_eps)
    sched = PlateauScheduler(train_cfg.lr, train_cfg.plateau_patience,
                             train_cfg.lr_decay)
    chunk_len = int(round(train_cfg.chunk_seconds * mix_spec.sample_rate))
    crop_rng = np.random.default_rng([train_cfg.seed, 2])
    val_batch = synth_batch(replace(mix_spec, count=train_cfg.val_count,
                                    seed=train_cfg.seed), stream=10**9)
    result = TrainResult(model=model)
    step = 0
    val_loss = np.nan
    for epoch in range(train_cfg.epochs):
        for _ in range(train_cfg.steps_per_epoch):
            batch = synth_batch(replace(mix_spec, count=train_cfg.batch_size,
                                        seed=train_cfg.seed), stream=step)
            batch = [_crop_pair(n, c, chunk_len, crop_rng) for n, c in batch]
            tl = train_step(model, opt, batch, stft_cfg, recon, weights,
                            lr=sched.lr)
            result.curve.append((step, tl, val_loss, sched.lr))
            step += 1
        val_loss = eval_loss(model, val_batch, stft_cfg, recon, weights)
        result.val_losses.append(val_loss)
        sched.update(val_loss)
        if progress is not None:
            progress(epoch, step, val_loss, sched.lr)
    return result


def write_loss_curve(path, curve):
    """CSV rows of (step, train_loss, val_loss, lr)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "train_loss", "val_loss", "lr"])
        for step, tl, vl, lr in curve:
            writer.writerow([step, repr(float(tl)),
                             "" if np.isnan(vl) else repr(float(vl)),
                             repr(float(lr))])
