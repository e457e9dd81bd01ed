"""Spectral training objectives: magnitude MSE, real/imag MSE, weighted sum.

Both terms reduce by mean over every (batch, frame, bin) element. Magnitudes
use an epsilon-stabilized square root so the gradient stays finite at zero.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, ShapeError

MAG_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    alpha_mag: float = 1.0
    alpha_ri: float = 1.0

    def __post_init__(self):
        if self.alpha_mag < 0 or self.alpha_ri < 0:
            raise InvalidInput("loss weights must be non-negative")


def _check(s_hat, s):
    if s_hat.shape != s.shape:
        raise ShapeError(f"spectrum shapes differ: {s_hat.shape} vs {s.shape}")


def _stab_mag(s: np.ndarray) -> np.ndarray:
    return np.sqrt(s.real * s.real + s.imag * s.imag + MAG_EPS)


def loss_mag(s_hat: np.ndarray, s: np.ndarray) -> float:
    """Mean squared error between the two magnitude spectra."""
    s_hat = np.asarray(s_hat)
    s = np.asarray(s)
    _check(s_hat, s)
    d = _stab_mag(s_hat) - _stab_mag(s)
    return float(np.mean(d * d))


def loss_ri(s_hat: np.ndarray, s: np.ndarray) -> float:
    """Mean squared real-part error plus mean squared imaginary-part error."""
    s_hat = np.asarray(s_hat)
    s = np.asarray(s)
    _check(s_hat, s)
    dr = s_hat.real - s.real
    di = s_hat.imag - s.imag
    return float(np.mean(dr * dr) + np.mean(di * di))


def loss_total(s_hat: np.ndarray, s: np.ndarray,
               w: LossWeights = LossWeights()) -> float:
    return w.alpha_mag * loss_mag(s_hat, s) + w.alpha_ri * loss_ri(s_hat, s)


def loss_total_grad(s_hat: np.ndarray, s: np.ndarray,
                    w: LossWeights = LossWeights()):
    """Loss value plus its gradient w.r.t. s_hat.

    Returns:
        (loss, grad) with grad packing dL/dS_r + j dL/dS_i, same shape as s_hat.
    """
    s_hat = np.asarray(s_hat)
    s = np.asarray(s)
    _check(s_hat, s)
    n = s_hat.size
    mag_hat = _stab_mag(s_hat)
    dmag = mag_hat - _stab_mag(s)
    value = float(np.mean(dmag * dmag))
    # d|S|/dS_r = S_r / |S| with the stabilized magnitude.
    coef = (2.0 / n) * w.alpha_mag * dmag / mag_hat
    gr = coef * s_hat.real
    gi = coef * s_hat.imag
    dr = s_hat.real - s.real
    di = s_hat.imag - s.imag
    value = w.alpha_mag * value + w.alpha_ri * float(np.mean(dr * dr) + np.mean(di * di))
    gr = gr + (2.0 / n) * w.alpha_ri * dr
    gi = gi + (2.0 / n) * w.alpha_ri * di
    return value, gr + 1j * gi
