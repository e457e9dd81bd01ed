"""Enhanced-spectrum reconstruction from predicted masks.

The polar path scales the noisy magnitude by the magnitude mask and rotates
the noisy phase by the (triangle-corrected) phase mask:

    |S| = mag_mask * |X|
    cos th_S = tcpr * cos th_X - tcpi * sin th_X
    sin th_S = tcpr * sin th_X + tcpi * cos th_X
    S = |S| * (cos th_S + j sin th_S)

The cartesian patterns combine a complex mask (Mr, Mi) with X directly:

    "r": S = (Xr * Mr) + j (Xi * Mi)
    "c": S = X * M  expanded in cartesian parts
    "e": S = |X| * |M| * exp(j (th_X + atan2(Mi, Mr)))

"c" and "e" are the same function written in different coordinates; their
outputs agree to float rounding, so the shared gradient below is exact for
both. All functions broadcast over leading batch axes.
"""

import numpy as np

from .dsp import magnitude_phase
from .errors import ShapeError

# Below this squared modulus the predicted (cos, sin) pair is treated as
# degenerate and replaced by (1, 0); everything else is normalized exactly.
TRIANGLE_EPS = 1e-12

CARTESIAN_MODES = ("r", "c", "e")
MODES = ("polar",) + CARTESIAN_MODES


def _require_same_shape(*arrays):
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"shape mismatch between mask and spectrum: {sorted(shapes)}")


def triangle_correct(pr: np.ndarray, pi: np.ndarray):
    """Renormalize a predicted (cos, sin) pair to exact unit modulus.

    Pairs with pr^2 + pi^2 <= TRIANGLE_EPS fall back to (1, 0).
    """
    pr = np.asarray(pr)
    pi = np.asarray(pi)
    _require_same_shape(pr, pi)
    sq = pr * pr + pi * pi
    degenerate = sq <= TRIANGLE_EPS
    norm = np.sqrt(np.where(degenerate, 1.0, sq))
    tcpr = np.where(degenerate, 1.0, pr / norm)
    tcpi = np.where(degenerate, 0.0, pi / norm)
    return tcpr, tcpi


def reconstruct_polar(mag_mask: np.ndarray, pr: np.ndarray, pi: np.ndarray,
                      x: np.ndarray, want_cache: bool = False):
    """Apply magnitude mask and phase-mask rotation to the noisy spectrum x.

    Args:
        mag_mask: per-bin magnitude mask.
        pr, pi: per-bin phase-mask cos/sin estimates (triangle-corrected here).
        x: complex noisy spectrogram, same shape.
        want_cache: also return the intermediates needed by
            reconstruct_polar_backward.

    Returns:
        Complex enhanced spectrogram (and the cache when requested).
    """
    x = np.asarray(x)
    _require_same_shape(np.asarray(mag_mask), np.asarray(pr), np.asarray(pi), x)
    mag_x, cos_x, sin_x = magnitude_phase(x)
    tcpr, tcpi = triangle_correct(pr, pi)
    cos_s = tcpr * cos_x - tcpi * sin_x
    sin_s = tcpr * sin_x + tcpi * cos_x
    mag_s = np.asarray(mag_mask) * mag_x
    s_hat = (mag_s * cos_s) + 1j * (mag_s * sin_s)
    if not want_cache:
        return s_hat
    cache = (np.asarray(pr), np.asarray(pi), tcpr, tcpi,
             mag_x, cos_x, sin_x, mag_s, cos_s, sin_s)
    return s_hat, cache


def reconstruct_polar_backward(cache, ds: np.ndarray):
    """Gradients of a scalar loss w.r.t. (mag_mask, pr, pi).

    ds packs dL/dS_r + j dL/dS_i. The degenerate triangle-correction branch
    is locally constant, so its gradient is zero.
    """
    pr, pi, tcpr, tcpi, mag_x, cos_x, sin_x, mag_s, cos_s, sin_s = cache
    dsr, dsi = ds.real, ds.imag
    d_mag_s = dsr * cos_s + dsi * sin_s
    d_cos_s = dsr * mag_s
    d_sin_s = dsi * mag_s
    d_mag_mask = d_mag_s * mag_x
    d_tcpr = d_cos_s * cos_x + d_sin_s * sin_x
    d_tcpi = -d_cos_s * sin_x + d_sin_s * cos_x
    sq = pr * pr + pi * pi
    degenerate = sq <= TRIANGLE_EPS
    norm = np.sqrt(np.where(degenerate, 1.0, sq))
    d_pr = (d_tcpr * (1.0 - tcpr * tcpr) - d_tcpi * tcpr * tcpi) / norm
    d_pi = (-d_tcpr * tcpr * tcpi + d_tcpi * (1.0 - tcpi * tcpi)) / norm
    zero = np.zeros_like(d_pr)
    return (d_mag_mask,
            np.where(degenerate, zero, d_pr),
            np.where(degenerate, zero, d_pi))


def reconstruct_cartesian(mode: str, mr: np.ndarray, mi: np.ndarray,
                          x: np.ndarray) -> np.ndarray:
    """Combine a cartesian complex mask with the noisy spectrum x."""
    mr = np.asarray(mr)
    mi = np.asarray(mi)
    x = np.asarray(x)
    _require_same_shape(mr, mi, x)
    if mode == "r":
        return (x.real * mr) + 1j * (x.imag * mi)
    if mode == "c":
        return ((x.real * mr - x.imag * mi)
                + 1j * (x.real * mi + x.imag * mr))
    if mode == "e":
        mag = np.abs(x) * np.sqrt(mr * mr + mi * mi)
        phase = np.angle(x) + np.arctan2(mi, mr)
        return mag * np.exp(1j * phase)
    raise ShapeError(f"unknown cartesian mode {mode!r}; expected one of {CARTESIAN_MODES}")


def reconstruct_cartesian_backward(mode: str, x: np.ndarray, ds: np.ndarray):
    """Gradients of a scalar loss w.r.t. (mr, mi) for the cartesian modes."""
    dsr, dsi = ds.real, ds.imag
    if mode == "r":
        return dsr * x.real, dsi * x.imag
    if mode in ("c", "e"):
        # Identical functions, identical Jacobian (complex product rule).
        d_mr = dsr * x.real + dsi * x.imag
        d_mi = -dsr * x.imag + dsi * x.real
        return d_mr, d_mi
    raise ShapeError(f"unknown cartesian mode {mode!r}; expected one of {CARTESIAN_MODES}")
