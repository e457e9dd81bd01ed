"""Objective enhancement metrics: SI-SDR and segmental SNR."""

import numpy as np

from .errors import InvalidInput

SI_SDR_CAP_DB = 100.0


def si_sdr(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Scale-invariant signal-to-distortion ratio in dB.

    The estimate is projected onto the reference; the ratio of projected to
    residual energy is capped at +100 dB (exact matches have zero residual).

    Raises:
        InvalidInput: length mismatch or an all-zero reference.
    """
    estimate = np.asarray(estimate, dtype=np.float64).ravel()
    reference = np.asarray(reference, dtype=np.float64).ravel()
    if estimate.shape != reference.shape:
        raise InvalidInput(
            f"length mismatch: {estimate.size} vs {reference.size}")
    ref_energy = float(np.dot(reference, reference))
    if ref_energy == 0.0:
        raise InvalidInput("reference signal is all zero")
    scale = float(np.dot(estimate, reference)) / ref_energy
    target = scale * reference
    residual = estimate - target
    target_power = float(np.dot(target, target))
    residual_power = float(np.dot(residual, residual))
    if target_power == 0.0:
        return -SI_SDR_CAP_DB
    if residual_power == 0.0:
        return SI_SDR_CAP_DB
    return min(10.0 * np.log10(target_power / residual_power), SI_SDR_CAP_DB)


def seg_snr(estimate: np.ndarray, reference: np.ndarray, frame_len: int = 256,
            floor: float = -10.0, ceil: float = 35.0,
            energy_thresh: float = 1e-10) -> float:
    """Mean per-frame SNR in dB over frames with audible reference energy.

    Non-overlapping frames of `frame_len` samples; per-frame SNRs are clamped
    to [floor, ceil] before averaging. Frames whose reference mean square
    power is at or below `energy_thresh` are skipped.

    Raises:
        InvalidInput: length mismatch, or no frame clears the energy threshold.
    """
    estimate = np.asarray(estimate, dtype=np.float64).ravel()
    reference = np.asarray(reference, dtype=np.float64).ravel()
    if estimate.shape != reference.shape:
        raise InvalidInput(
            f"length mismatch: {estimate.size} vs {reference.size}")
    n_frames = reference.size // frame_len
    if n_frames == 0:
        raise InvalidInput(f"signal shorter than one frame ({frame_len} samples)")
    snrs = []
    for k in range(n_frames):
        sl = slice(k * frame_len, (k + 1) * frame_len)
        ref_power = float(np.dot(reference[sl], reference[sl]))
        if ref_power / frame_len <= energy_thresh:
            continue
        err = estimate[sl] - reference[sl]
        err_power = float(np.dot(err, err))
        if err_power == 0.0:
            snrs.append(ceil)
            continue
        snrs.append(float(np.clip(10.0 * np.log10(ref_power / err_power),
                                  floor, ceil)))
    if not snrs:
        raise InvalidInput("reference has no frames above the energy threshold")
    return float(np.mean(snrs))
