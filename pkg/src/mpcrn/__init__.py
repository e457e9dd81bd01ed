"""Magnitude-and-phase-aware CRN speech enhancement engine."""

from .dsp import StftConfig, istft, magnitude_phase, stft
from .loss import LossWeights, loss_mag, loss_ri, loss_total, loss_total_grad
from .metrics import seg_snr, si_sdr
from .model import MPCRN, MaskTriple, ModelConfig, count_macs, count_params
from .pipeline import enhance_waveform, load_model, save_model
from .reconstruction import (reconstruct_cartesian, reconstruct_polar,
                             triangle_correct)
from .stream import StreamEngine, benchmark_rtf
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "StftConfig", "stft", "istft", "magnitude_phase",
    "LossWeights", "loss_mag", "loss_ri", "loss_total", "loss_total_grad",
    "si_sdr", "seg_snr",
    "MPCRN", "MaskTriple", "ModelConfig", "count_macs", "count_params",
    "enhance_waveform", "load_model", "save_model",
    "reconstruct_polar", "reconstruct_cartesian", "triangle_correct",
    "StreamEngine", "benchmark_rtf",
    "TrainConfig", "train",
]
