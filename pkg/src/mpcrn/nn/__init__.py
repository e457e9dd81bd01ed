from .params import Param, ParamStore, save_checkpoint, load_checkpoint, load_into_store
from .layers import (Conv2d, ConvTranspose2d, BatchNorm2d, LayerNorm, PReLU,
                     Sigmoid, Tanh, sigmoid)
from .rnn import GRU, BiGRU
from . import gradcheck

__all__ = [
    "Param", "ParamStore", "save_checkpoint", "load_checkpoint", "load_into_store",
    "Conv2d", "ConvTranspose2d", "BatchNorm2d", "LayerNorm", "PReLU",
    "Sigmoid", "Tanh", "sigmoid", "GRU", "BiGRU", "gradcheck",
]
