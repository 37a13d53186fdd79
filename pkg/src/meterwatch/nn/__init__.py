"""Minimal neural-network kernel over float64 numpy arrays.

Tensors are numpy float64 arrays (row-major shape + data). The kernel covers
dense/convolution/pooling/activation layers, an LSTM with exact
backpropagation through time, SGD and Adam, finite-difference gradient
checking, and JSON checkpoints. No external ML dependency.
"""

from .layers import (
    Conv1D,
    Conv2D,
    Dense,
    Flatten,
    Layer,
    MaxPool1D,
    MaxPool2D,
    Relu,
    ShapeError,
    Sigmoid,
    Tanh,
    glorot_uniform,
    sigmoid,
)
from .lstm import (
    CELL_SIGMOID,
    CELL_STANDARD,
    LstmLayer,
    LstmParams,
    LstmState,
    lstm_cell_step,
)
from .network import Sequential, TwoBranchNet, bce_with_logits_loss, mse_loss
from .optim import Adam, OptimizerError, Sgd
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import CheckpointError, build_from_descriptor, load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "CELL_SIGMOID",
    "CELL_STANDARD",
    "CheckpointError",
    "Conv1D",
    "Conv2D",
    "Dense",
    "Flatten",
    "GradCheckReport",
    "Layer",
    "LstmLayer",
    "LstmParams",
    "LstmState",
    "MaxPool1D",
    "MaxPool2D",
    "OptimizerError",
    "Relu",
    "Sequential",
    "ShapeError",
    "Sigmoid",
    "Sgd",
    "Tanh",
    "TwoBranchNet",
    "bce_with_logits_loss",
    "build_from_descriptor",
    "glorot_uniform",
    "grad_check",
    "load_checkpoint",
    "lstm_cell_step",
    "mse_loss",
    "save_checkpoint",
    "sigmoid",
]
