"""Model checkpoints: one JSON document holding the architecture descriptor,
every parameter array as nested lists, the training seed, and the training
config. Loading rebuilds the network from the descriptor (or verifies an
existing network against it) and rejects any architecture mismatch.
"""

from __future__ import annotations

import json

import numpy as np

from . import layers as L
from .lstm import LstmLayer
from .network import Sequential, TwoBranchNet


class CheckpointError(ValueError):
    pass


def build_from_descriptor(desc: dict):
    """Construct an untrained network matching an architecture descriptor."""
    kind = desc.get("type")
    if kind == "sequential":
        return Sequential([build_from_descriptor(d) for d in desc["layers"]])
    if kind == "two_branch":
        return TwoBranchNet(
            branch_a=build_from_descriptor(desc["branch_a"]),
            branch_b=build_from_descriptor(desc["branch_b"]),
            head=build_from_descriptor(desc["head"]),
            merge=desc["merge"],
        )
    if kind == "dense":
        return L.Dense(desc["in_dim"], desc["out_dim"])
    if kind == "conv1d":
        return L.Conv1D(desc["in_channels"], desc["out_channels"], desc["kernel_size"],
                        stride=desc["stride"], padding=desc["padding"])
    if kind == "conv2d":
        return L.Conv2D(desc["in_channels"], desc["out_channels"], desc["kernel_size"],
                        stride=desc["stride"], padding=desc["padding"])
    if kind == "maxpool1d":
        return L.MaxPool1D(desc["window"])
    if kind == "maxpool2d":
        return L.MaxPool2D(desc["window"])
    if kind == "lstm":
        return LstmLayer(desc["input_dim"], desc["hidden_dim"],
                         return_sequences=desc["return_sequences"],
                         cell_variant=desc["cell_variant"])
    if kind == "relu":
        return L.Relu()
    if kind == "sigmoid":
        return L.Sigmoid()
    if kind == "tanh":
        return L.Tanh()
    if kind == "flatten":
        return L.Flatten()
    raise CheckpointError(f"unknown layer type {kind!r}")


def save_checkpoint(path, net, seed: int = 0, training_config: dict | None = None) -> None:
    doc = {
        "architecture": net.describe(),
        "params": {name: arr.tolist() for name, arr in sorted(net.params().items())},
        "seed": seed,
        "training_config": training_config or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, into=None):
    """Load a checkpoint; returns (net, seed, training_config).

    With ``into`` given, parameters are loaded into that network and its
    architecture must match the stored descriptor exactly.
    """
    with open(path) as fh:
        doc = json.load(fh)
    desc = doc["architecture"]
    if into is None:
        net = build_from_descriptor(desc)
    else:
        net = into
        if net.describe() != desc:
            raise CheckpointError(
                f"architecture mismatch: checkpoint {desc} vs model {net.describe()}"
            )
    params = net.params()
    stored = doc["params"]
    if set(stored) != set(params):
        raise CheckpointError(
            f"parameter names mismatch: {sorted(set(stored) ^ set(params))}"
        )
    for name, arr in params.items():
        loaded = np.asarray(stored[name], dtype=np.float64)
        if loaded.shape != arr.shape:
            raise CheckpointError(f"shape mismatch for {name}: {loaded.shape} vs {arr.shape}")
        arr[...] = loaded
    return net, doc["seed"], doc["training_config"]
