"""Network containers (sequential and two-branch) and training losses.

Models produce raw outputs (logits for classifiers); losses return the
scalar loss together with its gradient with respect to the model output, so
training is always loss(value, grad) -> net.backward(grad) -> optimizer.
"""

from __future__ import annotations

import numpy as np

from .layers import Layer, ShapeError, _as64, sigmoid


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out[f"{i}.{name}"] = arr
        return out

    def grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.grads().items():
                out[f"{i}.{name}"] = arr
        return out

    def describe(self):
        return {"type": "sequential", "layers": [layer.describe() for layer in self.layers]}

    def kink_signature(self):
        sigs = [s for layer in self.layers if (s := layer.kink_signature()) is not None]
        return np.concatenate([s.astype(np.int64) for s in sigs]) if sigs else None


class TwoBranchNet:
    """Two input branches merged elementwise, then a shared head.

    merge "add" sums the branch outputs (shapes must match); "concat" joins
    them along the last axis. forward takes the two branch inputs; backward
    returns (grad_a, grad_b).
    """

    def __init__(self, branch_a: Sequential, branch_b: Sequential, head: Sequential,
                 merge: str = "add"):
        if merge not in ("add", "concat"):
            raise ValueError(f"unknown merge {merge!r}")
        self.branch_a = branch_a
        self.branch_b = branch_b
        self.head = head
        self.merge = merge
        self._split = None

    def forward(self, xa, xb):
        ya = self.branch_a.forward(xa)
        yb = self.branch_b.forward(xb)
        if self.merge == "add":
            if ya.shape != yb.shape:
                raise ShapeError(f"add merge needs equal shapes, got {ya.shape} vs {yb.shape}")
            merged = ya + yb
        else:
            if ya.shape[:-1] != yb.shape[:-1]:
                raise ShapeError(f"concat merge shapes differ: {ya.shape} vs {yb.shape}")
            self._split = ya.shape[-1]
            merged = np.concatenate([ya, yb], axis=-1)
        return self.head.forward(merged)

    def backward(self, grad_out):
        gm = self.head.backward(grad_out)
        if self.merge == "add":
            ga, gb = gm, gm
        else:
            ga, gb = gm[..., : self._split], gm[..., self._split :]
        return self.branch_a.backward(ga), self.branch_b.backward(gb)

    def params(self):
        out = {}
        for prefix, part in (("a", self.branch_a), ("b", self.branch_b), ("head", self.head)):
            for name, arr in part.params().items():
                out[f"{prefix}.{name}"] = arr
        return out

    def grads(self):
        out = {}
        for prefix, part in (("a", self.branch_a), ("b", self.branch_b), ("head", self.head)):
            for name, arr in part.grads().items():
                out[f"{prefix}.{name}"] = arr
        return out

    def describe(self):
        return {
            "type": "two_branch",
            "merge": self.merge,
            "branch_a": self.branch_a.describe(),
            "branch_b": self.branch_b.describe(),
            "head": self.head.describe(),
        }

    def kink_signature(self):
        sigs = [
            s
            for part in (self.branch_a, self.branch_b, self.head)
            if (s := part.kink_signature()) is not None
        ]
        return np.concatenate(sigs) if sigs else None


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to pred."""
    pred = _as64(pred)
    target = _as64(target)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff**2))
    return loss, 2.0 * diff / diff.size


def bce_with_logits_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross-entropy on raw logits, numerically stable.

    loss = mean(max(z,0) - z*y + log(1 + exp(-|z|))); gradient is
    (sigmoid(z) - y) / count.
    """
    z = _as64(logits)
    y = _as64(labels)
    if z.shape != y.shape:
        raise ShapeError(f"logits {z.shape} vs labels {y.shape}")
    loss = float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))
    return loss, (sigmoid(z) - y) / z.size
