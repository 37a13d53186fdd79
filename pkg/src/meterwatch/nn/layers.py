"""Dense, convolution, pooling, and activation layers over float64 numpy arrays.

Every layer caches what its backward pass needs during forward; backward
consumes the cache, stores parameter gradients on the layer, and returns the
gradient with respect to its input. One backward per forward; gradients are
set, not accumulated.

Shape conventions are batch-first: Dense takes (B, D); Conv1D takes
(B, T, C); Conv2D takes (B, H, W, C).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _as64(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


class Layer:
    """Base layer: forward/backward plus parameter access by name."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def describe(self) -> dict:
        raise NotImplementedError

    def kink_signature(self) -> np.ndarray | None:
        """Discrete state of the last forward (relu signs, pool argmax).

        Finite-difference checks skip parameters whose perturbation flips
        this signature; None means the layer is smooth.
        """
        return None


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        rng = rng or np.random.default_rng(0)
        self.W = glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim)
        self.b = np.zeros(out_dim)
        self._x = None
        self._grads: dict[str, np.ndarray] = {}

    def forward(self, x):
        x = _as64(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"Dense expects (B, {self.in_dim}), got {x.shape}")
        self._x = x
        return x @ self.W + self.b

    def backward(self, grad_out):
        if self._x is None:
            raise RuntimeError("backward before forward")
        grad_out = _as64(grad_out)
        self._grads = {"W": self._x.T @ grad_out, "b": grad_out.sum(axis=0)}
        return grad_out @ self.W.T

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return self._grads

    def describe(self):
        return {"type": "dense", "in_dim": self.in_dim, "out_dim": self.out_dim}


def _pad_amounts(kernel: int, padding: str) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        total = kernel - 1
        return total // 2, total - total // 2
    raise ShapeError(f"unknown padding {padding!r}")


class Conv1D(Layer):
    """1D convolution over (B, T, C_in) with kernels (K, C_in, C_out)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        padding: str = "valid",
        rng: np.random.Generator | None = None,
    ):
        if padding == "same" and stride != 1:
            raise ShapeError("same padding requires stride 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        fan_in = kernel_size * in_channels
        fan_out = kernel_size * out_channels
        self.K = glorot_uniform(rng, (kernel_size, in_channels, out_channels), fan_in, fan_out)
        self.b = np.zeros(out_channels)
        self._cols = None
        self._xp_shape = None
        self._grads: dict[str, np.ndarray] = {}

    def forward(self, x):
        x = _as64(x)
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(f"Conv1D expects (B, T, {self.in_channels}), got {x.shape}")
        left, right = _pad_amounts(self.kernel_size, self.padding)
        xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
        if xp.shape[1] < self.kernel_size:
            raise ShapeError(f"input length {x.shape[1]} shorter than kernel")
        # (B, T_full, C, K) -> strided -> K-major columns (B, T_out, K*C)
        win = sliding_window_view(xp, self.kernel_size, axis=1)[:, :: self.stride]
        cols = np.ascontiguousarray(win.transpose(0, 1, 3, 2))
        b, t_out = cols.shape[:2]
        self._cols = cols.reshape(b, t_out, -1)
        self._xp_shape = xp.shape
        self._pad_left = left
        self._in_len = x.shape[1]
        kmat = self.K.reshape(-1, self.out_channels)
        return self._cols @ kmat + self.b

    def backward(self, grad_out):
        if self._cols is None:
            raise RuntimeError("backward before forward")
        grad_out = _as64(grad_out)
        b, t_out, _ = grad_out.shape
        kmat = self.K.reshape(-1, self.out_channels)
        gk = self._cols.reshape(-1, kmat.shape[0]).T @ grad_out.reshape(-1, self.out_channels)
        self._grads = {
            "K": gk.reshape(self.K.shape),
            "b": grad_out.sum(axis=(0, 1)),
        }
        gcols = (grad_out @ kmat.T).reshape(b, t_out, self.kernel_size, self.in_channels)
        grad_xp = np.zeros(self._xp_shape)
        span = self.stride * (t_out - 1) + 1
        for k in range(self.kernel_size):
            grad_xp[:, k : k + span : self.stride, :] += gcols[:, :, k, :]
        return grad_xp[:, self._pad_left : self._pad_left + self._in_len, :]

    def params(self):
        return {"K": self.K, "b": self.b}

    def grads(self):
        return self._grads

    def describe(self):
        return {
            "type": "conv1d",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
            "stride": self.stride,
            "padding": self.padding,
        }


class Conv2D(Layer):
    """2D convolution over (B, H, W, C_in) with kernels (KH, KW, C_in, C_out)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        padding: str = "valid",
        rng: np.random.Generator | None = None,
    ):
        if padding == "same" and stride != 1:
            raise ShapeError("same padding requires stride 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        k = kernel_size
        fan_in = k * k * in_channels
        fan_out = k * k * out_channels
        self.K = glorot_uniform(rng, (k, k, in_channels, out_channels), fan_in, fan_out)
        self.b = np.zeros(out_channels)
        self._cols = None
        self._grads: dict[str, np.ndarray] = {}

    def forward(self, x):
        x = _as64(x)
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError(f"Conv2D expects (B, H, W, {self.in_channels}), got {x.shape}")
        k = self.kernel_size
        top, bottom = _pad_amounts(k, self.padding)
        left, right = _pad_amounts(k, self.padding)
        xp = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))
        if xp.shape[1] < k or xp.shape[2] < k:
            raise ShapeError(f"input {x.shape} smaller than kernel {k}")
        # (B, Ho, Wo, C, KH, KW) -> (B, Ho, Wo, KH, KW, C) columns
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, :: self.stride, :: self.stride]
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
        b, ho, wo = cols.shape[:3]
        self._cols = cols.reshape(b, ho, wo, -1)
        self._xp_shape = xp.shape
        self._pads = (top, left)
        self._in_hw = (x.shape[1], x.shape[2])
        kmat = self.K.reshape(-1, self.out_channels)
        return self._cols @ kmat + self.b

    def backward(self, grad_out):
        if self._cols is None:
            raise RuntimeError("backward before forward")
        grad_out = _as64(grad_out)
        b, ho, wo, _ = grad_out.shape
        k = self.kernel_size
        kmat = self.K.reshape(-1, self.out_channels)
        gk = self._cols.reshape(-1, kmat.shape[0]).T @ grad_out.reshape(-1, self.out_channels)
        self._grads = {"K": gk.reshape(self.K.shape), "b": grad_out.sum(axis=(0, 1, 2))}
        gcols = (grad_out @ kmat.T).reshape(b, ho, wo, k, k, self.in_channels)
        grad_xp = np.zeros(self._xp_shape)
        hspan = self.stride * (ho - 1) + 1
        wspan = self.stride * (wo - 1) + 1
        for kh in range(k):
            for kw in range(k):
                grad_xp[
                    :, kh : kh + hspan : self.stride, kw : kw + wspan : self.stride, :
                ] += gcols[:, :, :, kh, kw, :]
        top, left = self._pads
        h, w = self._in_hw
        return grad_xp[:, top : top + h, left : left + w, :]

    def params(self):
        return {"K": self.K, "b": self.b}

    def grads(self):
        return self._grads

    def describe(self):
        return {
            "type": "conv2d",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
            "stride": self.stride,
            "padding": self.padding,
        }


class MaxPool1D(Layer):
    """Non-overlapping max pooling over (B, T, C); a ragged tail is dropped."""

    def __init__(self, window: int):
        if window < 1:
            raise ShapeError("window must be >= 1")
        self.window = window
        self._idx = None

    def forward(self, x):
        x = _as64(x)
        if x.ndim != 3:
            raise ShapeError(f"MaxPool1D expects (B, T, C), got {x.shape}")
        b, t, c = x.shape
        t_out = t // self.window
        if t_out == 0:
            raise ShapeError(f"length {t} shorter than window {self.window}")
        xr = x[:, : t_out * self.window].reshape(b, t_out, self.window, c)
        self._idx = xr.argmax(axis=2)
        self._in_shape = x.shape
        return np.take_along_axis(xr, self._idx[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(self, grad_out):
        if self._idx is None:
            raise RuntimeError("backward before forward")
        grad_out = _as64(grad_out)
        b, t, c = self._in_shape
        t_out = t // self.window
        gxr = np.zeros((b, t_out, self.window, c))
        np.put_along_axis(gxr, self._idx[:, :, None, :], grad_out[:, :, None, :], axis=2)
        gx = np.zeros(self._in_shape)
        gx[:, : t_out * self.window] = gxr.reshape(b, t_out * self.window, c)
        return gx

    def describe(self):
        return {"type": "maxpool1d", "window": self.window}

    def kink_signature(self):
        return None if self._idx is None else self._idx.ravel().copy()


class MaxPool2D(Layer):
    """Non-overlapping square max pooling over (B, H, W, C)."""

    def __init__(self, window: int):
        if window < 1:
            raise ShapeError("window must be >= 1")
        self.window = window
        self._idx = None

    def forward(self, x):
        x = _as64(x)
        if x.ndim != 4:
            raise ShapeError(f"MaxPool2D expects (B, H, W, C), got {x.shape}")
        b, h, w, c = x.shape
        wn = self.window
        ho, wo = h // wn, w // wn
        if ho == 0 or wo == 0:
            raise ShapeError(f"input {x.shape} smaller than window {wn}")
        xr = x[:, : ho * wn, : wo * wn].reshape(b, ho, wn, wo, wn, c)
        flat = np.ascontiguousarray(xr.transpose(0, 1, 3, 2, 4, 5)).reshape(b, ho, wo, wn * wn, c)
        self._idx = flat.argmax(axis=3)
        self._in_shape = x.shape
        return np.take_along_axis(flat, self._idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]

    def backward(self, grad_out):
        if self._idx is None:
            raise RuntimeError("backward before forward")
        grad_out = _as64(grad_out)
        b, h, w, c = self._in_shape
        wn = self.window
        ho, wo = h // wn, w // wn
        gflat = np.zeros((b, ho, wo, wn * wn, c))
        np.put_along_axis(gflat, self._idx[:, :, :, None, :], grad_out[:, :, :, None, :], axis=3)
        gxr = gflat.reshape(b, ho, wo, wn, wn, c).transpose(0, 1, 3, 2, 4, 5)
        gx = np.zeros(self._in_shape)
        gx[:, : ho * wn, : wo * wn] = gxr.reshape(b, ho * wn, wo * wn, c)
        return gx

    def describe(self):
        return {"type": "maxpool2d", "window": self.window}

    def kink_signature(self):
        return None if self._idx is None else self._idx.ravel().copy()


class Relu(Layer):
    def __init__(self):
        self._x = None

    def forward(self, x):
        self._x = _as64(x)
        return np.maximum(self._x, 0.0)

    def backward(self, grad_out):
        if self._x is None:
            raise RuntimeError("backward before forward")
        return _as64(grad_out) * (self._x > 0)

    def describe(self):
        return {"type": "relu"}

    def kink_signature(self):
        return None if self._x is None else (self._x.ravel() > 0).astype(np.int8)


class Sigmoid(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x):
        self._y = sigmoid(_as64(x))
        return self._y

    def backward(self, grad_out):
        if self._y is None:
            raise RuntimeError("backward before forward")
        return _as64(grad_out) * self._y * (1.0 - self._y)

    def describe(self):
        return {"type": "sigmoid"}


class Tanh(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x):
        self._y = np.tanh(_as64(x))
        return self._y

    def backward(self, grad_out):
        if self._y is None:
            raise RuntimeError("backward before forward")
        return _as64(grad_out) * (1.0 - self._y**2)

    def describe(self):
        return {"type": "tanh"}


class Flatten(Layer):
    def __init__(self):
        self._in_shape = None

    def forward(self, x):
        x = _as64(x)
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        if self._in_shape is None:
            raise RuntimeError("backward before forward")
        return _as64(grad_out).reshape(self._in_shape)

    def describe(self):
        return {"type": "flatten"}


def sigmoid(z) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    flat = np.atleast_1d(z)
    out = np.empty_like(flat)
    pos = flat >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ez = np.exp(flat[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out.reshape(z.shape)
