"""LSTM cell and sequence layer with exact backpropagation through time.

Cell equations (row-vector convention, x shape (B, D), h shape (B, H)):

    f = sigmoid(x U_f + h W_f + b_f)
    i = sigmoid(x U_i + h W_i + b_i)
    o = sigmoid(x U_o + h W_o + b_o)
    g = tanh(x U_g + h W_g + b_g)
    C = f*C_prev + i*g          (default cell)
    h = tanh(C) * o

A "sigmoid_cell" variant wraps the cell update in an extra logistic squash,
C = sigmoid(f*C_prev + i*g), kept selectable for comparison experiments; the
default is the standard cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Layer, ShapeError, _as64, glorot_uniform, sigmoid

GATES = ("f", "i", "o", "g")

CELL_STANDARD = "standard"
CELL_SIGMOID = "sigmoid_cell"


@dataclass
class LstmParams:
    """Per-gate input weights U (D x H), recurrent weights W (H x H), biases b (H)."""

    U_f: np.ndarray
    U_i: np.ndarray
    U_o: np.ndarray
    U_g: np.ndarray
    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    def __post_init__(self):
        d, h = self.U_f.shape
        for gate in GATES:
            if getattr(self, f"U_{gate}").shape != (d, h):
                raise ShapeError(f"U_{gate} shape mismatch")
            if getattr(self, f"W_{gate}").shape != (h, h):
                raise ShapeError(f"W_{gate} shape mismatch")
            if getattr(self, f"b_{gate}").shape != (h,):
                raise ShapeError(f"b_{gate} shape mismatch")

    @property
    def input_dim(self) -> int:
        return self.U_f.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.U_f.shape[1]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmParams":
        """Glorot-uniform weights, zero biases except forget bias at 1."""
        kw = {}
        for gate in GATES:
            kw[f"U_{gate}"] = glorot_uniform(rng, (input_dim, hidden_dim), input_dim, hidden_dim)
            kw[f"W_{gate}"] = glorot_uniform(rng, (hidden_dim, hidden_dim), hidden_dim, hidden_dim)
            kw[f"b_{gate}"] = np.zeros(hidden_dim)
        kw["b_f"] = np.ones(hidden_dim)
        return cls(**kw)


@dataclass
class LstmState:
    h: np.ndarray
    C: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int) -> "LstmState":
        return cls(h=np.zeros(hidden_dim), C=np.zeros(hidden_dim))


def lstm_cell_step(
    x_t: np.ndarray,
    prev: LstmState,
    params: LstmParams,
    cell_variant: str = CELL_STANDARD,
) -> LstmState:
    """One cell update for a single (unbatched) input vector."""
    x_t = _as64(x_t)
    if x_t.shape != (params.input_dim,):
        raise ShapeError(f"x_t must be ({params.input_dim},), got {x_t.shape}")
    if prev.h.shape != (params.hidden_dim,) or prev.C.shape != (params.hidden_dim,):
        raise ShapeError("state dims inconsistent with params")
    f = sigmoid(x_t @ params.U_f + prev.h @ params.W_f + params.b_f)
    i = sigmoid(x_t @ params.U_i + prev.h @ params.W_i + params.b_i)
    o = sigmoid(x_t @ params.U_o + prev.h @ params.W_o + params.b_o)
    g = np.tanh(x_t @ params.U_g + prev.h @ params.W_g + params.b_g)
    cell_input = f * prev.C + i * g
    if cell_variant == CELL_SIGMOID:
        c = sigmoid(cell_input)
    elif cell_variant == CELL_STANDARD:
        c = cell_input
    else:
        raise ValueError(f"unknown cell variant {cell_variant!r}")
    h = np.tanh(c) * o
    return LstmState(h=h, C=c)


class LstmLayer(Layer):
    """LSTM over a batch of sequences (B, T, D) -> (B, T, H) or last (B, H)."""

    def __init__(
        self,
        input_dim: int,
        hidden_dim: int,
        return_sequences: bool = False,
        cell_variant: str = CELL_STANDARD,
        rng: np.random.Generator | None = None,
    ):
        if cell_variant not in (CELL_STANDARD, CELL_SIGMOID):
            raise ValueError(f"unknown cell variant {cell_variant!r}")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.return_sequences = return_sequences
        self.cell_variant = cell_variant
        self.p = LstmParams.init(input_dim, hidden_dim, rng or np.random.default_rng(0))
        self._cache = None
        self._grads: dict[str, np.ndarray] = {}

    def forward(self, x):
        x = _as64(x)
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(f"LstmLayer expects (B, T, {self.input_dim}), got {x.shape}")
        b, t, _ = x.shape
        hd = self.hidden_dim
        p = self.p
        h = np.zeros((b, hd))
        c = np.zeros((b, hd))
        steps = []
        hs = np.empty((b, t, hd))
        for k in range(t):
            xt = x[:, k, :]
            f = sigmoid(xt @ p.U_f + h @ p.W_f + p.b_f)
            i = sigmoid(xt @ p.U_i + h @ p.W_i + p.b_i)
            o = sigmoid(xt @ p.U_o + h @ p.W_o + p.b_o)
            g = np.tanh(xt @ p.U_g + h @ p.W_g + p.b_g)
            cell_input = f * c + i * g
            c_new = sigmoid(cell_input) if self.cell_variant == CELL_SIGMOID else cell_input
            tc = np.tanh(c_new)
            steps.append(dict(x=xt, h_prev=h, c_prev=c, f=f, i=i, o=o, g=g, c=c_new, tc=tc))
            h = tc * o
            c = c_new
            hs[:, k, :] = h
        self._cache = (x.shape, steps)
        return hs if self.return_sequences else hs[:, -1, :]

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward before forward")
        grad_out = _as64(grad_out)
        (b, t, _), steps = self._cache
        p = self.p
        g_params = {name: np.zeros_like(arr) for name, arr in self.params().items()}
        grad_x = np.zeros((b, t, self.input_dim))
        dh_next = np.zeros((b, self.hidden_dim))
        dc_next = np.zeros((b, self.hidden_dim))
        for k in reversed(range(t)):
            st = steps[k]
            dh = dh_next.copy()
            if self.return_sequences:
                dh += grad_out[:, k, :]
            elif k == t - 1:
                dh += grad_out
            do = dh * st["tc"]
            dc = dc_next + dh * st["o"] * (1.0 - st["tc"] ** 2)
            if self.cell_variant == CELL_SIGMOID:
                dc = dc * st["c"] * (1.0 - st["c"])
            df = dc * st["c_prev"]
            di = dc * st["g"]
            dg = dc * st["i"]
            dc_next = dc * st["f"]
            dz = {
                "f": df * st["f"] * (1.0 - st["f"]),
                "i": di * st["i"] * (1.0 - st["i"]),
                "o": do * st["o"] * (1.0 - st["o"]),
                "g": dg * (1.0 - st["g"] ** 2),
            }
            dh_next = np.zeros_like(dh)
            gx = np.zeros((b, self.input_dim))
            for gate in GATES:
                z = dz[gate]
                g_params[f"U_{gate}"] += st["x"].T @ z
                g_params[f"W_{gate}"] += st["h_prev"].T @ z
                g_params[f"b_{gate}"] += z.sum(axis=0)
                gx += z @ getattr(p, f"U_{gate}").T
                dh_next += z @ getattr(p, f"W_{gate}").T
            grad_x[:, k, :] = gx
        self._grads = g_params
        return grad_x

    def params(self):
        return {
            name: getattr(self.p, name)
            for name in [f"{kind}_{gate}" for kind in ("U", "W", "b") for gate in GATES]
        }

    def grads(self):
        return self._grads

    def describe(self):
        return {
            "type": "lstm",
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "return_sequences": self.return_sequences,
            "cell_variant": self.cell_variant,
        }
