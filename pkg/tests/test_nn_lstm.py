"""Tests for the LSTM cell and sequence layer, against a scalar-loop oracle."""

import math

import numpy as np
import pytest

from meterwatch import nn
from meterwatch.nn.lstm import GATES


def scalar_sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def oracle_cell_step(x, h_prev, c_prev, p, variant="standard"):
    """Element-by-element reimplementation of the cell, no matrix ops."""
    d = len(x)
    hd = len(h_prev)
    out_h = [0.0] * hd
    out_c = [0.0] * hd
    for j in range(hd):
        z = {}
        for gate in GATES:
            u = getattr(p, f"U_{gate}")
            w = getattr(p, f"W_{gate}")
            b = getattr(p, f"b_{gate}")
            acc = b[j]
            for a in range(d):
                acc += x[a] * u[a, j]
            for a in range(hd):
                acc += h_prev[a] * w[a, j]
            z[gate] = acc
        f = scalar_sigmoid(z["f"])
        i = scalar_sigmoid(z["i"])
        o = scalar_sigmoid(z["o"])
        g = math.tanh(z["g"])
        c = f * c_prev[j] + i * g
        if variant == "sigmoid_cell":
            c = scalar_sigmoid(c)
        out_c[j] = c
        out_h[j] = math.tanh(c) * o
    return out_h, out_c


def zero_params(d, hd):
    kw = {}
    for gate in GATES:
        kw[f"U_{gate}"] = np.zeros((d, hd))
        kw[f"W_{gate}"] = np.zeros((hd, hd))
        kw[f"b_{gate}"] = np.zeros(hd)
    return nn.LstmParams(**kw)


class TestCellStep:
    def test_all_zero(self):
        p = zero_params(2, 3)
        state = nn.lstm_cell_step(np.zeros(2), nn.LstmState.zeros(3), p)
        assert np.allclose(state.C, 0.0)
        assert np.allclose(state.h, 0.0)

    def test_saturated_candidate(self):
        # b_g large: candidate -> 1, so C -> i*1 = 0.5 and h = tanh(0.5)*0.5
        p = zero_params(2, 3)
        p.b_g[...] = 50.0
        state = nn.lstm_cell_step(np.zeros(2), nn.LstmState.zeros(3), p)
        assert np.allclose(state.C, 0.5, atol=1e-12)
        assert np.allclose(state.h, math.tanh(0.5) * 0.5, atol=1e-12)
        assert state.h[0] == pytest.approx(0.2311, abs=5e-5)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(21)
        p = nn.LstmParams.init(4, 3, rng)
        for gate in GATES:
            getattr(p, f"b_{gate}")[...] = rng.normal(size=3)
        x = rng.normal(size=4)
        prev = nn.LstmState(h=rng.normal(size=3) * 0.5, C=rng.normal(size=3))
        state = nn.lstm_cell_step(x, prev, p)
        oh, oc = oracle_cell_step(x, prev.h, prev.C, p)
        assert np.allclose(state.h, oh, atol=1e-12)
        assert np.allclose(state.C, oc, atol=1e-12)

    def test_sigmoid_variant_matches_oracle(self):
        rng = np.random.default_rng(22)
        p = nn.LstmParams.init(4, 3, rng)
        x = rng.normal(size=4)
        prev = nn.LstmState(h=rng.normal(size=3) * 0.5, C=rng.normal(size=3))
        state = nn.lstm_cell_step(x, prev, p, cell_variant=nn.CELL_SIGMOID)
        oh, oc = oracle_cell_step(x, prev.h, prev.C, p, variant="sigmoid_cell")
        assert np.allclose(state.h, oh, atol=1e-12)
        assert np.allclose(state.C, oc, atol=1e-12)
        # the squashed cell keeps C in (0, 1)
        assert np.all((state.C > 0) & (state.C < 1))

    def test_forced_carry(self):
        # saturate f -> 1 and i -> 0: the cell memory must pass through
        p = zero_params(2, 4)
        p.b_f[...] = 50.0
        p.b_i[...] = -50.0
        prev = nn.LstmState(h=np.zeros(4), C=np.array([0.3, -0.7, 1.2, 0.0]))
        state = nn.lstm_cell_step(np.ones(2) * 0.1, prev, p)
        assert np.allclose(state.C, prev.C, atol=1e-6)

    def test_gate_ranges(self):
        rng = np.random.default_rng(23)
        p = nn.LstmParams.init(3, 5, rng)
        state = nn.LstmState.zeros(5)
        for _ in range(20):
            state = nn.lstm_cell_step(rng.normal(size=3) * 3, state, p)
            assert np.all(np.abs(state.h) <= 1.0)

    def test_dim_mismatch(self):
        p = zero_params(2, 3)
        with pytest.raises(nn.ShapeError):
            nn.lstm_cell_step(np.zeros(5), nn.LstmState.zeros(3), p)
        with pytest.raises(nn.ShapeError):
            nn.lstm_cell_step(np.zeros(2), nn.LstmState.zeros(4), p)


class TestLstmLayer:
    def test_matches_cell_step_sequence(self):
        rng = np.random.default_rng(31)
        layer = nn.LstmLayer(3, 4, return_sequences=True, rng=rng)
        x = rng.normal(size=(2, 5, 3))
        out = layer.forward(x)
        for b in range(2):
            state = nn.LstmState.zeros(4)
            for t in range(5):
                state = nn.lstm_cell_step(x[b, t], state, layer.p)
                assert np.allclose(out[b, t], state.h, atol=1e-12)

    def test_last_output_mode(self):
        rng = np.random.default_rng(32)
        seq = nn.LstmLayer(3, 4, return_sequences=True, rng=np.random.default_rng(32))
        last = nn.LstmLayer(3, 4, return_sequences=False, rng=np.random.default_rng(32))
        x = rng.normal(size=(2, 6, 3))
        assert np.allclose(seq.forward(x)[:, -1, :], last.forward(x))

    def test_forget_bias_is_one(self):
        layer = nn.LstmLayer(3, 4)
        assert np.all(layer.p.b_f == 1.0)
        assert np.all(layer.p.b_i == 0.0)

    def test_stacked_backward_shapes(self):
        rng = np.random.default_rng(33)
        net = nn.Sequential([
            nn.LstmLayer(3, 5, return_sequences=True, rng=rng),
            nn.LstmLayer(5, 4, rng=rng),
            nn.Dense(4, 1, rng=rng),
        ])
        x = rng.normal(size=(2, 7, 3))
        out = net.forward(x)
        assert out.shape == (2, 1)
        gx = net.backward(np.ones_like(out))
        assert gx.shape == x.shape

    def test_deterministic_forward(self):
        x = np.random.default_rng(34).normal(size=(1, 4, 3))
        a = nn.LstmLayer(3, 4, rng=np.random.default_rng(7)).forward(x)
        b = nn.LstmLayer(3, 4, rng=np.random.default_rng(7)).forward(x)
        assert np.array_equal(a, b)
