"""Small float64 recurrent networks with hand-derived backward passes.

Conventions (fixed so serialized models stay portable):
  * inputs are batch-first arrays (B, T, D)
  * cell inputs are concatenated [x; h] in that order
  * LSTM gate order inside the packed weight matrix: forget, input,
    candidate, output
  * GRU uses a retain gate z: h' = z * h + (1 - z) * candidate, with the
    candidate computed from [x; r * h]
  * parameter init: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded

The only gradient contract is equivalence with central finite differences
(see grad_check); everything runs at float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

FORMAT_VERSION = 1
LSTM_GATE_ORDER = "forget,input,candidate,output"
GRU_GATE_ORDER = "retain,reset,candidate"


def _init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    """Affine layer y = x @ W + b over the trailing axis."""

    def __init__(self, n_in, n_out, rng=None):
        self.n_in, self.n_out = n_in, n_out
        if rng is None:
            self.W = np.zeros((n_in, n_out))
            self.b = np.zeros(n_out)
        else:
            self.W = _init(rng, (n_in, n_out), n_in)
            self.b = _init(rng, (n_out,), n_in)
        self.zero_grad()

    def zero_grad(self):
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def forward(self, x):
        self._x = x
        return x @ self.W + self.b

    def backward(self, dy):
        x2 = self._x.reshape(-1, self.n_in)
        dy2 = dy.reshape(-1, self.n_out)
        self.dW += x2.T @ dy2
        self.db += dy2.sum(axis=0)
        return dy @ self.W.T

    def parameters(self):
        return [("W", self.W), ("b", self.b)]

    def gradients(self):
        return [("W", self.dW), ("b", self.db)]

    def to_dict(self):
        return {"type": "dense", "n_in": self.n_in, "n_out": self.n_out,
                "W": self.W.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d):
        layer = cls(d["n_in"], d["n_out"])
        layer.W = np.asarray(d["W"], dtype=float)
        layer.b = np.asarray(d["b"], dtype=float)
        return layer


class LSTMCell:
    """Single LSTM layer unrolled over time.

    f = sig(Wf [x;h] + bf); i = sig(Wi [x;h] + bi); g = tanh(Wc [x;h] + bc)
    c' = f * c + i * g; o = sig(Wo [x;h] + bo); h' = o * tanh(c')
    """

    kind = "lstm"

    def __init__(self, n_in, n_hidden, rng=None):
        self.n_in, self.n_hidden = n_in, n_hidden
        fan_in = n_in + n_hidden
        if rng is None:
            self.W = np.zeros((fan_in, 4 * n_hidden))
            self.b = np.zeros(4 * n_hidden)
        else:
            self.W = _init(rng, (fan_in, 4 * n_hidden), fan_in)
            self.b = _init(rng, (4 * n_hidden,), fan_in)
        self.zero_grad()

    def zero_grad(self):
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def step(self, x_t, h, c):
        """One time step; returns (h', c'). No caching (inference helper)."""
        H = self.n_hidden
        a = np.concatenate([x_t, h], axis=-1) @ self.W + self.b
        f = sigmoid(a[..., :H])
        i = sigmoid(a[..., H:2 * H])
        g = np.tanh(a[..., 2 * H:3 * H])
        o = sigmoid(a[..., 3 * H:])
        c_new = f * c + i * g
        return o * np.tanh(c_new), c_new

    def forward_seq(self, x):
        # input projections for all timesteps in one matmul; the loop only
        # carries the recurrent part
        B, T, D = x.shape
        H = self.n_hidden
        Wh = self.W[D:]
        ax = (x.reshape(B * T, D) @ self.W[:D]).reshape(B, T, 4 * H) + self.b
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, T, H))
        self._cache = []
        for t in range(T):
            a = ax[:, t] + h @ Wh
            f = sigmoid(a[:, :H])
            i = sigmoid(a[:, H:2 * H])
            g = np.tanh(a[:, 2 * H:3 * H])
            o = sigmoid(a[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h = o * tc
            self._cache.append((f, i, g, o, c, tc))
            c = c_new
            hs[:, t] = h
        self._x = x
        self._hs = hs
        return hs

    def backward_seq(self, dh_seq):
        B, T, H = dh_seq.shape
        D = self.n_in
        Wh = self.W[D:]
        da_all = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            f, i, g, o, c_prev, tc = self._cache[t]
            dh = dh_seq[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            df = dc * c_prev
            di = dc * g
            dg = dc * i
            dc_next = dc * f
            da = da_all[:, t]
            da[:, :H] = df * f * (1 - f)
            da[:, H:2 * H] = di * i * (1 - i)
            da[:, 2 * H:3 * H] = dg * (1 - g * g)
            da[:, 3 * H:] = do * o * (1 - o)
            dh_next = da @ Wh.T
        # weight/bias gradients batched over every timestep at once
        x2 = self._x.reshape(B * T, D)
        da2 = da_all.reshape(B * T, 4 * H)
        h_prev = np.zeros((B, T, H))
        h_prev[:, 1:] = self._hs[:, :-1]
        self.dW[:D] += x2.T @ da2
        self.dW[D:] += h_prev.reshape(B * T, H).T @ da2
        self.db += da2.sum(axis=0)
        return (da2 @ self.W[:D].T).reshape(B, T, D)

    def parameters(self):
        return [("W", self.W), ("b", self.b)]

    def gradients(self):
        return [("W", self.dW), ("b", self.db)]

    def to_dict(self):
        return {"type": "lstm", "n_in": self.n_in, "n_hidden": self.n_hidden,
                "gate_order": LSTM_GATE_ORDER,
                "W": self.W.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d):
        cell = cls(d["n_in"], d["n_hidden"])
        cell.W = np.asarray(d["W"], dtype=float)
        cell.b = np.asarray(d["b"], dtype=float)
        return cell


class GRUCell:
    """Single GRU layer unrolled over time.

    z = sig(Wz [x;h] + bz)   (retain gate)
    r = sig(Wr [x;h] + br)
    g = tanh(Wc [x; r*h] + bc)
    h' = z * h + (1 - z) * g
    """

    kind = "gru"

    def __init__(self, n_in, n_hidden, rng=None):
        self.n_in, self.n_hidden = n_in, n_hidden
        fan_in = n_in + n_hidden
        if rng is None:
            self.Wg = np.zeros((fan_in, 2 * n_hidden))
            self.bg = np.zeros(2 * n_hidden)
            self.Wc = np.zeros((fan_in, n_hidden))
            self.bc = np.zeros(n_hidden)
        else:
            self.Wg = _init(rng, (fan_in, 2 * n_hidden), fan_in)
            self.bg = _init(rng, (2 * n_hidden,), fan_in)
            self.Wc = _init(rng, (fan_in, n_hidden), fan_in)
            self.bc = _init(rng, (n_hidden,), fan_in)
        self.zero_grad()

    def zero_grad(self):
        self.dWg = np.zeros_like(self.Wg)
        self.dbg = np.zeros_like(self.bg)
        self.dWc = np.zeros_like(self.Wc)
        self.dbc = np.zeros_like(self.bc)

    def step(self, x_t, h):
        H = self.n_hidden
        zr = sigmoid(np.concatenate([x_t, h], axis=-1) @ self.Wg + self.bg)
        z, r = zr[..., :H], zr[..., H:]
        g = np.tanh(np.concatenate([x_t, r * h], axis=-1) @ self.Wc + self.bc)
        return z * h + (1.0 - z) * g

    def forward_seq(self, x):
        # input projections for all timesteps in one matmul; the loop only
        # carries the recurrent part
        B, T, D = x.shape
        H = self.n_hidden
        Wgh, Wch = self.Wg[D:], self.Wc[D:]
        ag = (x.reshape(B * T, D) @ self.Wg[:D]).reshape(B, T, 2 * H) + self.bg
        ac = (x.reshape(B * T, D) @ self.Wc[:D]).reshape(B, T, H) + self.bc
        h = np.zeros((B, H))
        hs = np.empty((B, T, H))
        rh_all = np.empty((B, T, H))
        self._cache = []
        for t in range(T):
            zr = sigmoid(ag[:, t] + h @ Wgh)
            z, r = zr[:, :H], zr[:, H:]
            rh = r * h
            rh_all[:, t] = rh
            g = np.tanh(ac[:, t] + rh @ Wch)
            h_new = z * h + (1.0 - z) * g
            self._cache.append((z, r, g, h))
            h = h_new
            hs[:, t] = h
        self._x = x
        self._hs = hs
        self._rh = rh_all
        return hs

    def backward_seq(self, dh_seq):
        B, T, H = dh_seq.shape
        D = self.n_in
        Wgh, Wch = self.Wg[D:], self.Wc[D:]
        da_all = np.empty((B, T, 2 * H))
        dac_all = np.empty((B, T, H))
        dh_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            z, r, g, h_prev = self._cache[t]
            dh = dh_seq[:, t] + dh_next
            dz = dh * (h_prev - g)
            dg = dh * (1.0 - z)
            dh_prev = dh * z
            dac = dg * (1.0 - g * g)
            dac_all[:, t] = dac
            drh = dac @ Wch.T
            dr = drh * h_prev
            dh_prev += drh * r
            da = da_all[:, t]
            da[:, :H] = dz * z * (1 - z)
            da[:, H:] = dr * r * (1 - r)
            dh_next = dh_prev + da @ Wgh.T
        # weight/bias gradients batched over every timestep at once
        x2 = self._x.reshape(B * T, D)
        da2 = da_all.reshape(B * T, 2 * H)
        dac2 = dac_all.reshape(B * T, H)
        h_prev_all = np.zeros((B, T, H))
        h_prev_all[:, 1:] = self._hs[:, :-1]
        self.dWg[:D] += x2.T @ da2
        self.dWg[D:] += h_prev_all.reshape(B * T, H).T @ da2
        self.dbg += da2.sum(axis=0)
        self.dWc[:D] += x2.T @ dac2
        self.dWc[D:] += self._rh.reshape(B * T, H).T @ dac2
        self.dbc += dac2.sum(axis=0)
        return (da2 @ self.Wg[:D].T + dac2 @ self.Wc[:D].T).reshape(B, T, D)

    def parameters(self):
        return [("Wg", self.Wg), ("bg", self.bg), ("Wc", self.Wc), ("bc", self.bc)]

    def gradients(self):
        return [("Wg", self.dWg), ("bg", self.dbg), ("Wc", self.dWc), ("bc", self.dbc)]

    def to_dict(self):
        return {"type": "gru", "n_in": self.n_in, "n_hidden": self.n_hidden,
                "gate_order": GRU_GATE_ORDER,
                "Wg": self.Wg.tolist(), "bg": self.bg.tolist(),
                "Wc": self.Wc.tolist(), "bc": self.bc.tolist()}

    @classmethod
    def from_dict(cls, d):
        cell = cls(d["n_in"], d["n_hidden"])
        cell.Wg = np.asarray(d["Wg"], dtype=float)
        cell.bg = np.asarray(d["bg"], dtype=float)
        cell.Wc = np.asarray(d["Wc"], dtype=float)
        cell.bc = np.asarray(d["bc"], dtype=float)
        return cell


_CELL_TYPES = {"lstm": LSTMCell, "gru": GRUCell}


class RecurrentNetwork:
    """Layered recurrent stack plus a dense head.

    return_sequence=True applies the head per time step and yields
    (B, T, out); return_sequence=False applies it to the final hidden state
    and yields (B, out).  head_activation in {linear, sigmoid, tanh}.
    """

    def __init__(self, cells, head, head_activation="linear", return_sequence=True):
        if head_activation not in ("linear", "sigmoid", "tanh"):
            raise ValueError(f"unknown activation {head_activation!r}")
        self.cells = list(cells)
        self.head = head
        self.head_activation = head_activation
        self.return_sequence = return_sequence

    @classmethod
    def build(cls, cell_kind, n_in, n_hidden, n_layers, n_out, rng,
              head_activation="linear", return_sequence=True):
        cell_cls = _CELL_TYPES[cell_kind]
        cells = []
        d = n_in
        for _ in range(n_layers):
            cells.append(cell_cls(d, n_hidden, rng))
            d = n_hidden
        head = Dense(d, n_out, rng)
        return cls(cells, head, head_activation, return_sequence)

    def forward(self, x):
        if x.ndim != 3:
            raise ValueError("input must be (batch, time, features)")
        n_in = self.cells[0].n_in if self.cells else self.head.n_in
        if x.shape[2] != n_in:
            raise ValueError(f"feature dim {x.shape[2]} != expected {n_in}")
        self._T = x.shape[1]
        h = x
        for cell in self.cells:
            h = cell.forward_seq(h)
        z = self.head.forward(h if self.return_sequence else h[:, -1])
        if self.head_activation == "sigmoid":
            y = sigmoid(z)
        elif self.head_activation == "tanh":
            y = np.tanh(z)
        else:
            y = z
        self._y = y
        return y

    def backward(self, dy):
        if self.head_activation == "sigmoid":
            dz = dy * self._y * (1.0 - self._y)
        elif self.head_activation == "tanh":
            dz = dy * (1.0 - self._y * self._y)
        else:
            dz = dy
        dh = self.head.backward(dz)
        if not self.return_sequence:
            B, H = dh.shape
            full = np.zeros((B, self._T, H))
            full[:, -1] = dh
            dh = full
        for cell in reversed(self.cells):
            dh = cell.backward_seq(dh)
        return dh

    def zero_grad(self):
        for cell in self.cells:
            cell.zero_grad()
        self.head.zero_grad()

    def parameters(self):
        out = []
        for k, cell in enumerate(self.cells):
            out.extend((f"cell{k}.{n}", p) for n, p in cell.parameters())
        out.extend((f"head.{n}", p) for n, p in self.head.parameters())
        return out

    def gradients(self):
        out = []
        for k, cell in enumerate(self.cells):
            out.extend((f"cell{k}.{n}", g) for n, g in cell.gradients())
        out.extend((f"head.{n}", g) for n, g in self.head.gradients())
        return out

    def num_params(self):
        return sum(p.size for _, p in self.parameters())

    def copy_params(self):
        return [p.copy() for _, p in self.parameters()]

    def load_params(self, arrays):
        for (_, p), a in zip(self.parameters(), arrays):
            p[...] = a

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "cells": [c.to_dict() for c in self.cells],
            "head": self.head.to_dict(),
            "head_activation": self.head_activation,
            "return_sequence": self.return_sequence,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError("unsupported network format version")
        cells = [_CELL_TYPES[c["type"]].from_dict(c) for c in d["cells"]]
        head = Dense.from_dict(d["head"])
        return cls(cells, head, d["head_activation"], d["return_sequence"])


# ---------------------------------------------------------------------------
# losses and optimizer


def mse_loss(pred, target):
    """Mean squared difference; returns (loss, d loss / d pred)."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def bce_loss(logits, labels, eps=1e-12):
    """Mean binary cross-entropy on sigmoid(logits) with probability
    clamping at eps; returns (loss, d loss / d logits)."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if logits.shape != labels.shape:
        raise ValueError(f"shape mismatch {logits.shape} vs {labels.shape}")
    p = np.clip(sigmoid(logits), eps, 1.0 - eps)
    loss = float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))
    return loss, (p - labels) / labels.size


@dataclass
class AdamState:
    step: int
    m: list
    v: list


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [p for _, p in params] if params and isinstance(params[0], tuple) else list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState(
            step=0,
            m=[np.zeros_like(p) for p in self.params],
            v=[np.zeros_like(p) for p in self.params],
        )

    def step(self, grads):
        grads = [g for _, g in grads] if grads and isinstance(grads[0], tuple) else list(grads)
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        st = self.state
        st.step += 1
        b1c = 1.0 - self.beta1 ** st.step
        b2c = 1.0 - self.beta2 ** st.step
        for p, g, m, v in zip(self.params, grads, st.m, st.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def adam_update(params, grads, optimizer=None, **kwargs):
    """Functional single Adam step; builds an optimizer on first use."""
    if optimizer is None:
        optimizer = Adam(params, **kwargs)
    optimizer.step(grads)
    return params, optimizer


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict
    tol: float

    @property
    def passed(self):
        return self.max_rel_error <= self.tol


def grad_check(net, inputs, targets, loss_fn=mse_loss, tol=1e-4, step=1e-5,
               max_entries_per_param=64, rng=None, abs_floor=1e-6):
    """Compare analytic gradients against central finite differences.

    Samples up to max_entries_per_param entries from each parameter array
    (all entries when the array is smaller).  Relative error is
    |a - n| / max(|a|, |n|); entries where both magnitudes fall below
    abs_floor are below the resolution of the central difference itself and
    count as exact.
    """
    if net.num_params() > 10_000:
        raise ValueError("grad_check is meant for small networks (<= 1e4 params)")
    if rng is None:
        rng = np.random.default_rng(0)

    def loss_only():
        y = net.forward(inputs)
        loss, _ = loss_fn(y, targets)
        return loss

    net.zero_grad()
    y = net.forward(inputs)
    _, dy = loss_fn(y, targets)
    net.backward(dy)
    analytic = {name: g.copy() for name, g in net.gradients()}

    per_param = {}
    worst = 0.0
    for name, p in net.parameters():
        flat = p.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= max_entries_per_param else rng.choice(
            n, size=max_entries_per_param, replace=False)
        a_flat = analytic[name].reshape(-1)
        err = 0.0
        for j in idx:
            orig = flat[j]
            flat[j] = orig + step
            lp = loss_only()
            flat[j] = orig - step
            lm = loss_only()
            flat[j] = orig
            num = (lp - lm) / (2.0 * step)
            scale = max(abs(a_flat[j]), abs(num))
            rel = 0.0 if scale < abs_floor else abs(a_flat[j] - num) / scale
            err = max(err, rel)
        per_param[name] = err
        worst = max(worst, err)
    return GradCheckReport(max_rel_error=worst, per_param=per_param, tol=tol)
