"""Ordered-neurons LSTM cell with cumax master gates, unrolled over a sequence.

The six gate pre-activations are packed side by side along the last axis of
``W`` (d x 6n), ``U`` (n x 6n) and ``b`` (6n) in the order
forget, input, output, candidate, master-forget, master-input.
"""

from __future__ import annotations

import numpy as np

from .numeric import (
    DTYPE,
    Parameter,
    ShapeError,
    check_finite,
    cumax,
    cumax_backward,
    sigmoid,
)

GATES = ("f", "i", "o", "c", "mf", "mi")


class ONLSTMParams:
    def __init__(self, W, U, b, prefix="onlstm"):
        self.W = Parameter(f"{prefix}.W", W)
        self.U = Parameter(f"{prefix}.U", U)
        self.b = Parameter(f"{prefix}.b", b)
        d, six_n = self.W.shape
        n = six_n // 6
        if six_n != 6 * n or self.U.shape != (n, 6 * n) or self.b.shape != (6 * n,):
            raise ShapeError(f"inconsistent ONLSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")
        self.input_size, self.hidden_size = d, n

    @property
    def params(self) -> list[Parameter]:
        return [self.W, self.U, self.b]

    def gate(self, name: str):
        """``(W_g, U_g, b_g)`` views for one gate."""
        k, n = GATES.index(name), self.hidden_size
        sl = slice(k * n, (k + 1) * n)
        return self.W.value[:, sl], self.U.value[:, sl], self.b.value[sl]

    def copy(self) -> "ONLSTMParams":
        return ONLSTMParams(self.W.value.copy(), self.U.value.copy(), self.b.value.copy(),
                            prefix=self.W.name.rsplit(".", 1)[0])

    def equals(self, other: "ONLSTMParams") -> bool:
        return all(np.array_equal(a.value, b.value) for a, b in zip(self.params, other.params))


def _orthogonal(n, rng):
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def init_params(d: int, n: int, rng: np.random.Generator, prefix="onlstm") -> ONLSTMParams:
    """Glorot-uniform input weights, orthogonal recurrent weights, forget bias 1."""
    if d < 1 or n < 1:
        raise ValueError("input and hidden sizes must be >= 1")
    bound = np.sqrt(6.0 / (d + n))
    W = np.concatenate([rng.uniform(-bound, bound, (d, n)) for _ in GATES], axis=1)
    U = np.concatenate([_orthogonal(n, rng) for _ in GATES], axis=1)
    b = np.zeros(6 * n)
    b[:n] = 1.0
    return ONLSTMParams(W, U, b, prefix)


def count_params(params_or_d, n: int | None = None) -> int:
    """``6 (d n + n^2 + n)``; accepts an :class:`ONLSTMParams` or ``(d, n)``."""
    if isinstance(params_or_d, ONLSTMParams):
        d, n = params_or_d.input_size, params_or_d.hidden_size
    else:
        d = params_or_d
    return 6 * (d * n + n * n + n)


def cell_step(x, h_prev, c_prev, p: ONLSTMParams):
    """One timestep for a batch. Returns ``(h, c, cache)``."""
    n = p.hidden_size
    if x.shape[-1] != p.input_size or h_prev.shape[-1] != n or c_prev.shape != h_prev.shape:
        raise ShapeError(f"cell_step: x{x.shape} h{h_prev.shape} c{c_prev.shape} for d={p.input_size}, n={n}")
    z = x @ p.W.value + h_prev @ p.U.value + p.b.value
    f = sigmoid(z[..., :n])
    i = sigmoid(z[..., n:2 * n])
    o = sigmoid(z[..., 2 * n:3 * n])
    g = np.tanh(z[..., 3 * n:4 * n])
    mf, s_mf = cumax(z[..., 4 * n:5 * n])
    cmi, s_mi = cumax(z[..., 5 * n:])
    mi = 1.0 - cmi
    w = mf * mi
    fh = f * w + (mf - w)
    ih = i * w + (mi - w)
    c = fh * c_prev + ih * g
    tc = np.tanh(c)
    h = o * tc
    check_finite(c, "onlstm cell")
    cache = (x, h_prev, c_prev, f, i, o, g, mf, mi, s_mf, s_mi, w, fh, ih, tc)
    return h, c, cache


def cell_step_backward(dh, dc, cache, p: ONLSTMParams):
    """Accumulates into ``p``'s grads; returns ``(dx, dh_prev, dc_prev)``."""
    x, h_prev, c_prev, f, i, o, g, mf, mi, s_mf, s_mi, w, fh, ih, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    dfh = dc * c_prev
    dih = dc * g
    dc_prev = dc * fh
    dg = dc * ih
    dw = dfh * (f - 1.0) + dih * (i - 1.0)
    dmf = dfh + dw * mi
    dmi = dih + dw * mf
    dz = np.concatenate([
        dfh * w * f * (1.0 - f),
        dih * w * i * (1.0 - i),
        do * o * (1.0 - o),
        dg * (1.0 - g * g),
        cumax_backward(dmf, s_mf),
        cumax_backward(-dmi, s_mi),
    ], axis=-1)
    p.W.grad += x.T @ dz
    p.U.grad += h_prev.T @ dz
    p.b.grad += dz.sum(axis=0)
    return dz @ p.W.value.T, dz @ p.U.value.T, dc_prev


def sequence_forward(X, mask, p: ONLSTMParams):
    """Run the cell left to right over ``X`` (batch x time x d).

    At masked timesteps the state is carried through unchanged and the
    emitted output is zero. Returns ``(H, cache)`` with ``H`` batch x time x n.
    """
    B, T, d = X.shape
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (B, T) or d != p.input_size:
        raise ShapeError(f"sequence_forward: X{X.shape} mask{mask.shape} d={p.input_size}")
    n = p.hidden_size
    h = np.zeros((B, n), dtype=DTYPE)
    c = np.zeros((B, n), dtype=DTYPE)
    H = np.zeros((B, T, n), dtype=DTYPE)
    caches = []
    for t in range(T):
        m = mask[:, t:t + 1]
        if not m.any():
            caches.append(None)
            continue
        h_new, c_new, cache = cell_step(X[:, t], h, c, p)
        H[:, t] = np.where(m, h_new, 0.0)
        h = np.where(m, h_new, h)
        c = np.where(m, c_new, c)
        caches.append((m, cache))
    return H, caches


def sequence_backward(dH, caches, p: ONLSTMParams):
    """Backprop through time; returns ``dX`` and accumulates parameter grads."""
    B, T, n = dH.shape
    dX = np.zeros((B, T, p.input_size), dtype=DTYPE)
    dh = np.zeros((B, n), dtype=DTYPE)
    dc = np.zeros((B, n), dtype=DTYPE)
    for t in reversed(range(T)):
        entry = caches[t]
        if entry is None:
            continue
        m, cache = entry
        dh_step = np.where(m, dh + dH[:, t], 0.0)
        dc_step = np.where(m, dc, 0.0)
        dx, dh_prev, dc_prev = cell_step_backward(dh_step, dc_step, cache, p)
        dX[:, t] = dx
        dh = np.where(m, dh_prev, dh)
        dc = np.where(m, dc_prev, dc)
    return dX
