"""Dense array primitives with hand-written backward rules.

Every differentiable op comes as a ``forward`` / ``*_backward`` pair in the
usual cache style: the forward returns what the backward needs, and the
backward maps an upstream gradient to input gradients.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float64
PROB_FLOOR = 1e-12


class NumericError(FloatingPointError):
    """Raised when a non-finite value would escape an operation."""


class ShapeError(ValueError):
    pass


def check_finite(x: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{op}: non-finite values in output")
    return x


def make_rng(seed: int, *names) -> np.random.Generator:
    """Named sub-stream of a run seed.

    ``make_rng(7, "init", 2)`` and ``make_rng(7, "dropout", 2)`` are
    independent generators; the same arguments always give the same stream.
    """
    key = [int(seed) & 0xFFFFFFFF]
    for name in names:
        if isinstance(name, (int, np.integer)):
            key.append(int(name) & 0xFFFFFFFF)
        else:
            key.append(zlib.crc32(str(name).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(key))


# -- parameters ---------------------------------------------------------------


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=DTYPE)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self):
        self.grad[...] = 0.0

    def copy(self) -> "Parameter":
        return Parameter(self.name, self.value.copy())


# -- elementwise / linear -----------------------------------------------------


def _check_matmul(a, b):
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")


def matmul(a, b):
    _check_matmul(a, b)
    return a @ b


def matmul_backward(dout, a, b):
    """Gradients of ``a @ b`` for 2-D ``a`` (batch x k) and ``b`` (k x m)."""
    return dout @ b.T, a.T @ dout


def add(a, b):
    """Elementwise add; ``b`` may be a row vector broadcast over the batch axis."""
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"add: {a.shape} + {b.shape}")
    return a + b


def add_backward(dout, a_shape, b_shape):
    return dout.reshape(a_shape), _reduce_to(dout, b_shape)


def mul(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"mul: {a.shape} * {b.shape}")
    return a * b


def mul_backward(dout, a, b):
    return _reduce_to(dout * b, np.shape(a)), _reduce_to(dout * a, np.shape(b))


def _reduce_to(g, shape):
    shape = tuple(shape)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dout, y):
    return dout * y * (1.0 - y)


def tanh(x):
    return np.tanh(x)


def tanh_backward(dout, y):
    return dout * (1.0 - y * y)


# -- normalised activations ---------------------------------------------------


def softmax(x, axis=-1):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return check_finite(e / e.sum(axis=axis, keepdims=True), "softmax")


def softmax_backward(dout, s, axis=-1):
    return s * (dout - np.sum(dout * s, axis=axis, keepdims=True))


def cumax(x, axis=-1):
    """Cumulative sum of a softmax along ``axis``.

    Returns ``(y, s)``: the cumax output and the softmax it was built from.
    The last element is pinned to exactly 1 to remove cumsum round-off.
    """
    s = softmax(x, axis=axis)
    y = np.cumsum(s, axis=axis)
    y = np.minimum(y, 1.0)
    last = [slice(None)] * y.ndim
    last[axis] = -1
    y[tuple(last)] = 1.0
    return y, s


def cumax_backward(dout, s, axis=-1):
    # d/ds_k of sum_j dy_j * y_j with y_j = sum_{i<=j} s_i  ->  sum_{j>=k} dy_j
    ds = np.flip(np.cumsum(np.flip(dout, axis=axis), axis=axis), axis=axis)
    return softmax_backward(ds, s, axis=axis)


# -- pooling, dropout, normalisation ------------------------------------------


def global_max_pool(h, mask):
    """Per-feature max over the valid timesteps of ``h`` (batch x time x hidden)."""
    mask = np.asarray(mask, dtype=bool)
    if h.shape[:2] != mask.shape:
        raise ShapeError(f"global_max_pool: h {h.shape} vs mask {mask.shape}")
    if not np.all(mask.any(axis=1)):
        raise ValueError("global_max_pool: a row has no valid timestep")
    masked = np.where(mask[:, :, None], h, -np.inf)
    idx = np.argmax(masked, axis=1)  # first occurrence on ties
    out = np.take_along_axis(masked, idx[:, None, :], axis=1)[:, 0, :]
    return out, idx


def global_max_pool_backward(dout, idx, time_steps):
    b, n = dout.shape
    dh = np.zeros((b, time_steps, n), dtype=DTYPE)
    np.put_along_axis(dh, idx[:, None, :], dout[:, None, :], axis=1)
    return dh


def dropout(x, rate, training, rng):
    """Inverted dropout. Returns ``(out, mask)``; mask is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(DTYPE) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


@dataclass
class BatchNormState:
    gamma: Parameter
    beta: Parameter
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-3

    @classmethod
    def create(cls, features: int, prefix: str = "bn", momentum=0.9, eps=1e-3):
        return cls(
            Parameter(f"{prefix}.gamma", np.ones(features)),
            Parameter(f"{prefix}.beta", np.zeros(features)),
            np.zeros(features, dtype=DTYPE),
            np.ones(features, dtype=DTYPE),
            momentum,
            eps,
        )


def batch_norm(x, bn: BatchNormState, training: bool, update_stats: bool = True):
    """Batch normalisation over the batch axis of ``x`` (batch x features).

    ``momentum`` weights the old running statistic, Keras style.
    """
    if training:
        if x.shape[0] < 2:
            raise ValueError("batch_norm: training mode needs a batch of at least 2")
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        if update_stats:
            m = bn.momentum
            bn.running_mean[...] = m * bn.running_mean + (1 - m) * mu
            bn.running_var[...] = m * bn.running_var + (1 - m) * var
    else:
        mu, var = bn.running_mean, bn.running_var
    inv_std = 1.0 / np.sqrt(var + bn.eps)
    xhat = (x - mu) * inv_std
    out = bn.gamma.value * xhat + bn.beta.value
    return out, (xhat, inv_std, training)


def batch_norm_backward(dout, cache, bn: BatchNormState):
    xhat, inv_std, training = cache
    bn.gamma.grad += np.sum(dout * xhat, axis=0)
    bn.beta.grad += np.sum(dout, axis=0)
    dxhat = dout * bn.gamma.value
    if not training:
        return dxhat * inv_std
    n = dout.shape[0]
    return (inv_std / n) * (
        n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
    )


# -- loss ---------------------------------------------------------------------


def cross_entropy(pred, true_idx):
    """Summed cross-entropy of probability rows ``pred`` against class indices.

    Returns ``(loss, dpred)``.
    """
    pred = np.asarray(pred, dtype=DTYPE)
    true_idx = np.asarray(true_idx)
    n, k = pred.shape
    if true_idx.shape != (n,) or np.any(true_idx < 0) or np.any(true_idx >= k):
        raise ValueError("cross_entropy: class index out of range")
    if not np.allclose(pred.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("cross_entropy: rows must sum to 1")
    rows = np.arange(n)
    p = np.maximum(pred[rows, true_idx], PROB_FLOOR)
    loss = float(-np.sum(np.log(p)))
    dpred = np.zeros_like(pred)
    dpred[rows, true_idx] = -1.0 / p
    return loss, dpred


def softmax_cross_entropy(logits, true_idx):
    """Softmax followed by summed cross-entropy; gradient in the (p - y) form."""
    probs = softmax(logits, axis=-1)
    loss, _ = cross_entropy(probs, true_idx)
    dlogits = probs.copy()
    dlogits[np.arange(len(true_idx)), true_idx] -= 1.0
    return loss, probs, dlogits


# -- optimiser ----------------------------------------------------------------


class AdamState:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {id(p): np.zeros_like(p.value) for p in params}
        self.v = {id(p): np.zeros_like(p.value) for p in params}

    def step(self, params, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p in params:
            m, v = self.m[id(p)], self.v[id(p)]
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.zero_grad()


def adam_step(params, state: AdamState, lr: float):
    state.step(params, lr)


# -- gradient checking --------------------------------------------------------


def numerical_gradient(f, x: np.ndarray, eps=1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. array ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"], op_flags=["readwrite"])
    while not it.finished:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * eps)
        it.iternext()
    return grad


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=DTYPE)
    n = np.asarray(numeric, dtype=DTYPE)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def finite_difference_check(forward, params, eps=1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``forward()`` returns a scalar loss and accumulates the analytic gradient
    into each ``Parameter.grad``. Grads are zeroed before every call.
    """
    params = list(params)

    def run():
        for p in params:
            p.zero_grad()
        return forward()

    run()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        num = numerical_gradient(run, p.value, eps)
        worst = max(worst, relative_error(a, num))
    for p in params:
        p.zero_grad()
    return worst
