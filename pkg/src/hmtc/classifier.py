"""Per-level model: embed, dropout, ONLSTM, max-pool, batch-norm, tanh MLP, softmax."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numeric as nm
from . import onlstm
from .corpus import EmbeddingMatrix, LevelBatch
from .numeric import BatchNormState, Parameter


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, (fan_in, fan_out))


@dataclass
class ForwardResult:
    probs: np.ndarray
    pooled: np.ndarray
    logits: np.ndarray
    cache: tuple = field(repr=False, default=None)


class LevelClassifier:
    def __init__(self, level: int, embeddings: EmbeddingMatrix, categories,
                 hidden: int = 512, mlp_units: int = 500, rng=None,
                 onlstm_params: onlstm.ONLSTMParams | None = None,
                 input_dropout: float = 0.25, hidden_dropout: float = 0.5):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.level = level
        self.embeddings = embeddings
        self.categories = list(categories)
        self.class_index = {c: i for i, c in enumerate(self.categories)}
        self.input_dropout = input_dropout
        self.hidden_dropout = hidden_dropout
        d, k = embeddings.dim, len(self.categories)
        if onlstm_params is None:
            onlstm_params = onlstm.init_params(d, hidden, rng)
        elif onlstm_params.input_size != d:
            raise nm.ShapeError(f"transferred ONLSTM expects d={onlstm_params.input_size}, embeddings have d={d}")
        self.rnn = onlstm_params
        n = self.rnn.hidden_size
        self.bn = BatchNormState.create(n, prefix="bn")
        self.W1 = Parameter("mlp.W1", _glorot(rng, n, mlp_units))
        self.b1 = Parameter("mlp.b1", np.zeros(mlp_units))
        self.W2 = Parameter("mlp.W2", _glorot(rng, mlp_units, k))
        self.b2 = Parameter("mlp.b2", np.zeros(k))

    @property
    def hidden_size(self):
        return self.rnn.hidden_size

    @property
    def mlp_units(self):
        return self.W1.shape[1]

    @property
    def num_classes(self):
        return len(self.categories)

    @property
    def params(self) -> list[Parameter]:
        """Trainable parameters. The embedding matrix is not one of them."""
        return [*self.rnn.params, self.bn.gamma, self.bn.beta, self.W1, self.b1, self.W2, self.b2]

    def state(self) -> dict[str, np.ndarray]:
        """Every stored array, trainable or not, by name."""
        out = {p.name: p.value for p in self.params}
        out["bn.running_mean"] = self.bn.running_mean
        out["bn.running_var"] = self.bn.running_var
        return out

    def load_state(self, state):
        for p in self.params:
            if state[p.name].shape != p.shape:
                raise nm.ShapeError(f"{p.name}: stored {state[p.name].shape}, expected {p.shape}")
            p.value[...] = state[p.name]
        self.bn.running_mean[...] = state["bn.running_mean"]
        self.bn.running_var[...] = state["bn.running_var"]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state().items()}

    def count_params(self) -> dict[str, int]:
        return count_params(self.embeddings.dim, self.hidden_size, self.mlp_units, self.num_classes)

    # -- forward / backward ---------------------------------------------------

    def forward(self, batch: LevelBatch, training: bool = False, rng=None,
                update_stats: bool = True) -> ForwardResult:
        ids, mask = batch.ids, batch.mask
        if not np.all(mask.any(axis=1)):
            raise ValueError("batch contains an all-padding example")
        # trailing all-PAD columns are inert: state is carried, outputs masked
        T = int(np.max(np.nonzero(mask.any(axis=0))[0])) + 1
        ids, mask = ids[:, :T], mask[:, :T]

        x = self.embeddings.lookup(ids)
        x, drop_in = nm.dropout(x, self.input_dropout, training, rng)
        H, rnn_cache = onlstm.sequence_forward(x, mask, self.rnn)
        pooled, pool_idx = nm.global_max_pool(H, mask)
        normed, bn_cache = nm.batch_norm(pooled, self.bn, training, update_stats)
        hidden = np.tanh(normed @ self.W1.value + self.b1.value)
        dropped, drop_h = nm.dropout(hidden, self.hidden_dropout, training, rng)
        logits = dropped @ self.W2.value + self.b2.value
        probs = nm.softmax(logits)
        cache = (T, drop_in, rnn_cache, pool_idx, bn_cache, normed, hidden, dropped, drop_h)
        return ForwardResult(probs, pooled, logits, cache)

    def backward(self, result: ForwardResult, dlogits):
        T, drop_in, rnn_cache, pool_idx, bn_cache, normed, hidden, dropped, drop_h = result.cache
        self.W2.grad += dropped.T @ dlogits
        self.b2.grad += dlogits.sum(axis=0)
        dhidden = nm.dropout_backward(dlogits @ self.W2.value.T, drop_h)
        dpre = nm.tanh_backward(dhidden, hidden)
        self.W1.grad += normed.T @ dpre
        self.b1.grad += dpre.sum(axis=0)
        dpooled = nm.batch_norm_backward(dpre @ self.W1.value.T, bn_cache, self.bn)
        dH = nm.global_max_pool_backward(dpooled, pool_idx, T)
        onlstm.sequence_backward(dH, rnn_cache, self.rnn)
        # gradient w.r.t. the embedded inputs stops here: embeddings are frozen

    def loss_and_grads(self, batch: LevelBatch, rng=None, training: bool = True):
        """Summed cross-entropy over the batch; grads accumulate on ``params``."""
        res = self.forward(batch, training=training, rng=rng)
        loss, probs, dlogits = nm.softmax_cross_entropy(res.logits, batch.targets)
        self.backward(res, dlogits)
        return loss, res

    def loss(self, batch: LevelBatch) -> float:
        res = self.forward(batch, training=False)
        loss, _ = nm.cross_entropy(res.probs, batch.targets)
        return loss

    def predict(self, batch: LevelBatch):
        """Argmax class indices (lowest index on ties) and probability rows."""
        probs = self.forward(batch, training=False).probs
        return np.argmax(probs, axis=1), probs


def count_params(d: int, n: int, u: int, k: int) -> dict[str, int]:
    """Trainable scalars per layer; the frozen embedding is excluded."""
    out = {
        "onlstm": onlstm.count_params(d, n),
        "batch_norm": 2 * n,
        "mlp": n * u + u + u * k + k,
    }
    out["total"] = sum(out.values())
    return out
