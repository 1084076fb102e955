# # Checking hand-written backward passes
#
# Every layer has a forward function that returns a cache and a backward
# function that consumes it. Here each one is compared with central
# differences.

import numpy as np

from hmtc import numeric as nm
from hmtc.classifier import LevelClassifier
from hmtc.corpus import EmbeddingMatrix, LevelBatch, Vocabulary
from hmtc.onlstm import ONLSTMParams, sequence_backward, sequence_forward

rng = np.random.default_rng(0)

# ## cumax

x = nm.Parameter("x", rng.standard_normal((2, 5)))
up = rng.standard_normal((2, 5))


def cumax_loss():
    y, s = nm.cumax(x.value)
    x.grad += nm.cumax_backward(up, s)
    return float(np.sum(y * up))


print("cumax            rel err %.2e" % nm.finite_difference_check(cumax_loss, [x]))

# ## Four steps of the recurrent layer

d, n = 4, 5
p = ONLSTMParams(rng.normal(0, 0.5, (d, 6 * n)), rng.normal(0, 0.5, (n, 6 * n)), rng.normal(0, 0.5, 6 * n))
X = rng.standard_normal((3, 4, d))
mask = np.array([[1, 1, 1, 1], [1, 1, 1, 0], [1, 1, 0, 0]], bool)
upH = rng.standard_normal((3, 4, n))


def rnn_loss():
    H, caches = sequence_forward(X, mask, p)
    sequence_backward(upH, caches, p)
    return float(np.sum(H * upH))


print("onlstm, 4 steps  rel err %.2e" % nm.finite_difference_check(rnn_loss, p.params))

# ## The whole classifier, dropout off
#
# Batch of three: with two rows batch-norm squashes every feature to +-1
# and the gradient that reaches the recurrent weights is round-off.

vocab = Vocabulary(["<pad>", "<unk>", "a", "b", "c", "d", "e", "f"])
mat = rng.standard_normal((8, 4))
mat[:2] = 0
clf = LevelClassifier(1, EmbeddingMatrix(vocab, mat), ["yes", "no"], hidden=5, mlp_units=3,
                      rng=rng, input_dropout=0.0, hidden_dropout=0.0)
ids = rng.integers(2, 8, (3, 4))
batch = LevelBatch(ids, ids != 0, np.array([0, 1, 1]), 1)
err = nm.finite_difference_check(lambda: clf.loss_and_grads(batch)[0], clf.params)
print("classifier       rel err %.2e" % err)
