# # cumax and the master gates
#
# cumax is the running sum of a softmax. It rises monotonically and ends at 1,
# so it acts as a soft split point: entries before the split are near 0 and
# entries after it are near 1.

import numpy as np

from hmtc.numeric import cumax
from hmtc.onlstm import ONLSTMParams, cell_step, init_params
from hmtc.numeric import make_rng

np.set_printoptions(precision=3, suppress=True)

# ## Shape of cumax
#
# Uniform input gives an even staircase k/n. A spike moves the split point.

print("zeros      ", cumax(np.zeros(6))[0])
spike = np.array([-4.0, -4.0, 5.0, -4.0, -4.0, -4.0])
print("spike at 2 ", cumax(spike)[0])

# ## Master gates inside one cell step
#
# The master forget gate is cumax(...) and the master input gate is
# 1 - cumax(...). With every weight at zero both are the even staircase,
# and the state stays at zero.

n = 6
zero = ONLSTMParams(np.zeros((3, 6 * n)), np.zeros((n, 6 * n)), np.zeros(6 * n))
h, c, cache = cell_step(np.ones((1, 3)), np.zeros((1, n)), np.zeros((1, n)), zero)
mf, mi = cache[7], cache[8]
print("master forget", mf[0])
print("master input ", mi[0])
print("h, c         ", h[0], c[0])

# ## A random cell, many steps
#
# Ordered neurons: high-index units forget less than low-index units on
# average, because the master forget gate is increasing along the hidden axis.

p = init_params(3, n, make_rng(0, "demo"))
rng = np.random.default_rng(1)
h, c = np.zeros((1, n)), np.zeros((1, n))
mf_mean = np.zeros(n)
for t in range(200):
    h, c, cache = cell_step(rng.standard_normal((1, 3)), h, c, p)
    mf_mean += cache[7][0] / 200
print("mean master forget by unit", mf_mean)
assert np.all(np.diff(mf_mean) >= 0)
