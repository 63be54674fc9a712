"""Tour of the tape: record a small expression, differentiate it, verify it."""

import numpy as np

from htrkit import ops
from htrkit.gradcheck import gradient_check
from htrkit.tensor import Tape, Tensor, backward

rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)

with Tape() as tape:
    h = ops.relu(ops.matmul(x, w))
    y = ops.mean(ops.mul(h, h))
backward(tape, y, params=[x, w])

print("loss:", float(y.data))
print("dL/dw:\n", w.grad)

# a loss that never reads w leaves w.grad alone (gradients accumulate)
with Tape() as tape:
    y2 = ops.sum_(ops.mul(x, x))
before = w.grad.copy()
backward(tape, y2, params=[x, w])
print("w untouched by an x-only loss:", np.array_equal(before, w.grad))

# the same expression, checked against central differences in 64-bit
def f(x, w):
    h = ops.relu(ops.matmul(x, w))
    return ops.mean(ops.mul(h, h))

err = gradient_check(f, [x, w], h=1e-6)
print(f"max relative error vs finite differences: {err:.2e}")
