"""SAM on a bowl: the ascent-then-descent step, traced by hand."""

import numpy as np

from htrkit.optim import AdamWState, SamConfig, sam_step
from htrkit.tensor import Parameter

theta = Parameter("theta", np.array([1.0, 0.0]))


def run_pass(final: bool) -> float:
    theta.grad = theta.data.copy()  # f = 0.5 |theta|^2, so grad = theta
    return 0.5 * float(theta.data @ theta.data)


def sgd(params, state, lr):
    for p in params:
        p.data = p.data - lr * p.grad


print("f(theta) = 0.5 |theta|^2, start at (1, 0), lr 0.1")
print("rho=0.1: ascend to (1.1, 0), take the descent gradient there:")
loss = sam_step([theta], run_pass, AdamWState(), SamConfig(rho=0.1), 0.1,
                base_update=sgd)
print(f"  loss at perturbed point {loss:.4f}, new theta {theta.data}")
print("  analytic: 1 - 0.1 * 1.1 = 0.89 exactly\n")

print("ten more steps, watching the sharpened gradient shrink the iterate:")
for i in range(10):
    loss = sam_step([theta], run_pass, AdamWState(), SamConfig(rho=0.1), 0.1,
                    base_update=sgd)
    print(f"  step {i + 1}: theta[0] = {theta.data[0]:.6f}")

print("\nwith rho=0 the same call is exactly the base optimizer:")
theta.data = np.array([1.0, 0.0])
sam_step([theta], run_pass, AdamWState(), SamConfig(rho=0.0), 0.1,
         base_update=sgd)
print(f"  theta after one rho=0 step: {theta.data} (plain 1 - 0.1*1.0)")
