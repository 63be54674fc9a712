"""Finite-difference verification of recorded adjoints.

All checks run in 64-bit; central differences in 32-bit would drown in
round-off and say nothing. The battery carries a deliberately broken adjoint
as a negative control, so a silently passing checker is itself detectable.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tape, Tensor, backward, clear_grads, record


def gradient_check(fn, inputs, h: float = 1e-6) -> float:
    """Max relative error between backward() and central differences.

    fn(*inputs) must return a scalar Tensor. Inputs are perturbed in place
    one element at a time, so they must be float64 leaves.
    """
    for t in inputs:
        if t.data.dtype != np.float64:
            raise ValueError("gradient_check requires float64 inputs")

    with Tape() as tape:
        loss = fn(*inputs)
    clear_grads(inputs)
    backward(tape, loss, params=inputs)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    clear_grads(inputs)

    worst = 0.0
    for t, ana in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        aflat = ana.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            fp = fn(*inputs).item()
            flat[i] = saved - h
            fm = fn(*inputs).item()
            flat[i] = saved
            num = (fp - fm) / (2.0 * h)
            denom = max(abs(aflat[i]), abs(num), 1e-8)
            worst = max(worst, abs(aflat[i] - num) / denom)
    return worst


def _broken_double(x: Tensor) -> Tensor:
    # Negative control: forward doubles, backward claims a 1% larger slope.
    out = Tensor(2.0 * x.data)
    return record(out, (x,), lambda g: (2.02 * g,))


def primitive_battery(seed: int = 0):
    """Named single-shot checks over the op set, one representative shape each.

    Returns (name, fn, inputs, tolerance) rows for run_battery. The property
    tests sweep many random shapes; this battery is the quick CLI-facing pass.
    """
    rng = np.random.default_rng(seed)

    def t(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)

    def away_from_zero(x: Tensor) -> Tensor:
        x.data += 0.2 * np.sign(x.data)
        return x

    checks = []

    x, w, b = t(3, 4), t(4, 5), t(5)
    checks.append(("matmul+bias", lambda x, w, b: ops.sum_(ops.add(ops.matmul(x, w), b)),
                   (x, w, b), 1e-6))

    a, b2 = t(2, 3, 4), t(3, 1)
    checks.append(("mul broadcast", lambda a, b: ops.sum_(ops.mul(a, b)), (a, b2), 1e-6))

    def conv_sq(x, k):
        y = ops.conv2d(x, k, stride=(2, 1), padding=(1, 2))
        return ops.mul(y, y)

    x, k = t(2, 3, 6, 7), t(4, 3, 3, 3)
    checks.append(("conv2d", lambda x, k: ops.sum_(conv_sq(x, k)), (x, k), 1e-5))

    xp = Tensor(10.0 * rng.normal(size=(2, 2, 7, 6)), requires_grad=True, dtype=np.float64)
    checks.append(("maxpool2d", lambda x: ops.sum_(ops.mul(ops.maxpool2d(x), ops.maxpool2d(x))),
                   (xp,), 1e-5))

    checks.append(("relu", lambda x: ops.sum_(ops.mul(ops.relu(x), ops.relu(x))),
                   (away_from_zero(t(4, 5)),), 1e-6))
    checks.append(("gelu", lambda x: ops.sum_(ops.gelu(x)), (t(4, 5),), 1e-6))

    x = t(3, 7)
    checks.append(("softmax", lambda x: ops.sum_(ops.mul(ops.softmax_rows(x), x)), (x,), 1e-5))
    x = t(3, 7)
    checks.append(("log_softmax", lambda x: ops.sum_(ops.mul(ops.log_softmax(x), x)), (x,), 1e-5))

    x, g, bb = t(2, 3, 8), t(8), t(8)
    checks.append(("layer_norm", lambda x, g, b: ops.sum_(ops.mul(ops.layer_norm(x, g, b), x)),
                   (x, g, bb), 1e-5))

    x, g, bb = t(2, 3, 4, 5), t(3), t(3)
    checks.append(("batch_norm2d train",
                   lambda x, g, b: ops.sum_(ops.mul(ops.batch_norm2d(x, g, b)[0], x)),
                   (x, g, bb), 1e-5))

    stats = (rng.normal(size=3), rng.uniform(0.5, 2.0, size=3))
    x, g, bb = t(2, 3, 4, 5), t(3), t(3)
    checks.append(("batch_norm2d eval",
                   lambda x, g, b: ops.sum_(ops.mul(ops.batch_norm2d(x, g, b, stats=stats)[0], x)),
                   (x, g, bb), 1e-6))

    flags = rng.random((2, 6)) < 0.5
    x, tok = t(2, 6, 4), t(4)
    checks.append(("substitute_rows",
                   lambda x, tok: ops.sum_(ops.mul(ops.substitute_rows(x, flags, tok), x)),
                   (x, tok), 1e-6))

    a, b2, c = t(2, 3), t(2, 5), t(2, 1)
    checks.append(("concat", lambda a, b, c: ops.sum_(ops.mul(y := ops.concat([a, b, c], axis=1), y)),
                   (a, b2, c), 1e-6))

    x = t(3, 4, 5)
    checks.append(("mean/transpose/reshape",
                   lambda x: ops.sum_(ops.mul(ops.mean(ops.reshape(ops.transpose(x, (1, 0, 2)), (4, 15)), axis=1), 3.0)),
                   (x,), 1e-6))

    q, k2, v = t(2, 5, 4), t(2, 5, 4), t(2, 5, 4)
    def attn(q, k, v):
        s = ops.mul(ops.matmul(q, ops.transpose(k, (0, 2, 1))), 0.5)
        return ops.sum_(ops.mul(ops.matmul(ops.softmax_rows(s), v), q))
    checks.append(("attention composite", attn, (q, k2, v), 1e-5))

    return checks


def run_battery(checks, h: float = 1e-6, negative_control: bool = True):
    """Run named checks; returns (rows, all_ok).

    Each row is (name, max_rel_err, tolerance, passed). The negative-control
    row passes only if the checker flags the planted wrong adjoint.
    """
    rows = []
    ok = True
    for name, fn, inputs, tol in checks:
        err = gradient_check(fn, inputs, h=h)
        passed = err < tol
        ok = ok and passed
        rows.append((name, err, tol, passed))
    if negative_control:
        rng = np.random.default_rng(7)
        x = Tensor(rng.normal(size=(3, 3)), requires_grad=True, dtype=np.float64)
        err = gradient_check(lambda x: ops.sum_(_broken_double(x)), (x,), h=h)
        detected = err > 1e-3
        ok = ok and detected
        rows.append(("negative control (broken adjoint)", err, 1e-3, detected))
    return rows, ok
