"""The checker itself: round-off floor on linear maps, battery, negative control."""

import numpy as np

from htrkit import ops
from htrkit.gradcheck import gradient_check, primitive_battery, run_battery
from htrkit.tensor import Tensor


def test_linear_function_error_at_roundoff():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(4,)), requires_grad=True, dtype=np.float64)
    w = rng.normal(size=(4,))
    err = gradient_check(lambda x: ops.sum_(ops.mul(x, Tensor(w))), (x,))
    assert err < 1e-9


def test_single_conv_plus_sum():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(1, 2, 5, 5)), requires_grad=True, dtype=np.float64)
    k = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True, dtype=np.float64)
    err = gradient_check(lambda x, k: ops.sum_(ops.conv2d(x, k, (1, 1), (1, 1))), (x, k))
    assert err < 1e-6


def test_rejects_float32_inputs():
    x = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
    try:
        gradient_check(lambda x: ops.sum_(x), (x,))
    except ValueError:
        return
    raise AssertionError("float32 input should be rejected")


def test_battery_passes_and_control_fails():
    rows, ok = run_battery(primitive_battery(seed=0))
    assert ok, rows
    names = [r[0] for r in rows]
    assert names[-1] == "negative control (broken adjoint)"
    # the control row "passes" only because the checker flagged the bad adjoint
    assert rows[-1][1] > 1e-3 and rows[-1][3]
    for name, err, tol, passed in rows[:-1]:
        assert passed and err < tol, (name, err, tol)
