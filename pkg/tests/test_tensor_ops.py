"""Autodiff core: pinned-value examples plus finite-difference property sweeps."""

import numpy as np
import pytest

from htrkit import ops
from htrkit.gradcheck import gradient_check
from htrkit.tensor import Parameter, Tape, Tensor, backward, clear_grads


def t64(data, requires_grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


def rand_t(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)


def weighted_sum(out, w):
    return ops.sum_(ops.mul(out, Tensor(w)))


# ---------------------------------------------------------------------------
# pinned forward values

def test_matmul_hand_product():
    a = t64([[1.0, 2.0], [3.0, 4.0]])
    b = t64([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_allclose(ops.matmul(a, b).data, [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_identity_and_zero():
    rng = np.random.default_rng(0)
    a = rand_t(rng, 3, 3)
    np.testing.assert_array_equal(ops.matmul(a, t64(np.eye(3))).data, a.data)
    assert not ops.matmul(a, t64(np.zeros((3, 2)))).data.any()


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(4, 5\)"):
        ops.matmul(t64(np.zeros((2, 3))), t64(np.zeros((4, 5))))


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(1)
    x = rand_t(rng, 2, 1, 4, 5)
    k = t64(np.ones((1, 1, 1, 1)))
    np.testing.assert_allclose(ops.conv2d(x, k).data, x.data)


def test_conv2d_ones_sum():
    x = t64(np.ones((1, 1, 3, 3)))
    k = t64(np.ones((1, 1, 3, 3)))
    out = ops.conv2d(x, k)
    assert out.shape == (1, 1, 1, 1)
    assert out.item() == 9.0


def test_conv2d_stride_extents():
    x = t64(np.zeros((1, 1, 4, 8)))
    k = t64(np.ones((1, 1, 1, 1)))
    assert ops.conv2d(x, k, stride=(2, 1)).shape == (1, 1, 2, 8)


def test_conv2d_rejects_empty_output():
    with pytest.raises(ValueError):
        ops.conv2d(t64(np.zeros((1, 1, 2, 2))), t64(np.zeros((1, 1, 5, 5))))


def test_layer_norm_pinned_vectors():
    g, b = t64(np.ones(2)), t64(np.zeros(2))
    const = ops.layer_norm(t64([[3.0, 3.0]]), g, b)
    np.testing.assert_allclose(const.data, 0.0, atol=1e-12)  # zero-variance numerator

    pm = ops.layer_norm(t64([[1.0, -1.0]]), g, b, eps=1e-12)
    np.testing.assert_allclose(pm.data, [[1.0, -1.0]], atol=1e-6)

    beta = t64([2.0, 5.0])
    shifted = ops.layer_norm(t64([[1.0, -1.0]]), t64(np.zeros(2)), beta)
    np.testing.assert_allclose(shifted.data, [[2.0, 5.0]])


def test_layer_norm_moments():
    rng = np.random.default_rng(2)
    x = rand_t(rng, 4, 9)
    eps = 1e-6
    out = ops.layer_norm(x, t64(np.ones(9)), t64(np.zeros(9)), eps=eps).data
    assert np.abs(out.mean(axis=-1)).max() < 1e-10
    var_in = x.data.var(axis=-1)
    np.testing.assert_allclose(out.var(axis=-1), var_in / (var_in + eps), atol=1e-10)


def test_softmax_pinned():
    u = ops.softmax_rows(t64(np.zeros((1, 4))))
    np.testing.assert_allclose(u.data, 0.25)

    p = ops.softmax_rows(t64([[0.0, np.log(3.0)]]))
    np.testing.assert_allclose(p.data, [[0.25, 0.75]], atol=1e-15)

    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 5))
    np.testing.assert_allclose(ops.softmax_rows(t64(x)).data,
                               ops.softmax_rows(t64(x + 17.0)).data, atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(4)
    s = ops.softmax_rows(t64(rng.normal(scale=5.0, size=(6, 11)))).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)


def test_log_softmax_matches_log_of_softmax():
    rng = np.random.default_rng(5)
    x = t64(rng.normal(scale=3.0, size=(4, 7)))
    np.testing.assert_allclose(ops.log_softmax(x).data, np.log(ops.softmax_rows(x).data),
                               atol=1e-10)


def test_gelu_pinned():
    assert ops.gelu(t64([0.0])).data[0] == 0.0
    assert abs(ops.gelu(t64([10.0])).data[0] - 10.0) < 1e-6
    np.testing.assert_allclose(ops.gelu(t64([1.0])).data[0], 0.8413447460685429, atol=1e-12)


def test_forward_is_deterministic():
    rng = np.random.default_rng(6)
    x = rand_t(rng, 3, 4, 5)
    g, b = t64(np.ones(5)), t64(np.zeros(5))

    def run():
        return ops.gelu(ops.layer_norm(x, g, b)).data

    assert np.array_equal(run(), run())


# ---------------------------------------------------------------------------
# backward semantics

def test_backward_sum_gives_ones():
    theta = Parameter("theta", np.arange(6, dtype=np.float64).reshape(2, 3))
    with Tape() as tape:
        loss = ops.sum_(theta)
    backward(tape, loss)
    np.testing.assert_array_equal(theta.grad, np.ones((2, 3)))


def test_backward_half_norm_gives_theta():
    theta = Parameter("theta", [1.5, -2.0, 0.5])
    with Tape() as tape:
        loss = ops.mul(ops.sum_(ops.mul(theta, theta)), 0.5)
    backward(tape, loss)
    np.testing.assert_allclose(theta.grad, theta.data)


def test_backward_accumulates_until_cleared():
    theta = Parameter("theta", [1.0, 2.0])
    for _ in range(2):
        with Tape() as tape:
            loss = ops.sum_(theta)
        backward(tape, loss)
    np.testing.assert_array_equal(theta.grad, [2.0, 2.0])
    clear_grads([theta])
    assert theta.grad is None


def test_backward_rejects_non_scalar():
    theta = Parameter("theta", [1.0, 2.0])
    with Tape() as tape:
        out = ops.mul(theta, 2.0)
    with pytest.raises(ValueError):
        backward(tape, out)


def test_backward_zero_fills_unreached_params():
    used = Parameter("used", [1.0])
    unused = Parameter("unused", [3.0, 4.0])
    with Tape() as tape:
        loss = ops.sum_(used)
    backward(tape, loss, params=[used, unused])
    np.testing.assert_array_equal(unused.grad, [0.0, 0.0])


def test_shared_input_gradients_add():
    x = Parameter("x", [3.0])
    with Tape() as tape:
        loss = ops.sum_(ops.add(ops.mul(x, 2.0), ops.mul(x, 5.0)))
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, [7.0])


def test_no_recording_outside_tape():
    x = Parameter("x", [1.0])
    out = ops.mul(x, 3.0)
    assert not out.requires_grad
    with Tape() as tape:
        _ = ops.mul(x, 3.0)
    assert len(tape) == 1


# ---------------------------------------------------------------------------
# finite-difference property sweeps, >= 100 random cases per primitive
#
# The 1e-8 denominator floor makes the check an absolute one (|a-n| <= 1e-13)
# for near-zero gradient elements, so probe losses are kept small: central
# differences carry ~u*|f|/2h of round-off, which must sit under that bar.

N_CASES = 100
TOL = 1e-5


def sweep(make_case, n=N_CASES, tol=TOL, seed=100, h=1e-5):
    worst = 0.0
    for i in range(n):
        rng = np.random.default_rng(seed + i)
        fn, inputs = make_case(rng)
        worst = max(worst, gradient_check(fn, inputs, h=h))
    assert worst < tol, f"max relative error {worst:.3e} over {n} cases"


def test_fd_add_broadcast():
    def case(rng):
        a = rand_t(rng, int(rng.integers(1, 4)), 3)
        b = rand_t(rng, 3) if rng.random() < 0.5 else rand_t(rng, 1, 3)
        w = 1e-4 * rng.normal(size=np.broadcast_shapes(a.shape, b.shape))
        return (lambda a, b: weighted_sum(ops.add(a, b), w)), (a, b)
    sweep(case)


def test_fd_sub_neg():
    def case(rng):
        a, b = rand_t(rng, 2, 3), rand_t(rng, 2, 3)
        w = 1e-4 * rng.normal(size=(2, 3))
        return (lambda a, b: weighted_sum(ops.neg(ops.sub(a, b)), w)), (a, b)
    sweep(case)


def test_fd_mul_broadcast():
    def case(rng):
        a = rand_t(rng, 2, 3, 2)
        b = rand_t(rng, 3, 1)
        w = 1e-4 * rng.normal(size=(2, 3, 2))
        return (lambda a, b: weighted_sum(ops.mul(a, b), w)), (a, b)
    sweep(case)


def test_fd_matmul():
    def case(rng):
        m, k, n = (int(rng.integers(1, 5)) for _ in range(3))
        if rng.random() < 0.5:
            a, b = rand_t(rng, m, k), rand_t(rng, k, n)
            w = 1e-4 * rng.normal(size=(m, n))
        else:  # batched with broadcast on the right operand
            a, b = rand_t(rng, 2, m, k), rand_t(rng, k, n)
            w = 1e-4 * rng.normal(size=(2, m, n))
        return (lambda a, b: weighted_sum(ops.matmul(a, b), w)), (a, b)
    sweep(case)


def test_fd_conv2d():
    def case(rng):
        c_in, c_out = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        h, w_ = int(rng.integers(3, 6)), int(rng.integers(3, 7))
        kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        pad = (int(rng.integers(0, 2)), int(rng.integers(0, 2)))
        x, k = rand_t(rng, 2, c_in, h, w_), rand_t(rng, c_out, c_in, kh, kw)
        y = ops.conv2d(x, k, stride, pad)
        w = 1e-4 * rng.normal(size=y.shape)
        return (lambda x, k: weighted_sum(ops.conv2d(x, k, stride, pad), w)), (x, k)
    sweep(case, tol=1e-5)


def test_fd_maxpool2d():
    def case(rng):
        h, w_ = int(rng.integers(4, 8)), int(rng.integers(4, 8))
        x = Tensor(rng.uniform(0.0, 100.0, size=(2, 2, h, w_)), requires_grad=True,
                   dtype=np.float64)
        y = ops.maxpool2d(x)
        w = 1e-5 * rng.normal(size=y.shape)
        return (lambda x: weighted_sum(ops.maxpool2d(x), w)), (x,)
    sweep(case)


def test_fd_relu():
    def case(rng):
        x = rand_t(rng, 3, 4)
        x.data += 0.25 * np.sign(x.data)  # stay off the kink
        w = 1e-4 * rng.normal(size=(3, 4))
        return (lambda x: weighted_sum(ops.relu(x), w)), (x,)
    sweep(case)


def test_fd_gelu():
    def case(rng):
        x = rand_t(rng, 3, 4)
        w = 1e-4 * rng.normal(size=(3, 4))
        return (lambda x: weighted_sum(ops.gelu(x), w)), (x,)
    sweep(case)


def test_fd_softmax_and_log_softmax():
    def case(rng):
        x = rand_t(rng, 2, 5)
        w = 1e-4 * rng.normal(size=(2, 5))
        if rng.random() < 0.5:
            return (lambda x: weighted_sum(ops.softmax_rows(x), w)), (x,)
        return (lambda x: weighted_sum(ops.log_softmax(x), w)), (x,)
    sweep(case, n=2 * N_CASES)


def test_fd_layer_norm():
    def case(rng):
        c = int(rng.integers(2, 7))
        x, g, b = rand_t(rng, 2, 3, c), rand_t(rng, c), rand_t(rng, c)
        w = 1e-4 * rng.normal(size=(2, 3, c))
        return (lambda x, g, b: weighted_sum(ops.layer_norm(x, g, b), w)), (x, g, b)
    sweep(case, h=3e-6)


def test_fd_batch_norm_train_and_eval():
    def case(rng):
        c = int(rng.integers(1, 4))
        x, g, b = rand_t(rng, 2, c, 3, 4), rand_t(rng, c), rand_t(rng, c)
        w = 1e-4 * rng.normal(size=(2, c, 3, 4))
        if rng.random() < 0.5:
            fn = lambda x, g, b: weighted_sum(ops.batch_norm2d(x, g, b)[0], w)
        else:
            stats = (rng.normal(size=c), rng.uniform(0.5, 2.0, size=c))
            fn = lambda x, g, b: weighted_sum(ops.batch_norm2d(x, g, b, stats=stats)[0], w)
        return fn, (x, g, b)
    sweep(case, n=2 * N_CASES)


def test_fd_reductions_and_shapes():
    def case(rng):
        x = rand_t(rng, 2, 3, 4)
        choice = rng.integers(0, 4)
        if choice == 0:
            w = 1e-4 * rng.normal(size=(2, 4))
            return (lambda x: weighted_sum(ops.mean(x, axis=1), w)), (x,)
        if choice == 1:
            w = 1e-4 * rng.normal(size=(3,))
            return (lambda x: weighted_sum(ops.sum_(x, axis=(0, 2)), w)), (x,)
        if choice == 2:
            w = 1e-4 * rng.normal(size=(4, 3, 2))
            return (lambda x: weighted_sum(ops.transpose(x, (2, 1, 0)), w)), (x,)
        w = 1e-4 * rng.normal(size=(6, 4))
        return (lambda x: weighted_sum(ops.reshape(x, (6, 4)), w)), (x,)
    sweep(case, n=4 * N_CASES)


def test_fd_concat():
    def case(rng):
        a, b, c = rand_t(rng, 2, 2), rand_t(rng, 2, 3), rand_t(rng, 2, 1)
        w = 1e-4 * rng.normal(size=(2, 6))
        return (lambda a, b, c: weighted_sum(ops.concat([a, b, c], axis=1), w)), (a, b, c)
    sweep(case)


def test_fd_substitute_rows():
    def case(rng):
        x, tok = rand_t(rng, 2, 5, 3), rand_t(rng, 3)
        flags = rng.random((2, 5)) < 0.4
        w = 1e-4 * rng.normal(size=(2, 5, 3))
        return (lambda x, tok: weighted_sum(ops.substitute_rows(x, flags, tok), w)), (x, tok)
    sweep(case)
