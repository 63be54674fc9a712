"""Differentiable primitives over tensor.Tensor.

Each op computes its forward with numpy, then registers a closure producing
exact analytic adjoints (one per input, None for non-differentiable inputs).
Convolution and pooling use stride-trick windows so the only Python loops are
over the (small) kernel extent, never over batch or spatial positions.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import erf

from .tensor import Tensor, record

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def _as_tensor(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] > 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / broadcasting arithmetic

def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    out = Tensor(a.data + b.data)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record(out, (a, b), bw)


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    out = Tensor(a.data - b.data)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return record(out, (a,), lambda g: (-g,))


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)

    def bw(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return record(out, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """numpy-semantics matmul; both operands must be at least 2-d."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner extents differ: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)

    def bw(g):
        da = g @ np.swapaxes(bd, -1, -2)
        db = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(da, a.shape), _unbroadcast(db, b.shape)

    return record(out, (a, b), bw)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    out = Tensor(x.data.reshape(shape))
    return record(out, (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(x.data.transpose(axes))
    return record(out, (x,), lambda g: (g.transpose(inv),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return record(out, tuple(tensors), bw)


# ---------------------------------------------------------------------------
# reductions

def _restore_axes(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(shape) for a in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))
    shape = x.shape

    def bw(g):
        return (_restore_axes(g, shape, axis, keepdims).copy(),)

    return record(out, (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims))
    shape = x.shape
    count = x.size if axis is None else int(np.prod(
        [shape[a % len(shape)] for a in (axis if isinstance(axis, tuple) else (axis,))]))

    def bw(g):
        return (_restore_axes(g, shape, axis, keepdims) / count,)

    return record(out, (x,), bw)


# ---------------------------------------------------------------------------
# activations

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))
    return record(out, (x,), lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """Exact-erf form: x * Phi(x), with Phi the standard normal CDF."""
    xd = x.data
    phi = 0.5 * (1.0 + erf(xd * _INV_SQRT2))
    out = Tensor(xd * phi)

    def bw(g):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT2PI
        return (g * (phi + xd * pdf),)

    return record(out, (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return record(out, (x,), bw)


def softmax_rows(x: Tensor) -> Tensor:
    """softmax over the trailing axis; the shape every attention map uses."""
    return softmax(x, axis=-1)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = Tensor(z - lse)
    s = np.exp(out.data)

    def bw(g):
        return (g - s * g.sum(axis=axis, keepdims=True),)

    return record(out, (x,), bw)


# ---------------------------------------------------------------------------
# normalization

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis, then scale and shift."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data)
    d = xd.shape[-1]
    reduce_axes = tuple(range(xd.ndim - 1))

    def bw(g):
        dgamma = (g * xhat).sum(axis=reduce_axes)
        dbeta = g.sum(axis=reduce_axes)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgamma, dbeta

    return record(out, (x, gamma, beta), bw)


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5,
                 stats: tuple[np.ndarray, np.ndarray] | None = None):
    """Per-channel normalization of an NCHW tensor.

    stats=None computes batch statistics (gradients flow through them);
    stats=(mean, var) treats them as constants. Returns (out, mean, var) so
    the calling layer can maintain running buffers outside the tape.
    """
    xd = x.data
    n = xd.shape[0] * xd.shape[2] * xd.shape[3]
    gview = gamma.data.reshape(1, -1, 1, 1)

    if stats is None:
        mu = xd.mean(axis=(0, 2, 3))
        xc = xd - mu.reshape(1, -1, 1, 1)
        var = (xc * xc).mean(axis=(0, 2, 3))
        inv = (1.0 / np.sqrt(var + eps)).reshape(1, -1, 1, 1)
        xhat = xc * inv
        out = Tensor(xhat * gview + beta.data.reshape(1, -1, 1, 1))

        def bw(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dxhat = g * gview
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            dx = inv * (dxhat - s1 / n - xhat * s2 / n)
            return dx, dgamma, dbeta

        return record(out, (x, gamma, beta), bw), mu, var

    mu, var = stats
    inv = (1.0 / np.sqrt(var + eps)).reshape(1, -1, 1, 1)
    xhat = (xd - mu.reshape(1, -1, 1, 1)) * inv
    out = Tensor(xhat * gview + beta.data.reshape(1, -1, 1, 1))

    def bw(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dx = g * gview * inv
        return dx, dgamma, dbeta

    return record(out, (x, gamma, beta), bw), mu, var


# ---------------------------------------------------------------------------
# convolution / pooling

def _windows(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    b, c, hp, wp = xp.shape
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    sb, sc, srow, scol = xp.strides
    return as_strided(
        xp,
        shape=(b, c, ho, wo, kh, kw),
        strides=(sb, sc, srow * sh, scol * sw, srow, scol),
        writeable=False,
    )


def conv2d(x: Tensor, k: Tensor, stride=(1, 1), padding=(0, 0)) -> Tensor:
    """Cross-correlation of NCHW input with OIHW kernel, zero padded."""
    sh, sw = stride
    ph, pw = padding
    xd, kd = x.data, k.data
    _, _, h, w = xd.shape
    o, ci, kh, kw = kd.shape
    if ci != xd.shape[1]:
        raise ValueError(f"kernel expects {ci} input channels, got {xd.shape[1]}")
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise ValueError(f"conv2d output extent non-positive for input {xd.shape}, "
                         f"kernel {kd.shape}, stride {stride}, pad {padding}")
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else xd
    b = xd.shape[0]
    win = _windows(xp, kh, kw, sh, sw)
    ho, wo = win.shape[2], win.shape[3]
    # materialize the window matrix once and keep it for the backward GEMMs
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    cols = cols.reshape(b * ho * wo, ci * kh * kw)
    kmat = kd.reshape(o, -1)
    out = (cols @ kmat.T).reshape(b, ho, wo, o)
    out = Tensor(np.ascontiguousarray(out.transpose(0, 3, 1, 2)))

    def bw(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(b * ho * wo, o)
        dk = (gmat.T @ cols).reshape(kd.shape) if k.requires_grad else None
        if not x.requires_grad:
            return None, dk
        if sh == 1 and sw == 1 and ph <= kh - 1 and pw <= kw - 1:
            # unit stride: dx is the full correlation of g with the flipped
            # kernel, one gather + one GEMM instead of a per-tap scatter
            gp = np.pad(g, ((0, 0), (0, 0), (kh - 1 - ph, kh - 1 - ph),
                            (kw - 1 - pw, kw - 1 - pw)))
            gwin = _windows(gp, kh, kw, 1, 1)
            gcols = np.ascontiguousarray(gwin.transpose(0, 2, 3, 1, 4, 5))
            gcols = gcols.reshape(b * h * w, o * kh * kw)
            kflip = kd[:, :, ::-1, ::-1].transpose(0, 2, 3, 1).reshape(o * kh * kw, ci)
            dx = (gcols @ kflip).reshape(b, h, w, ci).transpose(0, 3, 1, 2)
            return np.ascontiguousarray(dx), dk
        dwin = (gmat @ kmat).reshape(b, ho, wo, ci, kh, kw)
        dxp = np.zeros_like(xp) if (ph or pw) else np.zeros_like(xd)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + ho * sh:sh, j:j + wo * sw:sw] += \
                    dwin[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, ph:ph + h, pw:pw + w] if (ph or pw) else dxp
        return np.ascontiguousarray(dx), dk

    return record(out, (x, k), bw)


def maxpool2d(x: Tensor, kernel=(3, 3), stride=(2, 2), padding=(1, 1)) -> Tensor:
    """Max pooling; padding cells hold -inf so they never win."""
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    xd = x.data
    _, _, h, w = xd.shape
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf)
    win = _windows(xp, kh, kw, sh, sw)
    ho, wo = win.shape[2], win.shape[3]
    flat = win.reshape(*win.shape[:4], kh * kw)
    idx = flat.argmax(axis=-1)
    out = Tensor(np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0])

    def bw(g):
        dxp = np.zeros_like(xp)
        for p in range(kh * kw):
            i, j = divmod(p, kw)
            sel = (idx == p)
            if not sel.any():
                continue
            dxp[:, :, i:i + ho * sh:sh, j:j + wo * sw:sw] += g * sel
        dx = dxp[:, :, ph:ph + h, pw:pw + w]
        return (np.ascontiguousarray(dx),)

    return record(out, (x,), bw)


# ---------------------------------------------------------------------------
# masking

def substitute_rows(x: Tensor, flags: np.ndarray, token: Tensor) -> Tensor:
    """Replace x[b, l, :] with `token` wherever flags[b, l] is set.

    flags is a constant boolean array; gradient w.r.t. the token is the sum of
    incoming gradients over all replaced positions.
    """
    if flags.shape != x.shape[:2]:
        raise ValueError(f"flags shape {flags.shape} does not match tokens {x.shape[:2]}")
    f = flags[:, :, None]
    out = Tensor(np.where(f, token.data, x.data))

    def bw(g):
        dx = np.where(f, 0.0, g)
        dtok = g[flags].sum(axis=0) if flags.any() else np.zeros_like(token.data)
        return dx, dtok

    return record(out, (x, token), bw)
