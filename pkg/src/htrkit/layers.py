"""Parameterized layers over the op set. Each layer owns named Parameters
(and, for batch norm, running buffers) and exposes them for the optimizer
and the checkpoint writer.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Parameter, Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal draws redrawn outside two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    while True:
        bad = np.abs(out) > 2.0 * std
        if not bad.any():
            return out.astype(np.float32)
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(np.float32)


class Conv:
    """3x3/7x7/1x1 convolution without bias (batch norm follows it)."""

    def __init__(self, name: str, rng, c_in: int, c_out: int, kernel: int,
                 stride=(1, 1), padding=(0, 0)):
        fan_in = c_in * kernel * kernel
        self.w = Parameter(f"{name}.w", he_normal(rng, (c_out, c_in, kernel, kernel), fan_in))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.w, self.stride, self.padding)

    def params(self):
        return [self.w]


class BatchNorm:
    def __init__(self, name: str, channels: int, momentum: float = 0.1,
                 eps: float = 1e-5):
        self.name = name
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype=np.float32))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype=np.float32))
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, training: bool, update_stats: bool = True) -> Tensor:
        if training:
            out, mu, var = ops.batch_norm2d(x, self.gamma, self.beta, self.eps)
            if update_stats:
                m = self.momentum
                self.running_mean += m * (mu.astype(np.float32) - self.running_mean)
                self.running_var += m * (var.astype(np.float32) - self.running_var)
            return out
        out, _, _ = ops.batch_norm2d(x, self.gamma, self.beta, self.eps,
                                     stats=(self.running_mean, self.running_var))
        return out

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {f"{self.name}.running_mean": self.running_mean,
                f"{self.name}.running_var": self.running_var}


class Linear:
    def __init__(self, name: str, rng, d_in: int, d_out: int):
        self.w = Parameter(f"{name}.w", trunc_normal(rng, (d_in, d_out)))
        self.b = Parameter(f"{name}.b", np.zeros(d_out, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.w), self.b)

    def params(self):
        return [self.w, self.b]


class LayerNorm:
    def __init__(self, name: str, dim: int, eps: float = 1e-6):
        self.gamma = Parameter(f"{name}.gamma", np.ones(dim, dtype=np.float32))
        self.beta = Parameter(f"{name}.beta", np.zeros(dim, dtype=np.float32))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)

    def params(self):
        return [self.gamma, self.beta]


class BasicBlock:
    """Two 3x3 convs with batch norm; strided 1x1 conv + norm shortcut when
    the geometry or width changes."""

    def __init__(self, name: str, rng, c_in: int, c_out: int, stride=(1, 1)):
        self.conv1 = Conv(f"{name}.conv1", rng, c_in, c_out, 3, stride, (1, 1))
        self.bn1 = BatchNorm(f"{name}.bn1", c_out)
        self.conv2 = Conv(f"{name}.conv2", rng, c_out, c_out, 3, (1, 1), (1, 1))
        self.bn2 = BatchNorm(f"{name}.bn2", c_out)
        if stride != (1, 1) or c_in != c_out:
            self.down_conv = Conv(f"{name}.down.conv", rng, c_in, c_out, 1, stride)
            self.down_bn = BatchNorm(f"{name}.down.bn", c_out)
        else:
            self.down_conv = None
            self.down_bn = None

    def __call__(self, x: Tensor, training: bool, update_stats: bool = True) -> Tensor:
        y = ops.relu(self.bn1(self.conv1(x), training, update_stats))
        y = self.bn2(self.conv2(y), training, update_stats)
        if self.down_conv is not None:
            x = self.down_bn(self.down_conv(x), training, update_stats)
        return ops.relu(ops.add(y, x))

    def params(self):
        out = self.conv1.params() + self.bn1.params() + self.conv2.params() + self.bn2.params()
        if self.down_conv is not None:
            out += self.down_conv.params() + self.down_bn.params()
        return out

    def buffers(self):
        out = {**self.bn1.buffers(), **self.bn2.buffers()}
        if self.down_bn is not None:
            out.update(self.down_bn.buffers())
        return out
