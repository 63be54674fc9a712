"""Dense float tensors with reverse-mode autodiff recorded on an explicit tape.

A Tensor wraps a numpy array. Operations (see ops.py) record themselves on the
innermost active Tape whenever any input requires a gradient; outside a tape
nothing is recorded, which is how eval-mode forward passes stay cheap.
Gradients accumulate additively into ``.grad`` and are cleared only explicitly,
so a two-pass optimizer like SAM can own the clear points.
"""

from __future__ import annotations

import numpy as np

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """n-dimensional float array, optionally carrying a same-shape gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # Arithmetic sugar; the real work lives in ops.py.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


class Parameter(Tensor):
    """Learnable tensor with a unique dotted name path, e.g. "encoder.block0.msa.wq"."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape}, dtype={self.data.dtype})"


class Tape:
    """Ordered record of executed primitives, replayed in reverse by backward()."""

    __slots__ = ("_nodes",)

    def __init__(self):
        # each node: (output tensor, input tensors, backward fn)
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)


def record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Attach `out = f(inputs)` to the active tape if any input needs a gradient.

    `backward_fn(grad_out)` must return one gradient array (or None) per input.
    """
    if _TAPE_STACK:
        if any(t.requires_grad for t in inputs):
            out.requires_grad = True
            _TAPE_STACK[-1]._nodes.append((out, inputs, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor, params=None) -> None:
    """Replay the tape's adjoints in reverse, accumulating into leaf ``.grad``.

    Every leaf tensor (one not produced by an op on this tape) reachable from
    `loss` receives d(loss)/d(leaf), added onto any existing gradient. If
    `params` is given, parameters left unreached get an explicit zero gradient.
    """
    if loss.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}

    for out, inputs, backward_fn in reversed(tape._nodes):
        g = grads.pop(id(out), None)
        holders.pop(id(out), None)
        if g is None:
            continue  # not reachable from the loss
        in_grads = backward_fn(g)
        for tensor, ig in zip(inputs, in_grads):
            if ig is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig
                holders[key] = tensor

    # Whatever remains was never produced on this tape: leaves.
    for key, g in grads.items():
        tensor = holders[key]
        if not tensor.requires_grad:
            continue
        tensor.grad = g if tensor.grad is None else tensor.grad + g

    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def clear_grads(params) -> None:
    """Explicitly drop accumulated gradients (there is no auto-clear)."""
    for p in params:
        p.grad = None
