"""Span masking of feature tokens: contiguous spans are replaced by one
learnable token during training.

Spans of fixed length s are drawn with uniform starts until the set-flag
count reaches floor(ratio * L), then the tail of the last span is trimmed so
the count is exact. Overlapping draws may merge into longer runs; each single
draw never exceeds s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Parameter, Tensor


@dataclass(frozen=True)
class MaskConfig:
    ratio: float = 0.4
    span: int = 8

    def __post_init__(self):
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError("mask ratio must lie in [0, 1)")
        if self.span < 1:
            raise ValueError("span length must be >= 1")


@dataclass(frozen=True)
class SpanMask:
    flags: np.ndarray
    target_count: int


def target_count(length: int, ratio: float) -> int:
    # the epsilon absorbs float artifacts like 0.7*10 = 6.999...; it never
    # crosses a true integer boundary for representable ratios
    return math.floor(ratio * length + 1e-9)


def sample(length: int, cfg: MaskConfig, rng: np.random.Generator) -> SpanMask:
    if cfg.span > length:
        raise ValueError(f"span {cfg.span} exceeds sequence length {length}")
    target = target_count(length, cfg.ratio)
    flags = np.zeros(length, dtype=bool)
    if target == 0:
        return SpanMask(flags, 0)
    while True:
        start = int(rng.integers(0, length - cfg.span + 1))
        flags[start:start + cfg.span] = True
        count = int(flags.sum())
        if count >= target:
            excess = count - target  # < span: the exit draw set >= 1 new flag
            if excess:
                flags[start + cfg.span - excess:start + cfg.span] = False
            return SpanMask(flags, target)


def apply(tokens: Tensor, mask, mask_token: Parameter) -> Tensor:
    """Substitute the mask token into flagged rows of a (B, L, C) sequence.

    `mask` is one SpanMask shared by the batch or a sequence of per-sample
    SpanMasks (the training path: independent masks per sample).
    """
    b, length = tokens.shape[0], tokens.shape[1]
    if isinstance(mask, SpanMask):
        masks = [mask] * b
    else:
        masks = list(mask)
        if len(masks) != b:
            raise ValueError(f"{len(masks)} masks for a batch of {b}")
    for m in masks:
        if m.flags.size != length:
            raise ValueError(f"mask length {m.flags.size} != token count {length}")
    flags = np.stack([m.flags for m in masks])
    return ops.substitute_rows(tokens, flags, mask_token)
