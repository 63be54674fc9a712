"""Convolutional feature extractor: a truncated residual stack that turns a
page-line image into a horizontal token sequence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .layers import BasicBlock, BatchNorm, Conv, Linear
from .tensor import Tensor


@dataclass(frozen=True)
class ExtractorConfig:
    input_h: int = 64
    input_w: int = 512
    widths: tuple = (64, 64, 128, 256)
    token_dim: int = 768

    def __post_init__(self):
        if self.input_h % 16 != 0 or self.input_h < 16:
            raise ValueError(f"input height must be a positive multiple of 16, got {self.input_h}")
        if self.input_w % 4 != 0 or self.input_w < 4:
            raise ValueError(f"input width must be a positive multiple of 4, got {self.input_w}")
        if len(self.widths) != 4:
            raise ValueError("widths must list stem and three stage widths")

    @property
    def token_count(self) -> int:
        return self.input_w // 4


class Extractor:
    """Stem, three two-block stages, height average, per-token projection."""

    def __init__(self, cfg: ExtractorConfig, rng: np.random.Generator):
        self.cfg = cfg
        w0, w1, w2, w3 = cfg.widths
        self.stem_conv = Conv("extractor.stem.conv", rng, 1, w0, 7, (2, 2), (3, 3))
        self.stem_bn = BatchNorm("extractor.stem.bn", w0)
        self.stage1 = [BasicBlock(f"extractor.stage1.block{i}", rng,
                                  w0 if i == 0 else w1, w1) for i in range(2)]
        self.stage2 = [BasicBlock(f"extractor.stage2.block{i}", rng,
                                  w1 if i == 0 else w2, w2,
                                  (2, 1) if i == 0 else (1, 1)) for i in range(2)]
        self.stage3 = [BasicBlock(f"extractor.stage3.block{i}", rng,
                                  w2 if i == 0 else w3, w3,
                                  (2, 1) if i == 0 else (1, 1)) for i in range(2)]
        self.proj = Linear("extractor.proj", rng, w3, cfg.token_dim)

    def __call__(self, images: Tensor, training: bool = False,
                 update_stats: bool = True) -> Tensor:
        if images.ndim != 4 or images.shape[1:] != (1, self.cfg.input_h, self.cfg.input_w):
            raise ValueError(
                f"expected images of shape (N, 1, {self.cfg.input_h}, {self.cfg.input_w}), "
                f"got {images.shape}")
        x = ops.relu(self.stem_bn(self.stem_conv(images), training, update_stats))
        x = ops.maxpool2d(x, (3, 3), (2, 2), (1, 1))
        for block in self.stage1 + self.stage2 + self.stage3:
            x = block(x, training, update_stats)
        x = ops.mean(x, axis=2)            # collapse remaining height
        x = ops.transpose(x, (0, 2, 1))    # (N, tokens, channels)
        return self.proj(x)

    def params(self):
        out = self.stem_conv.params() + self.stem_bn.params()
        for block in self.stage1 + self.stage2 + self.stage3:
            out += block.params()
        return out + self.proj.params()

    def buffers(self):
        out = dict(self.stem_bn.buffers())
        for block in self.stage1 + self.stage2 + self.stage3:
            out.update(block.buffers())
        return out


def count_parameters(params) -> int:
    return sum(p.size for p in params)
