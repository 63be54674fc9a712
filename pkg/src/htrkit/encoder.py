"""Encoder-only transformer over the extractor's token sequence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .layers import LayerNorm, Linear, trunc_normal
from .tensor import Parameter, Tensor


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 768
    blocks: int = 4
    heads: int = 6
    ffn_dim: int = 3072

    def __post_init__(self):
        if self.dim % 2 != 0:
            raise ValueError(f"encoder dim must be even, got {self.dim}")
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by {self.heads} heads")


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Fixed position table: sin on even channels, cos on odd, geometric
    wavelengths from 2*pi up to 10000*2*pi."""
    if dim % 2 != 0:
        raise ValueError(f"position dim must be even, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    rates = 1.0 / np.power(10000.0, np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(pos * rates)
    table[:, 1::2] = np.cos(pos * rates)
    return table.astype(np.float32)


class Msa:
    """Multi-head self-attention; also hands back the attention maps."""

    def __init__(self, name: str, rng, dim: int, heads: int):
        self.heads = heads
        self.head_dim = dim // heads
        for part in ("q", "k", "v", "o"):
            setattr(self, f"w{part}", Parameter(f"{name}.w{part}", trunc_normal(rng, (dim, dim))))
            setattr(self, f"b{part}", Parameter(f"{name}.b{part}", np.zeros(dim, dtype=np.float32)))

    def __call__(self, x: Tensor):
        n, length, dim = x.shape
        def split(t):
            t = ops.reshape(t, (n, length, self.heads, self.head_dim))
            return ops.transpose(t, (0, 2, 1, 3))
        q = split(ops.add(ops.matmul(x, self.wq), self.bq))
        k = split(ops.add(ops.matmul(x, self.wk), self.bk))
        v = split(ops.add(ops.matmul(x, self.wv), self.bv))
        scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))),
                         np.float32(1.0 / np.sqrt(self.head_dim)))
        attn = ops.softmax(scores, axis=-1)
        ctx = ops.transpose(ops.matmul(attn, v), (0, 2, 1, 3))
        ctx = ops.reshape(ctx, (n, length, dim))
        return ops.add(ops.matmul(ctx, self.wo), self.bo), attn

    def params(self):
        return [self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo]


class EncoderBlock:
    """Pre-norm residual block: attention then a two-layer gelu feed-forward."""

    def __init__(self, name: str, rng, cfg: EncoderConfig):
        self.ln1 = LayerNorm(f"{name}.ln1", cfg.dim)
        self.msa = Msa(f"{name}.msa", rng, cfg.dim, cfg.heads)
        self.ln2 = LayerNorm(f"{name}.ln2", cfg.dim)
        self.w1 = Parameter(f"{name}.ffn.w1", trunc_normal(rng, (cfg.dim, cfg.ffn_dim)))
        self.b1 = Parameter(f"{name}.ffn.b1", np.zeros(cfg.ffn_dim, dtype=np.float32))
        self.w2 = Parameter(f"{name}.ffn.w2", trunc_normal(rng, (cfg.ffn_dim, cfg.dim)))
        self.b2 = Parameter(f"{name}.ffn.b2", np.zeros(cfg.dim, dtype=np.float32))

    def __call__(self, x: Tensor):
        y, attn = self.msa(self.ln1(x))
        x = ops.add(x, y)
        h = ops.gelu(ops.add(ops.matmul(self.ln2(x), self.w1), self.b1))
        return ops.add(x, ops.add(ops.matmul(h, self.w2), self.b2)), attn

    def params(self):
        return (self.ln1.params() + self.msa.params() + self.ln2.params()
                + [self.w1, self.b1, self.w2, self.b2])


class Encoder:
    def __init__(self, cfg: EncoderConfig, num_classes: int, rng: np.random.Generator):
        self.cfg = cfg
        self.blocks = [EncoderBlock(f"encoder.block{i}", rng, cfg)
                       for i in range(cfg.blocks)]
        self.ln = LayerNorm("encoder.ln", cfg.dim)
        self.head = Linear("head", rng, cfg.dim, num_classes)

    def encode_and_classify(self, tokens: Tensor):
        """Positions in, blocks, final norm, per-token class logits.

        Returns (logits, attention maps per block). Span masking, when used,
        must already be applied to the tokens: positions are added after it
        so masked slots keep their location identity.
        """
        length = tokens.shape[1]
        x = ops.add(tokens, Tensor(sinusoidal_positions(length, self.cfg.dim)))
        attns = []
        for block in self.blocks:
            x, attn = block(x)
            attns.append(attn)
        return self.head(self.ln(x)), attns

    def params(self):
        out = []
        for block in self.blocks:
            out += block.params()
        return out + self.ln.params() + self.head.params()
