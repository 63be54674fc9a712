"""Full recognizer: extractor tokens, optional span masking, encoder logits."""

from __future__ import annotations

import numpy as np

from . import spanmask
from .encoder import Encoder, EncoderConfig
from .extractor import Extractor, ExtractorConfig
from .layers import trunc_normal
from .tensor import Parameter, Tensor


class Model:
    def __init__(self, ext_cfg: ExtractorConfig, enc_cfg: EncoderConfig,
                 num_classes: int, seed: int):
        if ext_cfg.token_dim != enc_cfg.dim:
            raise ValueError(
                f"extractor token dim {ext_cfg.token_dim} != encoder dim {enc_cfg.dim}")
        if num_classes < 2:
            raise ValueError("need at least blank plus one character class")
        rng = np.random.default_rng(seed)
        self.ext_cfg = ext_cfg
        self.enc_cfg = enc_cfg
        self.num_classes = num_classes
        self.extractor = Extractor(ext_cfg, rng)
        self.mask_token = Parameter("mask_token", trunc_normal(rng, (enc_cfg.dim,)))
        self.encoder = Encoder(enc_cfg, num_classes, rng)

    def params(self) -> list:
        return self.extractor.params() + [self.mask_token] + self.encoder.params()

    def buffers(self) -> dict:
        return self.extractor.buffers()

    def forward(self, images: Tensor, masks=None, training: bool = False,
                update_stats: bool = True):
        """Images to per-token class logits plus per-block attention maps.

        `masks` (a list of SpanMask, one per sample) replaces the flagged
        tokens with the learnable mask token before encoding.
        """
        tokens = self.extractor(images, training, update_stats)
        if masks is not None:
            tokens = spanmask.apply(tokens, masks, self.mask_token)
        return self.encoder.encode_and_classify(tokens)
