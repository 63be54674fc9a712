"""Training loop: SAM-wrapped CTC steps, EMA shadow, deterministic resume."""

from __future__ import annotations

import math
import os
import warnings
from contextlib import contextmanager

import numpy as np

from . import checkpoint, ctc, data, ops, optim, spanmask
from . import config as config_mod
from .metrics import corpus_rates
from .model import Model
from .pgm import load_pgm
from .tensor import Tape, Tensor, backward

# augmentation draws from per-sample slots 0..B-1; span masks get a disjoint
# stream so neither changes when the other is reconfigured
MASK_SLOT_BASE = 1_000_000


def build_model(cfg: config_mod.TrainConfig, num_classes: int) -> Model:
    return Model(config_mod.extractor_config(cfg), config_mod.encoder_config(cfg),
                 num_classes, seed=cfg.seed)


def sample_masks(cfg, count: int, token_count: int, iteration: int):
    if cfg.mask_ratio == 0.0:
        return None
    mcfg = spanmask.MaskConfig(ratio=cfg.mask_ratio, span=cfg.mask_span)
    return [spanmask.sample(token_count, mcfg,
                            data.sample_rng(cfg.seed, iteration, MASK_SLOT_BASE + i))
            for i in range(count)]


def train_step(model: Model, batch: data.Batch, masks, opt: optim.AdamWState,
               ema: optim.EmaState, rho: float, lr: float) -> float:
    """One SAM step on a fixed batch; returns the final-pass loss."""
    params = model.params()

    def run_pass(final: bool) -> float:
        with Tape() as tape:
            logits, _ = model.forward(batch.images, masks=masks,
                                      training=True, update_stats=final)
            logp = ops.log_softmax(logits, axis=-1)
            loss = ctc.ctc_loss_batch(logp, batch.labels)
            backward(tape, loss, params=params)
        return float(loss.data)

    loss = optim.sam_step(params, run_pass, opt, optim.SamConfig(rho=rho), lr)
    if math.isfinite(loss):
        optim.ema_update(ema, params)
    return loss


@contextmanager
def using_params(model: Model, values: dict):
    """Temporarily point the model's parameters at `values` (e.g. EMA shadow)."""
    saved = [(p, p.data) for p in model.params()]
    try:
        for p, _ in saved:
            p.data = values[p.name]
        yield
    finally:
        for p, old in saved:
            p.data = old


def transcribe(model: Model, images: Tensor, charset: data.Charset) -> list:
    logits, _ = model.forward(images, training=False)
    logp = ops.log_softmax(logits, axis=-1).data
    return [ctc.greedy_decode(row, charset) for row in logp]


def evaluate_manifest(model: Model, manifest: data.Manifest, charset: data.Charset,
                      batch_size: int = 8):
    """Greedy-decode every line; returns micro-averaged (CER, WER)."""
    if not manifest.entries:
        raise ValueError("empty manifest")
    pairs = []
    for start in range(0, len(manifest.entries), batch_size):
        chunk = manifest.entries[start:start + batch_size]
        samples = [(load_pgm(os.path.join(manifest.root, rel)), text)
                   for rel, text in chunk]
        batch = data.make_batch(samples, charset, mode="eval")
        pairs += zip(transcribe(model, batch.images, charset), batch.texts)
    return corpus_rates(pairs)


def predict_image(model: Model, charset: data.Charset, img: np.ndarray) -> str:
    x = Tensor(data.prepare(img)[None, None, :, :])
    return transcribe(model, x, charset)[0]


def model_from_checkpoint(ck: checkpoint.Checkpoint, use_ema: bool = False):
    """Rebuild (model, charset, config) from a stored checkpoint."""
    cfg = config_mod.from_dict(ck.config)
    charset = data.Charset(ck.charset_chars)
    model = build_model(cfg, len(charset) + 1)
    source = ck.ema if use_ema else ck.params
    checkpoint.apply_tensors(source, {p.name: p.data for p in model.params()},
                             "parameters")
    checkpoint.apply_tensors(ck.buffers, model.buffers(), "buffers")
    return model, charset, cfg


class Trainer:
    """Owns one training run; resumable bit-exactly from its checkpoints."""

    def __init__(self, cfg: config_mod.TrainConfig):
        if not cfg.train_manifest:
            raise ValueError("config is missing train_manifest")
        self.cfg = cfg
        self.train_manifest = data.load_manifest(cfg.train_manifest)
        self.val_manifest = (data.load_manifest(cfg.val_manifest)
                             if cfg.val_manifest else None)
        self.charset = data.build_charset(self.train_manifest)
        self.model = build_model(cfg, len(self.charset) + 1)
        self.opt = optim.AdamWState(weight_decay=cfg.weight_decay)
        self.ema = optim.EmaState.init(self.model.params(), decay=cfg.ema_decay)
        self.data_rng = np.random.default_rng(cfg.seed)
        self.iteration = 0
        self.sched = config_mod.schedule(cfg)
        self.aug = (config_mod.augment_config(cfg) if cfg.augment
                    else data.AugmentConfig(p=0.0))
        root = self.train_manifest.root
        # desk-scale corpora fit in memory; load each line image once
        self.images = {rel: load_pgm(os.path.join(root, rel))
                       for rel, _ in self.train_manifest.entries}
        self.token_count = config_mod.extractor_config(cfg).token_count
        self.bad_streak = 0
        self.best_cer = math.inf

    @classmethod
    def resume(cls, ckpt_path) -> "Trainer":
        ck = checkpoint.load(ckpt_path)
        t = cls(config_mod.from_dict(ck.config))
        if t.charset.chars != ck.charset_chars:
            raise ValueError("training corpus charset changed since checkpoint")
        checkpoint.apply_tensors(ck.params,
                                 {p.name: p.data for p in t.model.params()},
                                 "parameters")
        checkpoint.apply_tensors(ck.buffers, t.model.buffers(), "buffers")
        t.opt.m = {k: v.copy() for k, v in ck.adam_m.items()}
        t.opt.v = {k: v.copy() for k, v in ck.adam_v.items()}
        t.opt.step = ck.step
        t.ema.shadow = {k: v.copy() for k, v in ck.ema.items()}
        t.data_rng.bit_generator.state = ck.rng_state
        t.iteration = ck.iteration
        return t

    def snapshot(self) -> checkpoint.Checkpoint:
        return checkpoint.Checkpoint(
            charset_chars=self.charset.chars,
            config=config_mod.to_dict(self.cfg),
            iteration=self.iteration,
            step=self.opt.step,
            rng_state=self.data_rng.bit_generator.state,
            params={p.name: p.data for p in self.model.params()},
            adam_m=dict(self.opt.m),
            adam_v=dict(self.opt.v),
            ema=dict(self.ema.shadow),
            buffers=self.model.buffers())

    def step_once(self) -> float:
        cfg = self.cfg
        it = self.iteration
        entries = self.train_manifest.entries
        idx = self.data_rng.integers(0, len(entries), size=cfg.batch_size)
        samples = [(self.images[entries[i][0]], entries[i][1]) for i in idx]
        rngs = [data.sample_rng(cfg.seed, it, slot) for slot in range(len(samples))]
        batch = data.make_batch(samples, self.charset, mode="train",
                                rngs=rngs, aug_cfg=self.aug)
        masks = sample_masks(cfg, len(batch.texts), self.token_count, it)
        lr = optim.lr_at(it, self.sched)
        loss = train_step(self.model, batch, masks, self.opt, self.ema,
                          cfg.sam_rho, lr)
        if math.isfinite(loss):
            self.bad_streak = 0
        else:
            self.bad_streak += 1
            warnings.warn(f"iteration {it}: non-finite loss {loss}, step skipped")
            if self.bad_streak >= 3:
                raise RuntimeError("aborting: three consecutive non-finite losses")
        self.iteration = it + 1
        return loss

    def validate_ema(self):
        with using_params(self.model, self.ema.shadow):
            return evaluate_manifest(self.model, self.val_manifest, self.charset,
                                     self.cfg.batch_size)

    def run(self, max_iters=None) -> None:
        cfg = self.cfg
        os.makedirs(cfg.out_dir, exist_ok=True)
        log_path = os.path.join(cfg.out_dir, "metrics.csv")
        fresh_log = not os.path.exists(log_path)
        end = cfg.total_iters
        if max_iters is not None:
            end = min(end, self.iteration + max_iters)
        with open(log_path, "a", encoding="utf-8") as log:
            if fresh_log:
                log.write("iter,loss,lr,val_cer,val_wer\n")
            while self.iteration < end:
                it = self.iteration
                lr = optim.lr_at(it, self.sched)
                loss = self.step_once()
                val_cer = val_wer = ""
                if self.val_manifest is not None and (it + 1) % cfg.val_every == 0:
                    c, w = self.validate_ema()
                    val_cer, val_wer = repr(c), repr(w)
                    if c < self.best_cer:
                        self.best_cer = c
                        checkpoint.save(os.path.join(cfg.out_dir, "best.ckpt"),
                                        self.snapshot())
                log.write(f"{it},{loss!r},{lr!r},{val_cer},{val_wer}\n")
                log.flush()
                if (it + 1) % cfg.ckpt_every == 0 or self.iteration == end:
                    checkpoint.save(os.path.join(cfg.out_dir, "last.ckpt"),
                                    self.snapshot())
