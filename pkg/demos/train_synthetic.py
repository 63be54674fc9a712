"""End-to-end: synthesize a corpus, overfit it, predict, dump attention.

Writes everything under demo_out/ in the current directory. The tiny
profile memorizes the 8-line corpus in a few minutes on one CPU core;
training stops at the first iteration whose train CER is exactly zero.
"""

import os
import time

import numpy as np

from htrkit import cli
from htrkit.config import TrainConfig
from htrkit.data import load_manifest
from htrkit.synth import make_corpus
from htrkit.trainer import Trainer, evaluate_manifest, predict_image
from htrkit.pgm import load_pgm, write_pgm

out = "demo_out"
manifest = make_corpus(os.path.join(out, "corpus"), 8, seed=11)
print("corpus:", manifest)
for rel, text in load_manifest(manifest).entries[:3]:
    print(f"  {rel}  ->  {text!r}")

cfg = TrainConfig.tiny(seed=0, out_dir=os.path.join(out, "run"),
                       train_manifest=manifest)
trainer = Trainer(cfg)
print(f"\nmodel parameters: {sum(p.data.size for p in trainer.model.params()):,}")
print("training until the corpus is memorized (tiny profile, desk-scale)...")

t0 = time.time()
losses = []
while trainer.iteration < 2500:
    losses.append(trainer.step_once())
    if trainer.iteration % 50 == 0:
        cer, _ = evaluate_manifest(trainer.model, trainer.train_manifest,
                                   trainer.charset)
        if trainer.iteration % 200 == 0 or cer == 0.0:
            print(f"  iter {trainer.iteration:4d}  loss {np.mean(losses[-50:]):7.2f}"
                  f"  train CER {cer:.3f}  ({time.time() - t0:.0f}s)")
        if cer == 0.0:
            break

entries = load_manifest(manifest).entries
print("\ntruth vs prediction:")
for rel, text in entries[:3]:
    img = load_pgm(os.path.join(os.path.dirname(manifest), rel))
    print(f"  {text!r}  ->  {predict_image(trainer.model, trainer.charset, img)!r}")
cer, wer = evaluate_manifest(trainer.model, trainer.train_manifest, trainer.charset)
print(f"train-set rates: CER {cer:.3f}  WER {wer:.3f}")

img = load_pgm(os.path.join(os.path.dirname(manifest), entries[0][0]))
amap = cli.head_averaged_attention(trainer.model, img, block=0)
write_pgm(os.path.join(out, "attention.pgm"), cli.to_heatmap(amap))
print(f"\nattention map ({amap.shape[0]}x{amap.shape[1]}) -> {out}/attention.pgm")
print("rows sum to one before normalization:", float(amap.sum(axis=1).max()))
