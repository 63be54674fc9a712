"""Command-line entry points: train, evaluate, predict, gradcheck, dump-attention."""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from . import checkpoint, ctc, data, ops, trainer
from . import config as config_mod
from . import gradcheck as gc
from .encoder import EncoderConfig
from .extractor import ExtractorConfig
from .gradcheck import gradient_check
from .model import Model
from .pgm import load_pgm, write_pgm
from .tensor import Tape, Tensor, backward


def cmd_train(args) -> int:
    if args.resume:
        t = trainer.Trainer.resume(args.resume)
    else:
        t = trainer.Trainer(config_mod.load_config(args.config))
    t.run()
    return 0


def cmd_evaluate(args) -> int:
    ck = checkpoint.load(args.ckpt)
    model, charset, cfg = trainer.model_from_checkpoint(ck, use_ema=not args.raw)
    manifest = data.load_manifest(args.manifest)
    uncovered = sum(1 for _, text in manifest.entries if not charset.covers(text))
    if uncovered:
        print(f"warning: {uncovered} lines contain characters outside the "
              f"checkpoint charset", file=sys.stderr)
    cer, wer = trainer.evaluate_manifest(model, manifest, charset, cfg.batch_size)
    weights = "raw" if args.raw else "ema"
    print(f"cer={cer!r} wer={wer!r} ({weights} weights, "
          f"{len(manifest.entries)} lines)")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("manifest,weights,cer,wer\n")
        fh.write(f"{args.manifest},{weights},{cer!r},{wer!r}\n")
    return 0


def cmd_predict(args) -> int:
    ck = checkpoint.load(args.ckpt)
    model, charset, _ = trainer.model_from_checkpoint(ck, use_ema=False)
    print(trainer.predict_image(model, charset, load_pgm(args.image)))
    return 0


def _model_projection_check() -> float:
    """End-to-end CTC gradient through encoder and extractor projection."""
    ext = ExtractorConfig(input_h=16, input_w=32, widths=(4, 4, 8, 16), token_dim=16)
    enc = EncoderConfig(dim=16, blocks=1, heads=2, ffn_dim=64)
    model = Model(ext, enc, num_classes=4, seed=0)  # K = 3 character classes
    rng = np.random.default_rng(2)
    for p in model.params():
        p.data = p.data.astype(np.float64)
        # At init scale (std 0.02) the attention scores barely depend on the
        # input and the q/k weight gradients sit below the finite-difference
        # resolution floor, so probe the Jacobian at generic magnitudes.
        if p.name.startswith("encoder.block") and p.data.ndim == 2:
            p.data = rng.normal(size=p.data.shape) * 0.3
    images = Tensor(np.random.default_rng(1).random((1, 1, 16, 32)))
    targets = [np.array([1, 3, 2], dtype=np.int64)]
    candidates = model.encoder.params() + model.extractor.proj.params()
    # Key biases shift every attention score in a row equally, so softmax
    # cancels them and their true gradient is identically zero. Central
    # differences only see round-off noise there; assert the zero directly.
    probe = [p for p in candidates if not p.name.endswith("msa.bk")]
    key_biases = [p for p in candidates if p.name.endswith("msa.bk")]

    def loss(*_):
        logits, _ = model.forward(images, training=False)
        return ctc.ctc_loss_batch(ops.log_softmax(logits, axis=-1), targets)

    err = gradient_check(loss, probe, h=1e-5)
    with Tape() as tape:
        value = loss()
    backward(tape, value, params=key_biases)
    for p in key_biases:
        err = max(err, float(np.abs(p.grad).max()))
    return err


def _ctc_check(instances: int = 30) -> float:
    """Analytic CTC gradient vs central differences on random instances."""
    rng = np.random.default_rng(3)
    worst = 0.0
    checked = 0
    while checked < instances:
        T, K = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        U = int(rng.integers(1, 4))
        target = rng.integers(1, K + 1, size=U)
        logits = Tensor(rng.normal(size=(1, T, K + 1)), requires_grad=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # discard infeasible draws quietly
            nll, _ = ctc.ctc_loss(ops.log_softmax(logits, axis=-1).data[0], target)
        if not np.isfinite(nll):  # target cannot fit in T frames
            continue
        err = gradient_check(
            lambda lg: ctc.ctc_loss_batch(ops.log_softmax(lg, axis=-1), [target]),
            [logits], h=1e-5)
        worst = max(worst, err)
        checked += 1
    return worst


def cmd_gradcheck(args) -> int:
    rows, ok = gc.run_battery(gc.primitive_battery(seed=0))
    if args.corrupt:
        # test fixture: score the planted wrong adjoint as a real primitive
        rng = np.random.default_rng(7)
        x = Tensor(rng.normal(size=(3, 3)), requires_grad=True, dtype=np.float64)
        err = gradient_check(lambda x: ops.sum_(gc._broken_double(x)), (x,), h=1e-5)
        rows.append(("corrupted adjoint (fixture)", err, 1e-6, err < 1e-6))
        ok = ok and err < 1e-6
    model_err = _model_projection_check()
    rows.append(("full model (tiny, ctc loss)", model_err, 1e-3, model_err < 1e-3))
    ctc_err = _ctc_check()
    rows.append(("ctc batch loss", ctc_err, 1e-6, ctc_err < 1e-6))
    ok = ok and model_err < 1e-3 and ctc_err < 1e-6
    width = max(len(r[0]) for r in rows)
    for name, err, tol, passed in rows:
        mark = "ok" if passed else "FAIL"
        print(f"{name:<{width}}  {err:.3e}  (limit {tol:.0e})  {mark}")
    print("all checks passed" if ok else "FAILURES above")
    return 0 if ok else 1


def head_averaged_attention(model: Model, img: np.ndarray, block: int) -> np.ndarray:
    """Head-averaged (L, L) attention map of one block for one image."""
    attns = model.forward(Tensor(data.prepare(img)[None, None, :, :]),
                          training=False)[1]
    if not 0 <= block < len(attns):
        raise IndexError(f"block {block} out of range [0, {len(attns)})")
    return attns[block].data[0].mean(axis=0)


def to_heatmap(arr: np.ndarray) -> np.ndarray:
    """Min-max normalize to uint8 [0, 255]; a constant map becomes zeros."""
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        return np.zeros(arr.shape, dtype=np.uint8)
    return np.clip(np.rint((arr - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)


def cmd_dump_attention(args) -> int:
    ck = checkpoint.load(args.ckpt)
    model, _, _ = trainer.model_from_checkpoint(ck, use_ema=False)
    img = load_pgm(args.image)
    try:
        amap = head_averaged_attention(model, img, args.block)
    except IndexError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    length = amap.shape[0]
    token = args.token if args.token is not None else length // 2
    if not 0 <= token < length:
        print(f"error: token {token} out of range [0, {length})", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    map_path = os.path.join(args.out, f"block{args.block}.pgm")
    strip_path = os.path.join(args.out, f"block{args.block}_token{token}.pgm")
    write_pgm(map_path, to_heatmap(amap))
    write_pgm(strip_path, to_heatmap(amap[token:token + 1, :]))
    print(map_path)
    print(strip_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="htrkit",
                                     description="Line-level handwriting recognition toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run or resume a training loop")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="flat key = value config file")
    group.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="corpus CER/WER for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--ema", action="store_true", default=True,
                      help="use EMA shadow weights (default)")
    mode.add_argument("--raw", action="store_true",
                      help="use raw trained weights")
    p.add_argument("--out", default="evaluate.csv", help="CSV output path")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("predict", help="transcribe one PGM line image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("gradcheck", help="gradient-check battery report")
    p.add_argument("--corrupt", action="store_true",
                   help="also score the planted wrong adjoint as a real check")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("dump-attention", help="write attention heatmap PGMs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--block", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--token", type=int, default=None,
                   help="query row for the 1xL strip (default: middle token)")
    p.set_defaults(fn=cmd_dump_attention)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename or e}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
