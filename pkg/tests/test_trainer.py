"""Training loop: composition invariant, determinism, resume, failure paths."""

import math

import numpy as np
import pytest

from htrkit import checkpoint, ctc, data, ops, optim
from htrkit import trainer as trainer_mod
from htrkit.config import TrainConfig
from htrkit.synth import make_corpus
from htrkit.tensor import Tape, backward
from htrkit.trainer import Trainer, evaluate_manifest, model_from_checkpoint


def micro_cfg(tmp_path, lines=4, **overrides) -> TrainConfig:
    """Smallest config that still exercises every stage."""
    manifest = make_corpus(tmp_path / "corpus", lines, seed=1)
    base = dict(seed=3, out_dir=str(tmp_path / "run"),
                train_manifest=str(manifest), val_manifest=str(manifest),
                batch_size=2, total_iters=50, warmup_iters=5,
                enc_blocks=1, enc_dim=16, enc_heads=2, enc_ffn=32,
                ext_widths=(4, 4, 8, 16), augment=False,
                val_every=25, ckpt_every=25)
    base.update(overrides)
    return TrainConfig(**base)


def model_state(t: Trainer) -> dict:
    state = {p.name: p.data.copy() for p in t.model.params()}
    state.update({k: v.copy() for k, v in t.model.buffers().items()})
    return state


def assert_states_equal(a: dict, b: dict):
    assert sorted(a) == sorted(b)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k], err_msg=k)


def test_step_is_exact_composition_when_features_off(tmp_path):
    # with masking, augmentation, and the two-pass ascent all disabled, one
    # trainer step must equal the hand-written extract/encode/ctc/adamw chain
    cfg = micro_cfg(tmp_path, mask_ratio=0.0, mask_span=0, sam_rho=0.0)
    t1 = Trainer(cfg)
    t2 = Trainer(cfg)
    t1.step_once()

    entries = t2.train_manifest.entries
    idx = t2.data_rng.integers(0, len(entries), size=cfg.batch_size)
    samples = [(t2.images[entries[i][0]], entries[i][1]) for i in idx]
    rngs = [data.sample_rng(cfg.seed, 0, slot) for slot in range(len(samples))]
    batch = data.make_batch(samples, t2.charset, mode="train",
                            rngs=rngs, aug_cfg=data.AugmentConfig(p=0.0))
    params = t2.model.params()
    with Tape() as tape:
        logits, _ = t2.model.forward(batch.images, masks=None,
                                     training=True, update_stats=True)
        loss = ctc.ctc_loss_batch(ops.log_softmax(logits, axis=-1), batch.labels)
        backward(tape, loss, params=params)
    optim.adamw_step(params, t2.opt, optim.lr_at(0, t2.sched))
    optim.ema_update(t2.ema, params)

    assert_states_equal(model_state(t1), model_state(t2))
    for k in t1.opt.m:
        np.testing.assert_array_equal(t1.opt.m[k], t2.opt.m[k])
        np.testing.assert_array_equal(t1.opt.v[k], t2.opt.v[k])
    for k in t1.ema.shadow:
        np.testing.assert_array_equal(t1.ema.shadow[k], t2.ema.shadow[k])


def test_same_seed_same_trajectory(tmp_path):
    cfg = micro_cfg(tmp_path)
    t1, t2 = Trainer(cfg), Trainer(cfg)
    losses1 = [t1.step_once() for _ in range(6)]
    losses2 = [t2.step_once() for _ in range(6)]
    assert losses1 == losses2
    assert_states_equal(model_state(t1), model_state(t2))


def test_masks_deterministic_per_iteration(tmp_path):
    cfg = micro_cfg(tmp_path, mask_ratio=0.4, mask_span=4)
    a = trainer_mod.sample_masks(cfg, 3, 128, iteration=7)
    b = trainer_mod.sample_masks(cfg, 3, 128, iteration=7)
    c = trainer_mod.sample_masks(cfg, 3, 128, iteration=8)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.flags, y.flags)
    assert any(not np.array_equal(x.flags, y.flags) for x, y in zip(a, c))
    assert trainer_mod.sample_masks(cfg, 3, 128, 0)[0].flags.sum() == int(0.4 * 128)


def test_mask_ratio_zero_means_no_masks(tmp_path):
    cfg = micro_cfg(tmp_path, mask_ratio=0.0)
    assert trainer_mod.sample_masks(cfg, 3, 128, 0) is None


def test_loss_decreases(tmp_path):
    cfg = micro_cfg(tmp_path, total_iters=120, warmup_iters=10,
                    max_lr=3e-3, sam_rho=0.0, mask_ratio=0.0)
    t = Trainer(cfg)
    losses = [t.step_once() for _ in range(120)]
    assert np.mean(losses[-20:]) < 0.5 * np.mean(losses[:20])


def test_run_writes_log_and_checkpoints(tmp_path):
    cfg = micro_cfg(tmp_path, total_iters=6, warmup_iters=2,
                    val_every=3, ckpt_every=3)
    Trainer(cfg).run()
    out = tmp_path / "run"
    rows = (out / "metrics.csv").read_text(encoding="utf-8").strip().split("\n")
    assert rows[0] == "iter,loss,lr,val_cer,val_wer"
    assert len(rows) == 7
    first = rows[1].split(",")
    assert first[0] == "0" and float(first[1]) > 0
    assert rows[3].split(",")[3] != ""  # validation ran at iteration 2
    assert (out / "last.ckpt").exists() and (out / "best.ckpt").exists()
    ck = checkpoint.load(out / "last.ckpt")
    assert ck.iteration == 6


def test_resume_reproduces_uninterrupted_log(tmp_path):
    cfg_a = micro_cfg(tmp_path, out_dir=str(tmp_path / "a"),
                      total_iters=8, warmup_iters=2, val_every=4, ckpt_every=4)
    Trainer(cfg_a).run()
    cfg_b = micro_cfg(tmp_path, out_dir=str(tmp_path / "b"),
                      total_iters=8, warmup_iters=2, val_every=4, ckpt_every=4)
    t = Trainer(cfg_b)
    t.run(max_iters=4)
    resumed = Trainer.resume(tmp_path / "b" / "last.ckpt")
    assert resumed.iteration == 4
    resumed.run()
    log_a = (tmp_path / "a" / "metrics.csv").read_text(encoding="utf-8")
    log_b = (tmp_path / "b" / "metrics.csv").read_text(encoding="utf-8")
    assert log_a == log_b


def test_resume_restores_exact_state(tmp_path):
    cfg = micro_cfg(tmp_path, total_iters=10, ckpt_every=5, val_every=5)
    t = Trainer(cfg)
    t.run(max_iters=5)
    resumed = Trainer.resume(tmp_path / "run" / "last.ckpt")
    assert_states_equal(model_state(t), model_state(resumed))
    assert resumed.data_rng.bit_generator.state == t.data_rng.bit_generator.state
    assert resumed.opt.step == t.opt.step


def test_resume_rejects_changed_charset(tmp_path):
    cfg = micro_cfg(tmp_path, total_iters=4, warmup_iters=2, ckpt_every=2)
    t = Trainer(cfg)
    t.run(max_iters=2)
    other = make_corpus(tmp_path / "other", 16, seed=9)  # wider charset
    ck = checkpoint.load(tmp_path / "run" / "last.ckpt")
    ck.config["train_manifest"] = str(other)
    checkpoint.save(tmp_path / "run" / "swapped.ckpt", ck)
    with pytest.raises(ValueError, match="charset"):
        Trainer.resume(tmp_path / "run" / "swapped.ckpt")


def test_evaluation_does_not_mutate_state(tmp_path):
    cfg = micro_cfg(tmp_path)
    t = Trainer(cfg)
    for _ in range(2):
        t.step_once()
    before = model_state(t)
    ema_before = {k: v.copy() for k, v in t.ema.shadow.items()}
    evaluate_manifest(t.model, t.train_manifest, t.charset, cfg.batch_size)
    t.validate_ema()
    assert_states_equal(before, model_state(t))
    for k in ema_before:
        np.testing.assert_array_equal(ema_before[k], t.ema.shadow[k])


def test_nonfinite_losses_warn_then_abort(tmp_path, monkeypatch):
    cfg = micro_cfg(tmp_path)
    t = Trainer(cfg)
    monkeypatch.setattr(trainer_mod, "train_step",
                        lambda *a, **k: float("nan"))
    with pytest.warns(UserWarning, match="non-finite"):
        t.step_once()
    with pytest.warns(UserWarning):
        t.step_once()
    with pytest.warns(UserWarning), pytest.raises(RuntimeError, match="three"):
        t.step_once()


def test_nonfinite_streak_resets_on_recovery(tmp_path, monkeypatch):
    cfg = micro_cfg(tmp_path)
    t = Trainer(cfg)
    real = trainer_mod.train_step
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] in (1, 2, 4):  # two bad, one good, one bad
            return float("inf")
        return real(*a, **k)

    monkeypatch.setattr(trainer_mod, "train_step", flaky)
    with pytest.warns(UserWarning):
        t.step_once()
        t.step_once()
    t.step_once()
    assert t.bad_streak == 0
    with pytest.warns(UserWarning):
        t.step_once()
    assert t.bad_streak == 1


def test_nonfinite_step_skips_ema(tmp_path, monkeypatch):
    cfg = micro_cfg(tmp_path)
    t = Trainer(cfg)
    entries = t.train_manifest.entries[:2]
    samples = [(t.images[rel], text) for rel, text in entries]
    batch = data.make_batch(samples, t.charset, mode="eval")
    shadow = {k: v.copy() for k, v in t.ema.shadow.items()}
    monkeypatch.setattr(optim, "sam_step", lambda *a, **k: float("nan"))
    loss = trainer_mod.train_step(t.model, batch, None, t.opt, t.ema, 0.0, 1e-3)
    assert math.isnan(loss)
    for k in shadow:  # shadow untouched by the skipped step
        np.testing.assert_array_equal(shadow[k], t.ema.shadow[k])


def test_model_from_checkpoint_weights_selection(tmp_path):
    cfg = micro_cfg(tmp_path, total_iters=4, warmup_iters=2, ckpt_every=2)
    t = Trainer(cfg)
    t.run(max_iters=2)
    ck = checkpoint.load(tmp_path / "run" / "last.ckpt")
    raw, charset, _ = model_from_checkpoint(ck, use_ema=False)
    ema, _, _ = model_from_checkpoint(ck, use_ema=True)
    assert charset.chars == t.charset.chars
    raw_p = {p.name: p.data for p in raw.params()}
    ema_p = {p.name: p.data for p in ema.params()}
    for name in raw_p:
        np.testing.assert_array_equal(raw_p[name], ck.params[name])
        np.testing.assert_array_equal(ema_p[name], ck.ema[name])
    assert any(not np.array_equal(raw_p[n], ema_p[n]) for n in raw_p)


def test_trainer_requires_manifest():
    with pytest.raises(ValueError, match="train_manifest"):
        Trainer(TrainConfig.tiny())


def test_evaluate_manifest_rejects_empty(tmp_path):
    cfg = micro_cfg(tmp_path)
    t = Trainer(cfg)
    empty = data.Manifest(root=str(tmp_path), entries=[])
    with pytest.raises(ValueError, match="empty"):
        evaluate_manifest(t.model, empty, t.charset)
