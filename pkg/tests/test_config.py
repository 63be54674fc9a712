"""Flat config parsing, round trips, and builder mappings."""

import dataclasses

import pytest

from htrkit.config import (TrainConfig, augment_config, encoder_config,
                           extractor_config, from_dict, load_config,
                           parse_config, schedule, to_dict)


def test_defaults_describe_full_profile():
    cfg = TrainConfig()
    assert cfg.enc_dim == 768 and cfg.enc_blocks == 4 and cfg.enc_heads == 6
    assert cfg.ext_widths == (64, 64, 128, 256)
    assert cfg.mask_ratio == 0.4 and cfg.mask_span == 8
    assert cfg.weight_decay == 0.5 and cfg.sam_rho == 0.05


def test_tiny_profile_overrides():
    cfg = TrainConfig.tiny(seed=9)
    assert cfg.enc_blocks == 1 and cfg.enc_dim == 32
    assert cfg.seed == 9 and not cfg.augment
    # desk-overfit tuning: SAM off, half-glyph spans, hot lr, light decay
    assert cfg.sam_rho == 0.0 and cfg.mask_span == 4
    assert cfg.max_lr == 1e-2 and cfg.weight_decay == 0.01


def test_parse_happy_path():
    text = """
    # run settings
    seed = 3
    max_lr = 0.002   # inline comment
    augment = false
    ext_widths = 8, 8, 16, 32
    out_dir = runs/a b
    """
    cfg = parse_config(text)
    assert cfg.seed == 3
    assert cfg.max_lr == 0.002
    assert cfg.augment is False
    assert cfg.ext_widths == (8, 8, 16, 32)
    assert cfg.out_dir == "runs/a b"


def test_parse_rejects_unknown_key():
    with pytest.raises(ValueError, match="line 1.*learning_rate"):
        parse_config("learning_rate = 0.1")


def test_parse_rejects_bad_value():
    with pytest.raises(ValueError, match="line 1"):
        parse_config("seed = three")


def test_parse_rejects_missing_equals():
    with pytest.raises(ValueError, match="line 2"):
        parse_config("seed = 1\njust some words")


def test_parse_bool_is_strict():
    assert parse_config("augment = yes").augment is True
    assert parse_config("augment = 0").augment is False
    with pytest.raises(ValueError, match="boolean"):
        parse_config("augment = maybe")


def test_dict_round_trip():
    cfg = TrainConfig.tiny(seed=4, out_dir="x")
    again = from_dict(to_dict(cfg))
    assert again == cfg
    assert isinstance(again.ext_widths, tuple)


def test_from_dict_rejects_unknown_keys():
    d = to_dict(TrainConfig())
    d["mystery"] = 1
    with pytest.raises(ValueError, match="mystery"):
        from_dict(d)


def test_load_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 11\nbatch_size = 2\n", encoding="utf-8")
    cfg = load_config(p)
    assert cfg.seed == 11 and cfg.batch_size == 2


def test_builders_map_fields():
    cfg = TrainConfig.tiny()
    ext = extractor_config(cfg)
    assert ext.widths == cfg.ext_widths and ext.token_dim == cfg.enc_dim
    enc = encoder_config(cfg)
    assert (enc.dim, enc.blocks, enc.heads, enc.ffn_dim) == (
        cfg.enc_dim, cfg.enc_blocks, cfg.enc_heads, cfg.enc_ffn)
    sch = schedule(cfg)
    assert (sch.warmup_iters, sch.total_iters, sch.max_lr) == (
        cfg.warmup_iters, cfg.total_iters, cfg.max_lr)
    aug = augment_config(cfg)
    assert aug.p == cfg.aug_prob


def test_every_field_survives_parse():
    # every config key can be written and read back through the flat format
    cfg = TrainConfig.tiny(seed=5)
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    assert parse_config("\n".join(lines)) == cfg
