"""Manifest ingestion, charset, 512x64 preparation, and the five-way
stochastic augmentation.

Images are float32 in [0, 1], dark ink on white. Morphology is named with
respect to ink: dilation thickens ink (neighborhood minimum on intensity),
erosion thins it (neighborhood maximum).
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .pgm import load_pgm
from .tensor import Tensor

TARGET_H = 64
TARGET_W = 512


@dataclass(frozen=True)
class Manifest:
    root: str
    entries: list  # (relative path, transcription)


def load_manifest(path) -> Manifest:
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{lineno}: missing TAB separator")
            rel, text = line.split("\t", 1)
            if not text:
                raise ValueError(f"{path}:{lineno}: empty transcription")
            entries.append((rel, text))
    return Manifest(root=os.path.dirname(os.path.abspath(path)), entries=entries)


class Charset:
    """Characters sorted by Unicode scalar; ids 1..K, 0 reserved for blank."""

    def __init__(self, chars):
        ordered = sorted(set(chars))
        if not ordered:
            raise ValueError("empty charset")
        self.chars = "".join(ordered)
        self._ids = {c: i + 1 for i, c in enumerate(ordered)}

    def __len__(self) -> int:
        return len(self.chars)

    def encode(self, text: str) -> np.ndarray:
        try:
            return np.array([self._ids[c] for c in text], dtype=np.int64)
        except KeyError as e:
            raise KeyError(f"character {e.args[0]!r} not in charset") from None

    def decode(self, ids) -> str:
        return "".join(self.chars[i - 1] for i in ids)

    def covers(self, text: str) -> bool:
        return all(c in self._ids for c in text)


def build_charset(manifest: Manifest) -> Charset:
    if not manifest.entries:
        raise ValueError("cannot build a charset from an empty manifest")
    return Charset("".join(text for _, text in manifest.entries))


# ---------------------------------------------------------------------------
# geometry

def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with half-pixel sample mapping.

    src = (dst + 0.5) * in/out - 0.5, clamped; exact identity at unit scale.
    """
    in_h, in_w = img.shape

    def axis_coords(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = (src - lo).astype(img.dtype)
        return lo, hi, frac

    ylo, yhi, fy = axis_coords(out_h, in_h)
    xlo, xhi, fx = axis_coords(out_w, in_w)
    rows = img[ylo] * (1 - fy)[:, None] + img[yhi] * fy[:, None]
    return rows[:, xlo] * (1 - fx) + rows[:, xhi] * fx


def prepare(img: np.ndarray) -> np.ndarray:
    """Scale to height 64 keeping aspect; pad right with white to width 512,
    or squeeze the width down when the aspect-preserved width overshoots."""
    h, w = img.shape
    if h <= 0 or w <= 0:
        raise ValueError(f"empty image {img.shape}")
    img = np.asarray(img, dtype=np.float32)
    new_w = max(1, round(w * TARGET_H / h))
    if new_w <= TARGET_W:
        scaled = bilinear_resize(img, TARGET_H, new_w)
        if new_w < TARGET_W:
            pad = np.ones((TARGET_H, TARGET_W - new_w), dtype=scaled.dtype)
            scaled = np.concatenate([scaled, pad], axis=1)
        return scaled
    return bilinear_resize(img, TARGET_H, TARGET_W)


# ---------------------------------------------------------------------------
# augmentation

@dataclass(frozen=True)
class AugmentConfig:
    p: float = 0.5
    rotate_deg: float = 2.0
    shear_deg: float = 5.0
    scale_lo: float = 0.9
    scale_hi: float = 1.1
    translate_frac: float = 0.02
    jitter_lo: float = 0.8
    jitter_hi: float = 1.2
    elastic_alpha: float = 8.0
    elastic_sigma: float = 6.0


def _affine(img, rng, cfg):
    h, w = img.shape
    angle = np.deg2rad(rng.uniform(-cfg.rotate_deg, cfg.rotate_deg))
    shear = np.tan(np.deg2rad(rng.uniform(-cfg.shear_deg, cfg.shear_deg)))
    scale = rng.uniform(cfg.scale_lo, cfg.scale_hi)
    ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * h
    tx = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * w
    c, s = np.cos(angle), np.sin(angle)
    # output->input map in (row, col) order, about the image center
    lin = np.array([[c, -s], [s, c]]) @ np.array([[1.0, 0.0], [shear, 1.0]]) * scale
    lin = np.linalg.inv(lin)
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - lin @ (center + np.array([ty, tx]))
    return ndimage.affine_transform(img, lin, offset=offset, order=1,
                                    mode="constant", cval=1.0)


def dilate(img: np.ndarray) -> np.ndarray:
    """Thicken ink: 3x3 neighborhood minimum (white border outside)."""
    return ndimage.minimum_filter(img, size=3, mode="constant", cval=1.0)


def erode(img: np.ndarray) -> np.ndarray:
    """Thin ink: 3x3 neighborhood maximum."""
    return ndimage.maximum_filter(img, size=3, mode="constant", cval=1.0)


def _jitter(img, rng, cfg):
    b = rng.uniform(cfg.jitter_lo, cfg.jitter_hi)
    c = rng.uniform(cfg.jitter_lo, cfg.jitter_hi)
    if b == 1.0 and c == 1.0:
        return img
    return (img * np.float32(b) - np.float32(0.5)) * np.float32(c) + np.float32(0.5)


def _elastic(img, rng, cfg):
    h, w = img.shape
    fields = []
    for _ in range(2):
        raw = rng.uniform(-1.0, 1.0, size=(h, w))
        smooth = ndimage.gaussian_filter(raw, cfg.elastic_sigma)
        peak = np.abs(smooth).max()
        fields.append(np.zeros_like(smooth) if peak == 0.0
                      else smooth / peak * cfg.elastic_alpha)
    dy, dx = fields
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    warped = ndimage.map_coordinates(img, [yy + dy, xx + dx], order=1,
                                     mode="constant", cval=1.0)
    return warped.astype(img.dtype, copy=False)


def augment(img: np.ndarray, rng: np.random.Generator,
            cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    """Apply each transform independently with probability cfg.p, in the
    fixed order affine, morphology, jitter, elastic; erosion wins when both
    morphology gates fire. Pure function of (img, generator state)."""
    gates = rng.random(5) < cfg.p  # affine, erosion, dilation, jitter, elastic
    out = np.asarray(img, dtype=np.float32)
    if gates[0]:
        out = _affine(out, rng, cfg)
    if gates[1]:
        out = erode(out)
    elif gates[2]:
        out = dilate(out)
    if gates[3]:
        out = _jitter(out, rng, cfg)
    if gates[4]:
        out = _elastic(out, rng, cfg)
    return np.clip(out, 0.0, 1.0).astype(np.float32, copy=False)


def sample_rng(seed: int, iteration: int, slot: int) -> np.random.Generator:
    """Per-sample generator; parallel-safe and resume-stable by construction."""
    return np.random.default_rng(np.random.SeedSequence([seed, iteration, slot]))


# ---------------------------------------------------------------------------
# batching

@dataclass
class Batch:
    images: Tensor          # (N, 1, 64, 512) float32
    labels: list            # per-sample int64 id arrays
    texts: list             # raw transcripts
    paths: list = field(default_factory=list)


def make_batch(samples, charset: Charset, mode: str = "eval", rngs=None,
               aug_cfg: AugmentConfig = AugmentConfig()) -> Batch:
    """samples: (image array, transcript) pairs. Train mode augments before
    preparation and drops samples whose transcript the charset cannot encode."""
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    if not samples:
        raise ValueError("empty batch")
    images, labels, texts = [], [], []
    for i, (img, text) in enumerate(samples):
        if mode == "train":
            if not charset.covers(text):
                warnings.warn(f"skipping sample {i}: transcript not encodable")
                continue
            img = augment(img, rngs[i], aug_cfg)
            labels.append(charset.encode(text))
        else:
            labels.append(charset.encode(text) if charset.covers(text) else None)
        images.append(prepare(img))
        texts.append(text)
    if not images:
        raise ValueError("no encodable samples in batch")
    stack = np.stack(images).astype(np.float32)[:, None, :, :]
    return Batch(images=Tensor(stack), labels=labels, texts=texts)
