"""Synthetic line-image corpus for desk-scale training tests.

Sixteen letters a..p, each drawn as a fixed 4x3 cell pattern (a solid top
bar plus cells encoding the letter index), so the corpus needs no fonts and
every glyph pair is distinct by construction. Corpus rendering jitters each
glyph instance (offset, advance, cell size) from the corpus seed so no two
instances are pixel-identical; without an rng the rendering is canonical.
"""

from __future__ import annotations

import os

import numpy as np

from .pgm import write_pgm

ALPHABET = "abcdefghijklmnop"
CELL = 12          # pixels per glyph cell
GLYPH_ROWS = 4
GLYPH_COLS = 3
TOP = 8            # vertical margin inside the 64 px line
ADVANCE = 56       # horizontal start-to-start distance
MARGIN = 8
# jitter bounds per glyph instance (pixels); TOP-3 and the +-2 cell change
# keep the tallest draw, 8-3+4*(12+2)=61, inside the 64 px line
JITTER_XY = 3
JITTER_CELL = 2


def glyph_pattern(ch: str) -> np.ndarray:
    """4x3 boolean cell pattern; True cells are ink."""
    index = ALPHABET.index(ch)
    b = [(index >> k) & 1 for k in range(4)]
    return np.array([
        [1, 1, 1],
        [b[0], 0, b[1]],
        [0, b[2], 0],
        [b[3], 0, 1],
    ], dtype=bool)


def render_line(text: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """White 64-pixel-tall line with black glyphs; width grows with length.

    With an rng, every glyph instance gets its own offset/size jitter, the
    desk-scale stand-in for handwriting variation; without one the layout
    is the fixed canonical grid.
    """
    if not text or any(ch not in ALPHABET for ch in text):
        raise ValueError(f"text must be non-empty over {ALPHABET!r}, got {text!r}")
    width = MARGIN + ADVANCE * (len(text) - 1) + GLYPH_COLS * CELL + MARGIN
    img = np.ones((64, width), dtype=np.float32)
    for pos, ch in enumerate(text):
        x0 = MARGIN + pos * ADVANCE
        y0 = TOP
        cell = CELL
        if rng is not None:
            x0 += int(rng.integers(-JITTER_XY, JITTER_XY + 1))
            y0 += int(rng.integers(-JITTER_XY, JITTER_XY + 1))
            cell += int(rng.integers(-JITTER_CELL, JITTER_CELL + 1))
        x0 = max(x0, 0)
        cells = glyph_pattern(ch)
        for r in range(GLYPH_ROWS):
            for c in range(GLYPH_COLS):
                if cells[r, c]:
                    img[y0 + r * cell:y0 + (r + 1) * cell,
                        x0 + c * cell:min(x0 + (c + 1) * cell, width)] = 0.0
    return img


def make_corpus(out_dir, n_lines: int, seed: int = 0,
                chars_per_line: int = 5) -> str:
    """Render n distinct random lines plus a manifest; returns manifest path."""
    if n_lines < 1:
        raise ValueError("need at least one line")
    if n_lines > len(ALPHABET) ** chars_per_line:
        raise ValueError("not enough distinct strings at this length")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    letters = list(ALPHABET)
    texts = []
    seen = set()
    while len(texts) < n_lines:
        text = "".join(rng.choice(letters, size=chars_per_line))
        if text not in seen:
            seen.add(text)
            texts.append(text)
    rows = []
    for i, text in enumerate(texts):
        name = f"line_{i:04d}.pgm"
        write_pgm(os.path.join(out_dir, name), render_line(text))
        rows.append(f"{name}\t{text}\n")
    manifest = os.path.join(out_dir, "manifest.tsv")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.writelines(rows)
    return manifest
