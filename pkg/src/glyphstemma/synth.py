"""Synthetic textual traditions rendered as clean pages from letter templates.

Used to check the visual pipeline against a known gold standard: every witness
descends from a seed text through a random copying tree, each copy adding
scribe-specific habits and random slips.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .textmetrics import levenshtein_matrix

# 5x7 bitmaps; every letter is one 8-connected component spanning the full cell
_TEMPLATES = {
    "a": [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "b": ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
    "c": [".####", "#....", "#....", "#....", "#....", "#....", ".####"],
    "d": ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
    "e": ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
    "f": ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
    "h": ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "k": ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
    "l": ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
    "m": ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
    "n": ["#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"],
    "o": [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "p": ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
    "r": ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
    "s": [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
    "t": ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
    "u": ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "v": ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
    "x": ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
    "z": ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
}

ALPHABET = "".join(sorted(_TEMPLATES))


def template(letter: str, scale: int = 3) -> np.ndarray:
    rows = _TEMPLATES[letter]
    base = np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
    return np.kron(base, np.ones((scale, scale), dtype=bool))


@dataclass
class Tradition:
    seed_text: str
    witnesses: dict[str, str]
    parents: dict[str, str]
    edits: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"seed_text": self.seed_text, "witnesses": self.witnesses, "parents": self.parents, "edits": self.edits}


def _letter_weights(rng: np.random.Generator, alphabet: str) -> np.ndarray:
    # Zipf-like letter frequencies in a random order
    ranks = rng.permutation(len(alphabet)) + 1
    w = 1.0 / ranks**0.8
    return w / w.sum()


def generate_tradition(
    n_copies: int = 8,
    length: int = 600,
    seed: int = 7,
    alphabet: str = ALPHABET,
    edits_range: tuple[int, int] = (8, 40),
    habit_rate: float = 0.6,
) -> Tradition:
    """Seed text plus ``n_copies`` witnesses descended along a random copying tree.

    Each copy picks its exemplar among the seed and earlier copies, then applies
    a random number of edits: with probability ``habit_rate`` one of the
    scribe's two habitual letter substitutions, otherwise a random
    substitution, insertion or deletion.
    """
    if n_copies < 2:
        raise ValueError("need at least two copies")
    rng = np.random.default_rng(seed)
    weights = _letter_weights(rng, alphabet)
    letters = list(alphabet)

    def draw(size=None):
        return rng.choice(letters, size=size, p=weights)

    seed_text = "".join(draw(length))
    texts = {"seed": seed_text}
    parents: dict[str, str] = {}
    edits: dict[str, int] = {}
    witnesses: dict[str, str] = {}
    for c in range(1, n_copies + 1):
        wid = f"w{c:02d}"
        parent = str(rng.choice(list(texts)))
        text = list(texts[parent])
        habits = [tuple(rng.choice(letters, size=2, replace=False)) for _ in range(2)]
        n_edits = int(rng.integers(edits_range[0], edits_range[1] + 1))
        for _ in range(n_edits):
            if rng.random() < habit_rate:
                src, dst = habits[int(rng.integers(2))]
                where = [i for i, ch in enumerate(text) if ch == src]
                if where:
                    text[int(rng.choice(where))] = dst
                    continue
            op = int(rng.integers(3))
            pos = int(rng.integers(len(text)))
            if op == 0:
                text[pos] = str(draw())
            elif op == 1:
                text.insert(pos, str(draw()))
            elif len(text) > 1:
                del text[pos]
        texts[wid] = "".join(text)
        witnesses[wid] = texts[wid]
        parents[wid] = parent
        edits[wid] = n_edits
    return Tradition(seed_text, witnesses, parents, edits)


def render_page(
    text: str,
    chars_per_line: int = 40,
    scale: int = 3,
    gap: int = 6,
    line_gap: int = 12,
    margin: int = 20,
) -> np.ndarray:
    """Draw ``text`` (template letters only, no spaces) black on white."""
    glyphs = [template(ch, scale) for ch in text]
    gh, gw = 7 * scale, 5 * scale
    n_lines = max(1, -(-len(text) // chars_per_line))
    width = 2 * margin + chars_per_line * (gw + gap) - gap
    height = 2 * margin + n_lines * (gh + line_gap) - line_gap
    page = np.full((height, width), 255, dtype=np.uint8)
    for i, g in enumerate(glyphs):
        line, col = divmod(i, chars_per_line)
        y = margin + line * (gh + line_gap)
        x = margin + col * (gw + gap)
        page[y : y + gh, x : x + gw][g] = 0
    return page


def write_corpus(out_dir: str | Path, tradition: Tradition, render: bool = True, **render_kw) -> Path:
    """Write texts, page images, gold distances and a corpus manifest.

    Returns the manifest path.
    """
    out = Path(out_dir)
    (out / "texts").mkdir(parents=True, exist_ok=True)
    (out / "seed.txt").write_text(tradition.seed_text + "\n", encoding="utf-8")
    manuscripts = []
    for wid, text in tradition.witnesses.items():
        tpath = out / "texts" / f"{wid}.txt"
        tpath.write_text(text + "\n", encoding="utf-8")
        entry = {"id": wid, "image_paths": [], "gold_transcript_path": str(tpath.relative_to(out))}
        if render:
            (out / "pages").mkdir(exist_ok=True)
            ipath = out / "pages" / f"{wid}.png"
            Image.fromarray(render_page(text, **render_kw), mode="L").save(ipath, format="PNG")
            entry["image_paths"] = [str(ipath.relative_to(out))]
        manuscripts.append(entry)
    levenshtein_matrix(tradition.witnesses).to_csv(out / "gold_levenshtein.csv")
    (out / "tradition.json").write_text(json.dumps(tradition.to_dict(), indent=2) + "\n", encoding="utf-8")
    manifest = {"manuscripts": manuscripts, "parameters": {"k": len(ALPHABET)}}
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return mpath
