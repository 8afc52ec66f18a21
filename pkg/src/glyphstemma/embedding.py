"""Glyph feature vectors: a letterboxed-patch embedder and a sidecar importer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingConfig:
    method: str = "patch"
    patch_size: int = 32
    external_path: str | None = None

    def __post_init__(self) -> None:
        if self.method not in ("patch", "external"):
            raise ValueError(f"unknown embedding method {self.method!r}")
        if self.patch_size < 4:
            raise ValueError("patch_size must be >= 4")
        if self.method == "external" and not self.external_path:
            raise ValueError("external method needs external_path")

    def to_dict(self) -> dict:
        return {"method": self.method, "patch_size": self.patch_size, "external_path": self.external_path}


@dataclass
class FeatureVector:
    glyph_ref: tuple[str, int]
    values: np.ndarray


def letterbox(patch: np.ndarray, size: int) -> np.ndarray:
    """Scale the tight ink box of ``patch`` into a ``size``×``size`` float canvas."""
    patch = np.asarray(patch, dtype=bool)
    canvas = np.zeros((size, size), dtype=np.float32)
    rows = np.flatnonzero(patch.any(axis=1))
    if rows.size == 0:
        return canvas
    cols = np.flatnonzero(patch.any(axis=0))
    tight = patch[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    h, w = tight.shape
    scale = size / max(h, w)
    nh = min(size, max(1, int(round(h * scale))))
    nw = min(size, max(1, int(round(w * scale))))
    src = Image.fromarray(tight.astype(np.float32), mode="F")
    scaled = np.asarray(src.resize((nw, nh), resample=Image.Resampling.BILINEAR), dtype=np.float32)
    top, left = (size - nh) // 2, (size - nw) // 2
    canvas[top : top + nh, left : left + nw] = np.clip(scaled, 0.0, 1.0)
    return canvas


def embed_patch(crop, cfg: EmbeddingConfig = EmbeddingConfig()) -> FeatureVector:
    if cfg.method != "patch":
        raise ValueError("embed_patch requires method='patch'")
    vec = letterbox(crop.patch, cfg.patch_size).astype(np.float64).ravel()
    norm = math.sqrt(float(np.dot(vec, vec)))
    if norm > 0:
        vec = vec / norm
    return FeatureVector((crop.manuscript_id, crop.index), vec)


def embed_crops(crops, cfg: EmbeddingConfig = EmbeddingConfig()) -> list[FeatureVector]:
    if cfg.method == "external":
        return load_external_embeddings(cfg.external_path, crops)
    return [embed_patch(c, cfg) for c in crops]


def read_sidecar(path: str | Path) -> dict[str, np.ndarray]:
    """Parse ``<glyph id> <f1> ... <fD>`` lines. Duplicate ids are rejected."""
    records: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            gid = parts[0]
            if gid in records:
                raise EmbeddingError(f"{path}:{lineno}: duplicate glyph id {gid}")
            try:
                records[gid] = np.array([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingError(f"{path}:{lineno}: glyph {gid}: {exc}") from None
    return records


def write_sidecar(path: str | Path, vectors, ids=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, fv in enumerate(vectors):
            gid = ids[i] if ids is not None else f"{fv.glyph_ref[0]}_{fv.glyph_ref[1]:05d}"
            fh.write(gid + " " + " ".join(repr(float(v)) for v in fv.values) + "\n")


def load_external_embeddings(path: str | Path, crops) -> list[FeatureVector]:
    if path is None or not Path(path).is_file():
        raise EmbeddingError(f"embedding file not found: {path}")
    records = read_sidecar(path)
    out = []
    dim = None
    for crop in crops:
        gid = crop.glyph_id
        if gid not in records:
            raise EmbeddingError(f"glyph {gid} missing from {path}")
        vec = records[gid]
        if vec.size == 0:
            raise EmbeddingError(f"glyph {gid} has an empty vector")
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise EmbeddingError(f"glyph {gid} has dimension {vec.size}, expected {dim}")
        bad = np.flatnonzero(~np.isfinite(vec))
        if bad.size:
            raise EmbeddingError(f"glyph {gid} has non-finite value at position {int(bad[0])}")
        out.append(FeatureVector((crop.manuscript_id, crop.index), vec))
    return out
