"""File-backed pipeline stages: segment -> embed -> cluster -> distances -> tree.

Each stage reads the previous stage's files, so any stage can be re-run (or
its inputs replaced, e.g. by hand-corrected crops) without the others.
"""

from __future__ import annotations

import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import Clustering, cluster_purity, kmeans
from .embedding import EmbeddingConfig, EmbeddingError, embed_crops, read_sidecar, write_sidecar
from .imaging import BoundingBox, GlyphCrop, SegmentationParams, load_image, load_patch, save_patch, segment_pages
from .mapping import DistanceMatrix, pairwise_distances
from .stemma import neighbor_joining, to_newick, upgma
from .textmetrics import NormalizationOptions, levenshtein_matrix, normalize_text, rank_report

log = logging.getLogger(__name__)


class InputError(Exception):
    """Bad or missing input; maps to exit code 1."""


class NumericalError(Exception):
    """A numerical stage could not produce a result; maps to exit code 2."""


@dataclass
class ManuscriptEntry:
    id: str
    image_paths: list[Path]
    gold_transcript_path: Path | None = None


@dataclass
class RunParams:
    k: int | None = None
    seed: int = 0
    max_iter: int = 300
    tol: float = 1e-6
    discard_fraction: float = 0.1
    n_convention: str = "retained"
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    imaging: SegmentationParams = field(default_factory=SegmentationParams)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "discard_fraction": self.discard_fraction,
            "n_convention": self.n_convention,
            "embedding": self.embedding.to_dict(),
            "imaging": self.imaging.to_dict(),
        }


@dataclass
class CorpusManifest:
    manuscripts: list[ManuscriptEntry]
    params: RunParams
    source: dict = field(default_factory=dict)

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.manuscripts]


def load_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    base = path.parent
    entries = []
    for item in raw.get("manuscripts", []):
        if "id" not in item:
            raise InputError(f"{path}: manuscript entry without id")
        gold = item.get("gold_transcript_path")
        entries.append(
            ManuscriptEntry(
                str(item["id"]),
                [base / p for p in item.get("image_paths", [])],
                base / gold if gold else None,
            )
        )
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise InputError(f"{path}: duplicate manuscript ids")
    params = params_from_dict(raw.get("parameters", {}), base)
    return CorpusManifest(entries, params, raw)


def params_from_dict(d: dict, base: Path | None = None) -> RunParams:
    emb = dict(d.get("embedding", {}))
    if emb.get("external_path") and base is not None:
        emb["external_path"] = str(base / emb["external_path"])
    try:
        return RunParams(
            k=d.get("k"),
            seed=int(d.get("seed", 0)),
            max_iter=int(d.get("max_iter", 300)),
            tol=float(d.get("tol", 1e-6)),
            discard_fraction=float(d.get("discard_fraction", 0.1)),
            n_convention=d.get("n_convention", "retained"),
            embedding=EmbeddingConfig(**emb),
            imaging=SegmentationParams(**d.get("imaging", {})),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad run parameters: {exc}") from None


def override(params: RunParams, **changes) -> RunParams:
    """Apply non-None overrides; ``imaging``/``embedding`` take dicts of fields."""
    img = {k: v for k, v in (changes.pop("imaging", None) or {}).items() if v is not None}
    emb = {k: v for k, v in (changes.pop("embedding", None) or {}).items() if v is not None}
    top = {k: v for k, v in changes.items() if v is not None}
    try:
        return replace(
            params,
            imaging=replace(params.imaging, **img),
            embedding=replace(params.embedding, **emb),
            **top,
        )
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None


# -- run record --------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@contextmanager
def record_stage(out_dir: Path, stage: str, manifest: CorpusManifest | None, params: dict, dirs=()):
    started = _now()
    yield
    entry = {"parameters": params, "started": started, "finished": _now()}
    for d in [out_dir, *dirs]:
        d.mkdir(parents=True, exist_ok=True)
        rpath = d / "run_record.json"
        record = json.loads(rpath.read_text(encoding="utf-8")) if rpath.exists() else {}
        record.setdefault("tool", "glyphstemma")
        record["version"] = __version__
        if manifest is not None:
            record["manifest"] = manifest.source
        record.setdefault("stages", {})[stage] = entry
        rpath.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def _map(fn, args, jobs: int):
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, *zip(*args)))


# -- segment ------------------------------------------------------------------


def _segment_one(entry: ManuscriptEntry, params: SegmentationParams, out_dir: Path) -> int:
    missing = [str(p) for p in entry.image_paths if not Path(p).is_file()]
    if missing:
        raise InputError(f"{entry.id}: image not found: {', '.join(missing)}")
    if not entry.image_paths:
        raise InputError(f"{entry.id}: no image paths")
    images = [load_image(p) for p in entry.image_paths]
    crops, pages = segment_pages(images, entry.id, params)
    ms_dir = out_dir / entry.id
    crop_dir = ms_dir / "crops"
    if crop_dir.exists():
        shutil.rmtree(crop_dir)
    crop_dir.mkdir(parents=True)
    glyphs = []
    for crop, page in zip(crops, pages):
        fname = f"{crop.glyph_id}.png"
        save_patch(crop.patch, crop_dir / fname)
        glyphs.append({"index": crop.index, "file": f"crops/{fname}", "page": page, "line": crop.line, "box": crop.box.to_list()})
    _dump(
        ms_dir / "crops.json",
        {
            "manuscript_id": entry.id,
            "pages": [str(p) for p in entry.image_paths],
            "parameters": params.to_dict(),
            "glyphs": glyphs,
        },
    )
    return len(crops)


def run_segment(manifest: CorpusManifest, out_dir: Path, jobs: int = 1) -> dict[str, int | str]:
    """Segment every manuscript; failures are collected, not fatal for the others."""
    out_dir.mkdir(parents=True, exist_ok=True)
    params = manifest.params.imaging
    results: dict[str, int | str] = {}
    with record_stage(out_dir, "segment", manifest, params.to_dict(), [out_dir / i for i in manifest.ids]):
        outcomes = _map(_safe_segment, [(e, params, out_dir) for e in manifest.manuscripts], jobs)
        for entry, outcome in zip(manifest.manuscripts, outcomes):
            results[entry.id] = outcome
    return results


def _safe_segment(entry, params, out_dir):
    try:
        return _segment_one(entry, params, out_dir)
    except InputError as exc:
        return f"error: {exc}"


def load_crops(ms_dir: Path) -> list[GlyphCrop]:
    meta_path = ms_dir / "crops.json"
    if not meta_path.is_file():
        raise InputError(f"missing {meta_path}; run 'segment' first")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    crops = []
    for g in sorted(meta["glyphs"], key=lambda g: g["index"]):
        fpath = ms_dir / g["file"]
        if not fpath.is_file():
            raise InputError(f"crop image missing: {fpath}")
        crops.append(GlyphCrop(meta["manuscript_id"], g["index"], BoundingBox(*g["box"]), g["line"], load_patch(fpath)))
    if [c.index for c in crops] != list(range(len(crops))):
        raise InputError(f"{meta_path}: glyph indices are not contiguous from 0")
    return crops


# -- embed ------------------------------------------------------------------------


def _embed_one(ms_dir: Path, cfg: EmbeddingConfig) -> int:
    crops = load_crops(ms_dir)
    try:
        vectors = embed_crops(crops, cfg)
    except EmbeddingError as exc:
        raise InputError(str(exc)) from None
    write_sidecar(ms_dir / "embeddings.txt", vectors)
    return len(vectors)


def run_embed(manifest: CorpusManifest, out_dir: Path, jobs: int = 1) -> dict[str, int]:
    cfg = manifest.params.embedding
    dirs = [out_dir / i for i in manifest.ids]
    with record_stage(out_dir, "embed", manifest, cfg.to_dict(), dirs):
        counts = _map(_embed_one, [(d, cfg) for d in dirs], jobs)
    return dict(zip(manifest.ids, counts))


def load_embeddings(ms_dir: Path, manuscript_id: str) -> np.ndarray:
    path = ms_dir / "embeddings.txt"
    if not path.is_file():
        raise InputError(f"missing {path}; run 'embed' first")
    try:
        records = read_sidecar(path)
    except EmbeddingError as exc:
        raise InputError(str(exc)) from None
    ids = sorted(records)
    expected = [f"{manuscript_id}_{i:05d}" for i in range(len(ids))]
    if ids != expected:
        raise InputError(f"{path}: glyph ids are not {manuscript_id}_00000..")
    dims = {records[i].size for i in ids}
    if len(dims) != 1:
        raise InputError(f"{path}: mixed vector dimensions {sorted(dims)}")
    X = np.vstack([records[i] for i in expected]) if expected else np.zeros((0, 0))
    if not np.all(np.isfinite(X)):
        raise InputError(f"{path}: non-finite values")
    return X


# -- cluster ---------------------------------------------------------------------


def gold_labels(entry: ManuscriptEntry) -> list[str] | None:
    if entry.gold_transcript_path is None or not entry.gold_transcript_path.is_file():
        return None
    text = entry.gold_transcript_path.read_text(encoding="utf-8")
    return list(normalize_text(text, NormalizationOptions(lowercase=False, strip_whitespace=True, strip_combining=False)))


def _cluster_one(entry: ManuscriptEntry, ms_dir: Path, params: RunParams, export: bool) -> dict:
    X = load_embeddings(ms_dir, entry.id)
    if params.k is None:
        raise InputError("k is required (set parameters.k or pass --k)")
    if params.k > X.shape[0]:
        raise InputError(f"{entry.id}: k={params.k} exceeds glyph count {X.shape[0]}")
    c = kmeans(X, params.k, params.seed, params.max_iter, params.tol, manuscript_id=entry.id)
    if not np.all(np.isfinite(c.centroids)):
        raise NumericalError(f"{entry.id}: non-finite centroids")
    labels = gold_labels(entry)
    purity = cluster_purity(c, labels) if labels is not None and len(labels) == X.shape[0] else None
    _dump(
        ms_dir / "clusters.json",
        {
            "manuscript_id": entry.id,
            "k": c.k,
            "seed": c.seed,
            "parameters": {"max_iter": params.max_iter, "tol": params.tol},
            "iterations": c.n_iter,
            "sse_trace": c.sse_trace,
            "purity": purity,
            "counts": c.counts.tolist(),
            "assignments": c.assignment.tolist(),
            "centroids": c.centroids.tolist(),
        },
    )
    if export:
        export_dir = ms_dir / "clusters"
        if export_dir.exists():
            shutil.rmtree(export_dir)
        for idx, cid in enumerate(c.assignment.tolist()):
            dest = export_dir / f"cluster_{cid}"
            dest.mkdir(parents=True, exist_ok=True)
            name = f"{entry.id}_{idx:05d}.png"
            shutil.copyfile(ms_dir / "crops" / name, dest / name)
    return {"k": c.k, "glyphs": int(X.shape[0]), "purity": purity}


def run_cluster(manifest: CorpusManifest, out_dir: Path, jobs: int = 1, export: bool = False) -> dict[str, dict]:
    p = manifest.params
    if p.k is None or p.k < 1:
        raise InputError("k is required and must be >= 1")
    dirs = [out_dir / i for i in manifest.ids]
    with record_stage(out_dir, "cluster", manifest, {"k": p.k, "seed": p.seed, "max_iter": p.max_iter, "tol": p.tol}, dirs):
        results = _map(_cluster_one, [(e, d, p, export) for e, d in zip(manifest.manuscripts, dirs)], jobs)
    return dict(zip(manifest.ids, results))


def load_clustering(ms_dir: Path) -> Clustering:
    path = ms_dir / "clusters.json"
    if not path.is_file():
        raise InputError(f"missing {path}; run 'cluster' first")
    d = json.loads(path.read_text(encoding="utf-8"))
    return Clustering(
        d["manuscript_id"],
        d["k"],
        np.array(d["assignments"], dtype=np.int64),
        np.array(d["centroids"], dtype=np.float64),
        np.array(d["counts"], dtype=np.int64),
        d["seed"],
        list(d.get("sse_trace", [])),
        d.get("iterations", 0),
    )


# -- distances / tree ----------------------------------------------------------


def run_distances(manifest: CorpusManifest, out_dir: Path, jobs: int = 1) -> DistanceMatrix:
    p = manifest.params
    if len(manifest.ids) < 2:
        raise InputError("need at least two manuscripts")
    clusterings = [load_clustering(out_dir / i) for i in manifest.ids]
    ks = {c.k for c in clusterings}
    if len(ks) != 1:
        raise InputError(f"all manuscripts must use the same k, found {sorted(ks)}")
    params = {"discard_fraction": p.discard_fraction, "n_convention": p.n_convention}
    with record_stage(out_dir, "distances", manifest, params):
        try:
            if jobs > 1:
                with ProcessPoolExecutor(max_workers=jobs) as ex:
                    dm, mappings = pairwise_distances(clusterings, p.discard_fraction, p.n_convention, ex)
            else:
                dm, mappings = pairwise_distances(clusterings, p.discard_fraction, p.n_convention)
        except ValueError as exc:
            raise NumericalError(str(exc)) from None
        if not np.all(np.isfinite(dm.values)):
            raise NumericalError("non-finite distances")
        dm.to_csv(out_dir / "distances.csv")
        for (a, b), mapping in mappings.items():
            _dump(out_dir / f"mapping_{a}_{b}.json", mapping.to_dict())
    return dm


TREE_FILES = {"nj": "stemma_nj.nwk", "upgma": "tree_upgma.nwk"}


def build_tree(distances_csv: Path, method: str, output: Path | None = None) -> Path:
    try:
        dm = DistanceMatrix.from_csv(distances_csv)
    except (OSError, ValueError, IndexError) as exc:
        raise InputError(f"cannot read {distances_csv}: {exc}") from None
    try:
        tree = neighbor_joining(dm) if method == "nj" else upgma(dm)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    output = output or distances_csv.parent / TREE_FILES[method]
    output.write_text(to_newick(tree) + "\n", encoding="utf-8")
    return output


def gold_distances(manifest: CorpusManifest, opts: NormalizationOptions | None = None) -> DistanceMatrix:
    texts = {}
    for e in manifest.manuscripts:
        if e.gold_transcript_path is None or not e.gold_transcript_path.is_file():
            raise InputError(f"{e.id}: gold transcript missing")
        texts[e.id] = e.gold_transcript_path.read_text(encoding="utf-8")
    return levenshtein_matrix(texts, opts or NormalizationOptions())


def run_all(manifest: CorpusManifest, out_dir: Path, jobs: int = 1, export: bool = False) -> dict:
    seg = run_segment(manifest, out_dir, jobs)
    failed = {k: v for k, v in seg.items() if isinstance(v, str)}
    if failed:
        raise InputError("; ".join(failed.values()))
    run_embed(manifest, out_dir, jobs)
    clusters = run_cluster(manifest, out_dir, jobs, export)
    dm = run_distances(manifest, out_dir, jobs)
    with record_stage(out_dir, "tree", None, {"methods": sorted(TREE_FILES)}):
        trees = {m: str(build_tree(out_dir / "distances.csv", m)) for m in TREE_FILES}
    summary = {"glyphs": seg, "clusters": clusters, "trees": trees}
    if all(e.gold_transcript_path is not None for e in manifest.manuscripts):
        report = rank_report(gold_distances(manifest), dm)
        (out_dir / "rank_report.csv").write_text(report.to_csv(), encoding="utf-8")
        summary["spearman"] = report.rho
    return summary

