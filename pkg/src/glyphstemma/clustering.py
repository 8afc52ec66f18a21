"""Seeded k-means (k-means++ init, Lloyd iterations) with cluster statistics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Clustering:
    manuscript_id: str
    k: int
    assignment: np.ndarray  # int, one cluster id per glyph
    centroids: np.ndarray  # (k, D)
    counts: np.ndarray  # (k,)
    seed: int
    sse_trace: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def sse(self) -> float:
        return self.sse_trace[-1] if self.sse_trace else float("nan")


@dataclass
class ClusterFrequencies:
    manuscript_id: str
    freq: np.ndarray


def _sq_dists(X: np.ndarray, C: np.ndarray, chunk: int = 2048) -> np.ndarray:
    # direct (x - c)^2 sums; the expansion trick is faster but not exact at zero
    out = np.empty((X.shape[0], C.shape[0]), dtype=np.float64)
    for start in range(0, X.shape[0], chunk):
        block = X[start : start + chunk, None, :] - C[None, :, :]
        out[start : start + chunk] = np.einsum("ijk,ijk->ij", block, block)
    return out


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(X, X[chosen]).ravel()
    for _ in range(1, k):
        total = float(closest.sum())
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen center; take the first unused index
            used = set(chosen)
            idx = next(i for i in range(n) if i not in used)
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(X, X[idx : idx + 1]).ravel())
    return X[chosen].copy()


def _assign(d2: np.ndarray, previous: np.ndarray | None) -> np.ndarray:
    labels = np.argmin(d2, axis=1)
    if previous is not None:
        # keep the current cluster on exact ties so SSE can only drop
        rows = np.arange(d2.shape[0])
        keep = d2[rows, previous] <= d2[rows, labels]
        labels = np.where(keep, previous, labels)
    return labels


def _update_centroids(X: np.ndarray, labels: np.ndarray, k: int, old: np.ndarray) -> np.ndarray:
    C = old.copy()
    for j in range(k):
        members = X[labels == j]
        if len(members):
            C[j] = members.mean(axis=0)
    return C


def _reseed_empty(X, labels, C, d2_own):
    """Move the farthest point of a multi-member cluster into each empty cluster."""
    k = C.shape[0]
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        donors = counts[labels] >= 2
        cand = np.where(donors, d2_own, -1.0)
        idx = int(np.argmax(cand))
        counts[labels[idx]] -= 1
        labels[idx] = j
        counts[j] = 1
        C[j] = X[idx]
        d2_own[idx] = 0.0
    return labels, C


def kmeans(vectors, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6, manuscript_id: str = "") -> Clustering:
    """Cluster the rows of ``vectors`` into ``k`` groups.

    The recorded ``sse_trace`` holds the within-cluster sum of squares after
    each update step and never increases.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("vectors must be a 2-D array")
    n = X.shape[0]
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of vectors ({n})")
    if max_iter < 1 or tol < 0:
        raise ValueError("max_iter must be >= 1 and tol >= 0")

    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, k, rng)
    labels = None
    trace: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(X, C)
        new_labels = _assign(d2, labels)
        d2_own = d2[np.arange(n), new_labels].copy()
        new_labels, C = _reseed_empty(X, new_labels, C, d2_own)
        new_C = _update_centroids(X, new_labels, k, C)
        shift = float(np.sqrt(((new_C - C) ** 2).sum(axis=1)).max())
        unchanged = labels is not None and np.array_equal(new_labels, labels)
        labels, C = new_labels, new_C
        trace.append(float(_sq_dists(X, C)[np.arange(n), labels].sum()))
        if unchanged or shift < tol:
            break

    counts = np.bincount(labels, minlength=k)
    return Clustering(manuscript_id, k, labels, C, counts, seed, trace, it)


def cluster_frequencies(c: Clustering) -> ClusterFrequencies:
    counts = np.asarray(c.counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty clustering")
    return ClusterFrequencies(c.manuscript_id, counts / total)


def cluster_purity(c: Clustering, gold_labels) -> float:
    gold = list(gold_labels)
    if len(gold) != len(c.assignment):
        raise ValueError(f"{len(gold)} gold labels for {len(c.assignment)} glyphs")
    if not gold:
        raise ValueError("empty clustering")
    per_cluster: dict[int, Counter] = {}
    for cid, label in zip(c.assignment.tolist(), gold):
        per_cluster.setdefault(cid, Counter())[label] += 1
    majority = sum(max(cnt.values()) for cnt in per_cluster.values())
    return majority / len(gold)
