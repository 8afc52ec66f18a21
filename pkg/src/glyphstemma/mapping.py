"""Cross-manuscript cluster matching and the frequency-difference distance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .clustering import cluster_frequencies

TIGHT_TOL = 1e-9


@dataclass
class Match:
    a: int
    b: int
    similarity: float
    retained: bool = True


@dataclass
class ClusterMapping:
    pair: tuple[str, str]
    matches: list[Match]
    discard_fraction: float = 0.0

    @property
    def retained(self) -> list[Match]:
        return [m for m in self.matches if m.retained]

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "discard_fraction": self.discard_fraction,
            "matches": [
                {"a": m.a, "b": m.b, "similarity": m.similarity, "retained": m.retained} for m in self.matches
            ],
        }


@dataclass
class DistanceMatrix:
    labels: list[str]
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.labels)
        if self.values.shape != (n, n):
            raise ValueError(f"matrix shape {self.values.shape} does not match {n} labels")
        if len(set(self.labels)) != n:
            raise ValueError("duplicate labels")

    def validate(self, tol: float = 1e-12) -> None:
        v = self.values
        if not np.all(np.isfinite(v)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(np.abs(np.diag(v)) > tol):
            raise ValueError("distance matrix diagonal must be zero")
        if np.any(np.abs(v - v.T) > tol):
            raise ValueError("distance matrix is not symmetric")
        if np.any(v < -tol):
            raise ValueError("distance matrix has negative entries")

    def __getitem__(self, pair: tuple[str, str]) -> float:
        i, j = self.labels.index(pair[0]), self.labels.index(pair[1])
        return float(self.values[i, j])

    def pairs(self):
        """Unordered pairs in label order with their values."""
        for i, j in combinations(range(len(self.labels)), 2):
            yield self.labels[i], self.labels[j], float(self.values[i, j])

    def upper_triangle(self) -> np.ndarray:
        return self.values[np.triu_indices(len(self.labels), k=1)]

    def reordered(self, labels) -> DistanceMatrix:
        idx = [self.labels.index(lab) for lab in labels]
        return DistanceMatrix(list(labels), self.values[np.ix_(idx, idx)])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join([""] + self.labels) + "\n")
            for lab, row in zip(self.labels, self.values):
                fh.write(",".join([lab] + [repr(float(v)) for v in row]) + "\n")

    @classmethod
    def from_csv(cls, path) -> DistanceMatrix:
        with open(path, encoding="utf-8") as fh:
            rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
        labels = rows[0][1:]
        if [r[0] for r in rows[1:]] != labels:
            raise ValueError(f"{path}: row labels do not match header")
        values = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=np.float64)
        return cls(labels, values)


def centroid_similarity_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cosine similarities between two centroid sets; zero-norm rows score 0."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"centroid dimension mismatch: {A.shape} vs {B.shape}")
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    An = np.divide(A, na[:, None], out=np.zeros_like(A), where=na[:, None] > 0)
    Bn = np.divide(B, nb[:, None], out=np.zeros_like(B), where=nb[:, None] > 0)
    return np.clip(An @ Bn.T, -1.0, 1.0)


def _min_cost_assignment(cost: np.ndarray):
    """Shortest augmenting path Hungarian method. Returns (row->col, u, v)."""
    n = cost.shape[0]
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[col] = row matched to col (1-based, 0 = free)
    way = [0] * (n + 1)
    c = cost.tolist()
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            row = c[i0 - 1]
            ui0 = u[i0]
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        assign[p[j] - 1] = j - 1
    return assign, np.array(u[1:]), np.array(v[1:])


def _lex_smallest_matching(tight: np.ndarray, start: list[int]) -> list[int]:
    """Lexicographically smallest perfect matching inside ``tight`` edges.

    ``start`` is any perfect matching using tight edges.
    """
    n = tight.shape[0]
    match_row = list(start)
    match_col = [0] * n
    for r, col in enumerate(match_row):
        match_col[col] = r
    adj = [np.flatnonzero(tight[r]).tolist() for r in range(n)]

    def augment(r: int, lo: int, seen: list[bool]) -> bool:
        for col in adj[r]:
            if seen[col]:
                continue
            seen[col] = True
            owner = match_col[col]
            if 0 <= owner < lo:
                continue  # column held by a fixed row
            if owner == -1 or augment(owner, lo, seen):
                match_row[r] = col
                match_col[col] = r
                return True
        return False

    for i in range(n):
        for j in adj[i]:
            if j == match_row[i]:
                break
            if match_col[j] < i:
                continue
            # tentatively move row i to column j and rematch the displaced row
            saved_row, saved_col = match_row[:], match_col[:]
            displaced = match_col[j]
            match_col[match_row[i]] = -1
            match_row[i] = j
            match_col[j] = i
            seen = [False] * n
            seen[j] = True
            if augment(displaced, i + 1, seen):
                break
            match_row[:], match_col[:] = saved_row, saved_col
    return match_row


def hungarian_match(sim) -> list[tuple[int, int]]:
    """Bijection maximizing total similarity (cost = 1 - similarity).

    Among optimal assignments the lexicographically smallest (row-then-column)
    one is returned.
    """
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ValueError(f"similarity matrix must be square, got shape {sim.shape}")
    if not np.all(np.isfinite(sim)):
        raise ValueError("similarity matrix has non-finite entries")
    n = sim.shape[0]
    if n == 0:
        return []
    cost = 1.0 - sim
    assign, u, v = _min_cost_assignment(cost)
    reduced = cost - u[:, None] - v[None, :]
    tol = TIGHT_TOL * max(1.0, float(np.abs(cost).max()))
    tight = reduced <= tol
    for r, col in enumerate(assign):
        tight[r, col] = True
    assign = _lex_smallest_matching(tight, assign)
    return [(r, assign[r]) for r in range(n)]


def map_clusters(sim, pair: tuple[str, str] = ("A", "B"), fraction: float = 0.0) -> ClusterMapping:
    sim = np.asarray(sim, dtype=np.float64)
    matches = [Match(a, b, float(sim[a, b])) for a, b in hungarian_match(sim)]
    return discard_low_similarity(ClusterMapping(pair, matches, 0.0), fraction)


def discard_low_similarity(mapping: ClusterMapping, fraction: float) -> ClusterMapping:
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"discard fraction must be in [0, 1), got {fraction}")
    k = len(mapping.matches)
    n_drop = min(int(math.floor(fraction * k)), max(k - 1, 0))
    # lowest similarity first; on ties the higher cluster-a index goes first
    order = sorted(range(k), key=lambda i: (mapping.matches[i].similarity, -mapping.matches[i].a))
    drop = set(order[:n_drop])
    matches = [Match(m.a, m.b, m.similarity, i not in drop) for i, m in enumerate(mapping.matches)]
    return ClusterMapping(mapping.pair, matches, fraction)


def manuscript_distance(mapping: ClusterMapping, fA, fB, n_convention: str = "retained") -> float:
    """Mean absolute frequency difference over the retained matches."""
    fa = np.asarray(getattr(fA, "freq", fA), dtype=np.float64)
    fb = np.asarray(getattr(fB, "freq", fB), dtype=np.float64)
    kept = mapping.retained
    if not kept:
        raise ValueError("mapping has no retained matches")
    total = math.fsum(abs(fa[m.a] - fb[m.b]) for m in kept)
    if n_convention == "retained":
        n = len(kept)
    elif n_convention == "all":
        n = len(mapping.matches)
    else:
        raise ValueError(f"unknown n convention {n_convention!r}")
    return total / n


def pair_distance(cA, cB, fraction: float, n_convention: str = "retained"):
    sim = centroid_similarity_matrix(cA.centroids, cB.centroids)
    mapping = map_clusters(sim, (cA.manuscript_id, cB.manuscript_id), fraction)
    d = manuscript_distance(mapping, cluster_frequencies(cA), cluster_frequencies(cB), n_convention)
    return d, mapping


def pairwise_distances(clusterings, fraction: float = 0.1, n_convention: str = "retained", executor=None):
    """Distance matrix over all manuscripts plus the per-pair mappings.

    ``executor`` may be any ``concurrent.futures`` executor; results do not
    depend on it.
    """
    clusterings = list(clusterings)
    if len(clusterings) < 2:
        raise ValueError("need at least two manuscripts")
    ks = {c.k for c in clusterings}
    dims = {c.centroids.shape[1] for c in clusterings}
    if len(ks) != 1 or len(dims) != 1:
        raise ValueError(f"manuscripts must share k and embedding dimension (k={sorted(ks)}, D={sorted(dims)})")
    labels = [c.manuscript_id for c in clusterings]
    pairs = list(combinations(range(len(clusterings)), 2))
    args = [(clusterings[i], clusterings[j], fraction, n_convention) for i, j in pairs]
    if executor is None:
        results = [pair_distance(*a) for a in args]
    else:
        results = list(executor.map(pair_distance, *zip(*args)))
    values = np.zeros((len(labels), len(labels)))
    mappings = {}
    for (i, j), (d, mapping) in zip(pairs, results):
        values[i, j] = values[j, i] = d
        mappings[(labels[i], labels[j])] = mapping
    return DistanceMatrix(labels, values), mappings
