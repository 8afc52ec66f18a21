"""Text-side evaluation: normalization, edit distance, CER, confusions, rank statistics."""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .mapping import DistanceMatrix
from .stemma import upgma


@dataclass(frozen=True)
class NormalizationOptions:
    lowercase: bool = True
    strip_whitespace: bool = True
    strip_combining: bool = True


DEFAULT_NORMALIZATION = NormalizationOptions()
RAW = NormalizationOptions(False, False, False)


def _is_mark(ch: str) -> bool:
    return unicodedata.category(ch) == "Mn"


def normalize_text(s: str, opts: NormalizationOptions = DEFAULT_NORMALIZATION) -> str:
    """NFC, then lowercase, drop whitespace, drop nonspacing marks (in that order)."""
    s = unicodedata.normalize("NFC", s)
    if opts.lowercase:
        s = unicodedata.normalize("NFC", s.lower())
    if opts.strip_whitespace:
        s = unicodedata.normalize("NFC", "".join(ch for ch in s if not ch.isspace()))
    if opts.strip_combining:
        decomposed = unicodedata.normalize("NFD", s)
        s = unicodedata.normalize("NFC", "".join(ch for ch in decomposed if not _is_mark(ch)))
    return s


def levenshtein(a, b) -> int:
    """Unit-cost edit distance over code points (or any sequences of hashables)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    codes = {}
    ai = np.array([codes.setdefault(ch, len(codes)) for ch in a], dtype=np.int64)
    bi = np.array([codes.setdefault(ch, len(codes)) for ch in b], dtype=np.int64)
    m = len(bi)
    offsets = np.arange(m + 1, dtype=np.int64)
    prev = offsets.copy()
    for i, ch in enumerate(ai, 1):
        tmp = np.empty(m + 1, dtype=np.int64)
        tmp[0] = i
        tmp[1:] = np.minimum(prev[1:] + 1, prev[:-1] + (bi != ch))
        # row[j] = min_l tmp[l] + (j - l): the insertion chain as a running minimum
        prev = np.minimum.accumulate(tmp - offsets) + offsets
    return int(prev[-1])


def cer(ref: str, hyp: str, opts: NormalizationOptions = DEFAULT_NORMALIZATION) -> float:
    r = normalize_text(ref, opts)
    if not r:
        raise ValueError("normalized reference is empty")
    return levenshtein(r, normalize_text(hyp, opts)) / len(r)


def combining_marks(s: str) -> str:
    return "".join(ch for ch in unicodedata.normalize("NFD", s) if _is_mark(ch))


def diacritics_cer(ref: str, hyp: str) -> float:
    r = combining_marks(ref)
    if not r:
        raise ValueError("reference contains no combining marks")
    return levenshtein(r, combining_marks(hyp)) / len(r)


@dataclass
class ConfusionStats:
    substitutions: Counter = field(default_factory=Counter)  # (ref, hyp) -> n
    insertions: Counter = field(default_factory=Counter)  # hyp -> n
    deletions: Counter = field(default_factory=Counter)  # ref -> n

    @property
    def total(self) -> int:
        return sum(self.substitutions.values()) + sum(self.insertions.values()) + sum(self.deletions.values())

    def keys(self) -> list[tuple]:
        return (
            [("S",) + k for k in self.substitutions]
            + [("I", k) for k in self.insertions]
            + [("D", k) for k in self.deletions]
        )

    def count(self, key: tuple) -> int:
        kind = key[0]
        if kind == "S":
            return self.substitutions.get((key[1], key[2]), 0)
        if kind == "I":
            return self.insertions.get(key[1], 0)
        return self.deletions.get(key[1], 0)

    def __iadd__(self, other: ConfusionStats) -> ConfusionStats:
        self.substitutions.update(other.substitutions)
        self.insertions.update(other.insertions)
        self.deletions.update(other.deletions)
        return self


def edit_alignment(ref: str, hyp: str) -> ConfusionStats:
    """Count edit operations along one optimal alignment.

    Backtrace prefers the diagonal (match/substitution), then deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    D = np.zeros((n + 1, m + 1), dtype=np.int64)
    D[:, 0] = np.arange(n + 1)
    D[0, :] = np.arange(m + 1)
    offsets = np.arange(m + 1, dtype=np.int64)
    codes = {}
    ri = [codes.setdefault(ch, len(codes)) for ch in ref]
    hi = np.array([codes.setdefault(ch, len(codes)) for ch in hyp], dtype=np.int64)
    for i in range(1, n + 1):
        tmp = np.empty(m + 1, dtype=np.int64)
        tmp[0] = i
        tmp[1:] = np.minimum(D[i - 1, 1:] + 1, D[i - 1, :-1] + (hi != ri[i - 1]))
        D[i] = np.minimum.accumulate(tmp - offsets) + offsets

    stats = ConfusionStats()
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and D[i, j] == D[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                stats.substitutions[(ref[i - 1], hyp[j - 1])] += 1
            i, j = i - 1, j - 1
        elif i > 0 and D[i, j] == D[i - 1, j] + 1:
            stats.deletions[ref[i - 1]] += 1
            i -= 1
        else:
            stats.insertions[hyp[j - 1]] += 1
            j -= 1
    return stats


def confusion_vocabulary(stats_list) -> list[tuple]:
    """Union of confusion keys: substitutions, then insertions, then deletions, each sorted."""
    keys = set()
    for st in stats_list:
        keys.update(st.keys())
    order = {"S": 0, "I": 1, "D": 2}
    return sorted(keys, key=lambda k: (order[k[0]], k[1:]))


def confusion_vector(stats: ConfusionStats, vocabulary) -> np.ndarray:
    vec = np.array([stats.count(key) for key in vocabulary], dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


def cosine_distance_matrix(vectors) -> np.ndarray:
    V = np.asarray(vectors, dtype=np.float64)
    n = V.shape[0]
    norms = np.linalg.norm(V, axis=1)
    out = np.zeros((n, n))
    for i, j in combinations(range(n), 2):
        if np.array_equal(V[i], V[j]):
            d = 0.0
        elif norms[i] == 0 or norms[j] == 0:
            d = 1.0
        else:
            d = 1.0 - float(np.dot(V[i], V[j]) / (norms[i] * norms[j]))
            d = min(max(d, 0.0), 2.0)
        out[i, j] = out[j, i] = d
    return out


def model_similarity_tree(vectors, labels):
    labels = list(labels)
    if len(labels) < 2:
        raise ValueError("need at least two systems")
    if len(vectors) != len(labels):
        raise ValueError("one vector per label required")
    return upgma(DistanceMatrix(labels, cosine_distance_matrix(vectors)))


def letter_distribution(text: str, opts: NormalizationOptions = DEFAULT_NORMALIZATION) -> dict[str, float]:
    norm = normalize_text(text, opts)
    if not norm:
        raise ValueError("normalized text is empty")
    counts = Counter(norm)
    total = len(norm)
    return {ch: counts[ch] / total for ch in sorted(counts)}


def distribution_distance(p: dict[str, float], q: dict[str, float]) -> float:
    if not p or not q:
        raise ValueError("distributions must be nonempty")
    letters = sorted(set(p) | set(q))
    return math.fsum(abs(p.get(c, 0.0) - q.get(c, 0.0)) for c in letters) / len(letters)


def midranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise ValueError("need at least two observations")
    rx, ry = midranks(x), midranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx, syy = float(np.dot(rx, rx)), float(np.dot(ry, ry))
    if sxx == 0 or syy == 0:
        raise ValueError("zero rank variance")
    rho = float(np.dot(rx, ry)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


@dataclass
class RankRow:
    a: str
    b: str
    test: float
    test_rank: float
    gold: float
    gold_rank: float


@dataclass
class RankReport:
    rows: list[RankRow]
    rho: float | None  # None when undefined (single pair or constant ranks)

    def to_csv(self) -> str:
        lines = ["pair_a,pair_b,test,test_rank,gold,gold_rank"]
        for r in self.rows:
            lines.append(f"{r.a},{r.b},{r.test!r},{r.test_rank:g},{r.gold!r},{r.gold_rank:g}")
        lines.append("spearman," + ("NA" if self.rho is None else repr(self.rho)))
        return "\n".join(lines) + "\n"


def rank_report(gold, test) -> RankReport:
    if sorted(gold.labels) != sorted(test.labels):
        raise ValueError(f"label mismatch: {gold.labels} vs {test.labels}")
    test = test.reordered(gold.labels)
    pairs = list(combinations(range(len(gold.labels)), 2))
    g = np.array([gold.values[i, j] for i, j in pairs])
    t = np.array([test.values[i, j] for i, j in pairs])
    gr, tr = midranks(g), midranks(t)
    rows = [
        RankRow(gold.labels[i], gold.labels[j], float(t[n]), float(tr[n]), float(g[n]), float(gr[n]))
        for n, (i, j) in enumerate(pairs)
    ]
    try:
        rho = spearman(t, g)
    except ValueError:
        rho = None
    return RankReport(rows, rho)


def levenshtein_matrix(texts: dict[str, str], opts: NormalizationOptions = DEFAULT_NORMALIZATION):
    labels = list(texts)
    norm = {lab: normalize_text(texts[lab], opts) for lab in labels}
    values = np.zeros((len(labels), len(labels)))
    for i, j in combinations(range(len(labels)), 2):
        values[i, j] = values[j, i] = levenshtein(norm[labels[i]], norm[labels[j]])
    return DistanceMatrix(labels, values)


def distribution_matrix(texts: dict[str, str], opts: NormalizationOptions = DEFAULT_NORMALIZATION):
    labels = list(texts)
    dists = {lab: letter_distribution(texts[lab], opts) for lab in labels}
    values = np.zeros((len(labels), len(labels)))
    for i, j in combinations(range(len(labels)), 2):
        values[i, j] = values[j, i] = distribution_distance(dists[labels[i]], dists[labels[j]])
    return DistanceMatrix(labels, values)
