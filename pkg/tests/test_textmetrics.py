import unicodedata

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glyphstemma.mapping import DistanceMatrix
from glyphstemma.textmetrics import (
    RAW,
    NormalizationOptions,
    cer,
    confusion_vector,
    confusion_vocabulary,
    diacritics_cer,
    distribution_distance,
    edit_alignment,
    letter_distribution,
    levenshtein,
    model_similarity_tree,
    normalize_text,
    rank_report,
    spearman,
)
from glyphstemma.stemma import to_newick

from oracles import levenshtein_recursive

TITLO = "҃"
ACUTE = "́"

short_text = st.text(alphabet="abcde", max_size=8)


def test_normalize_examples():
    assert normalize_text("АБ В") == "абв"
    assert normalize_text("\nА Б\tВ\r\n") == "абв"
    assert normalize_text("e" + ACUTE) == "e"
    assert normalize_text("é") == "e"
    assert normalize_text("сн" + TITLO + "ъ") == "снъ"
    assert normalize_text("") == ""
    assert normalize_text("Ab c", RAW) == "Ab c"
    assert normalize_text("e" + ACUTE, RAW) == "é"


@settings(max_examples=300, deadline=None)
@given(st.text(), st.booleans(), st.booleans(), st.booleans())
def test_normalize_idempotent(s, lo, ws, mn):
    opts = NormalizationOptions(lo, ws, mn)
    once = normalize_text(s, opts)
    assert normalize_text(once, opts) == once


def test_levenshtein_examples():
    assert levenshtein("abc", "abc") == 0
    assert levenshtein("", "abc") == 3
    assert levenshtein("kitten", "sitting") == levenshtein_recursive("kitten", "sitting") == 3


@settings(max_examples=200, deadline=None)
@given(short_text, short_text, short_text)
def test_levenshtein_oracle_and_metric(a, b, c):
    d = levenshtein(a, b)
    assert d == levenshtein_recursive(a, b)
    assert d == levenshtein(b, a)
    assert (d == 0) == (a == b)
    assert levenshtein(a, c) <= d + levenshtein(b, c)


def test_cer():
    ref = "abcdefghij"
    assert cer(ref, ref) == 0.0
    assert cer(ref, "") == 1.0
    assert cer("ab", "xyzw") == 2.0
    assert cer("AB c", "abd") == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        cer("  \n", "x")


def test_diacritics_cer():
    ref = "с" + TITLO + "ло" + ACUTE
    assert diacritics_cer(ref, ref) == 0.0
    assert diacritics_cer(ref, "сло") == 1.0
    hyp = "сло" + ACUTE
    assert levenshtein(TITLO + ACUTE, ACUTE) == levenshtein_recursive(TITLO + ACUTE, ACUTE) == 1
    assert diacritics_cer(ref, hyp) == 0.5
    assert diacritics_cer("é", "e") == 1.0  # precomposed marks count
    with pytest.raises(ValueError):
        diacritics_cer("plain", "plain")


def test_edit_alignment_examples():
    st_ = edit_alignment("abc", "abd")
    assert dict(st_.substitutions) == {("c", "d"): 1} and not st_.insertions and not st_.deletions
    assert edit_alignment("same", "same").total == 0
    one = edit_alignment("ab", "b")
    assert dict(one.deletions) == {"a": 1} and one.total == 1
    ins = edit_alignment("b", "ab")
    assert dict(ins.insertions) == {"a": 1}


@settings(max_examples=200, deadline=None)
@given(short_text, short_text)
def test_alignment_total_equals_distance(a, b):
    assert edit_alignment(a, b).total == levenshtein(a, b)


def test_confusion_vectors():
    perfect = edit_alignment("abc", "abc")
    sub = edit_alignment("abc", "abd")
    vocab = confusion_vocabulary([perfect, sub])
    assert not confusion_vector(perfect, vocab).any()
    v = confusion_vector(sub, vocab)
    assert v.tolist() == [1.0]
    twin = edit_alignment("xbc", "xbd")
    assert np.array_equal(confusion_vector(twin, vocab), v)
    mixed = [edit_alignment("abc", "xbc"), edit_alignment("abc", "ab"), edit_alignment("ab", "abq")]
    vocab = confusion_vocabulary(mixed)
    assert [k[0] for k in vocab] == ["S", "I", "D"]


def test_model_similarity_tree():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    t = model_similarity_tree([a, a.copy()], ["m1", "m2"])
    assert t.heights[t.root] == 0.0
    t3 = model_similarity_tree([a, b, a.copy()], ["x", "y", "z"])
    assert to_newick(t3) == "((x:0.000000,z:0.000000):0.500000,y:0.500000);"
    assert t3.path_distances()[("x", "y")] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        model_similarity_tree([a], ["only"])


def test_letter_distribution():
    assert letter_distribution("aab") == pytest.approx({"a": 2 / 3, "b": 1 / 3})
    assert letter_distribution("c") == {"c": 1.0}
    d = letter_distribution("Hello World")
    assert sum(d.values()) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        letter_distribution(" \n")


def test_distribution_distance():
    p = {"a": 0.5, "b": 0.5}
    assert distribution_distance(p, p) == 0.0
    assert distribution_distance({"a": 1.0}, {"b": 1.0}) == 1.0
    q = {"a": 0.25, "b": 0.5, "c": 0.25}
    assert distribution_distance(p, q) == pytest.approx((0.25 + 0 + 0.25) / 3)


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="abcdef", min_size=1, max_size=30), st.text(alphabet="abcdef", min_size=1, max_size=30))
def test_distribution_distance_symmetric_bounded(s, t):
    p, q = letter_distribution(s), letter_distribution(t)
    d = distribution_distance(p, q)
    assert d == distribution_distance(q, p)
    assert 0.0 <= d <= 1.0


def test_spearman_examples():
    assert spearman([1, 2, 3], [10, 20, 30]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
    # hand ranks: d = [0, 1, -1, 0], rho = 1 - 6*2 / (4*15) = 0.8
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
    assert spearman([1, 1, 2], [1, 2, 3]) == pytest.approx(np.sqrt(3) / 2)
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman([1, 1, 1], [1, 2, 3])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 10**6), min_size=3, max_size=15, unique=True), st.integers(0, 1000))
def test_spearman_monotone_invariance(x, seed):
    y = np.random.default_rng(seed).permutation(len(x)).astype(float) + 1
    rho = spearman(x, y)
    x = np.asarray(x, dtype=float)
    assert spearman(np.log(x), y) == pytest.approx(rho, abs=1e-12)
    assert spearman(x**3, np.exp(y / 10)) == pytest.approx(rho, abs=1e-12)


def test_rank_report_inverted_extremes():
    # OCR-based pairwise distances against gold distances for three witnesses
    labels = ["tsar", "slav1", "slav25"]
    test = DistanceMatrix(labels, [[0, 28, 26], [28, 0, 26], [26, 26, 0]])
    gold = DistanceMatrix(labels, [[0, 21, 36], [21, 0, 27], [36, 27, 0]])
    report = rank_report(gold, test)
    rows = {(r.a, r.b): r for r in report.rows}
    lowest_gold = rows[("tsar", "slav1")]
    assert lowest_gold.gold_rank == 1
    assert lowest_gold.test_rank == 3  # the truly closest pair looks farthest
    assert report.rho is not None and report.rho < 0


def test_rank_report_identity_and_degenerate():
    m = DistanceMatrix(list("abcd"), np.array([[0, 1, 2, 3], [1, 0, 4, 5], [2, 4, 0, 6], [3, 5, 6, 0]], dtype=float))
    report = rank_report(m, m)
    assert report.rho == 1.0
    assert all(r.test_rank == r.gold_rank for r in report.rows)
    two = DistanceMatrix(["a", "b"], [[0, 1], [1, 0]])
    assert rank_report(two, two).rho is None
    assert "NA" in rank_report(two, two).to_csv()
    with pytest.raises(ValueError):
        rank_report(m, two)


def test_nfc_ingest_equivalence():
    decomposed = unicodedata.normalize("NFD", "Щука")
    assert cer("Щука", decomposed, RAW) == 0.0
