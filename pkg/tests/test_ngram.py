import io
import math
import random

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from lexprosody import ngram
from lexprosody.ngram import BACKWARD, FORWARD, count_corpus, frequency, informativity, predictability

from oracles import informativity_oracle


corpora = st.lists(
    st.lists(st.sampled_from([f"w{i}" for i in range(12)]), min_size=0, max_size=8),
    min_size=1, max_size=25,
)


def test_count_two_utterances():
    s = count_corpus([["a", "b"], ["a", "c"]])
    assert dict(s.unigram) == {"a": 2, "b": 1, "c": 1}
    assert dict(s.fwd_bigram) == {("a", "b"): 1, ("a", "c"): 1}


def test_count_repeated_word():
    s = count_corpus([["a", "a", "a"]])
    assert dict(s.unigram) == {"a": 3}
    assert dict(s.fwd_bigram) == {("a", "a"): 2}


def test_single_token_utterances_have_no_bigrams():
    s = count_corpus([["a"], ["b"]])
    assert not s.fwd_bigram
    assert s.fwd_marginal == {} and s.bwd_marginal == {}


def test_frequency():
    s = count_corpus([["a", "b"], ["a", "c"]])
    assert frequency(s, "a") == 2
    assert frequency(s, "zzz") == 0
    assert frequency(count_corpus([["a", "a", "a"]]), "a") == 3


def test_predictability_examples():
    s = count_corpus([["a", "b"], ["a", "c"]])
    assert predictability(s, "b", "a", FORWARD) == 0.5
    assert predictability(s, "a", "b", BACKWARD) == 1.0
    s2 = count_corpus([["a", "b"], ["a", "c"], ["d", "b"]])
    assert predictability(s2, "b", "d", FORWARD) == 1.0


def test_unattested_bigram_raises():
    s = count_corpus([["a", "b"]])
    with pytest.raises(ngram.UnattestedBigramError):
        predictability(s, "a", "b", FORWARD)


def test_informativity_examples():
    assert informativity(count_corpus([["a", "b"]]), "b", FORWARD) == 0.0
    s = count_corpus([["a", "b"], ["a", "c"], ["d", "b"]])
    # contexts of b: a (P(b|a)=.5) and d (P(b|d)=1), equally weighted
    assert informativity(s, "b", FORWARD) == pytest.approx(0.5, abs=1e-15)


def test_no_contexts_raises():
    s = count_corpus([["a", "b"]])
    with pytest.raises(ngram.NoContextsError):
        informativity(s, "a", FORWARD)
    with pytest.raises(ngram.NoContextsError):
        informativity(s, "b", BACKWARD)


@settings(max_examples=150, deadline=None)
@given(corpora)
def test_informativity_matches_oracle(corpus):
    s = count_corpus(corpus)
    for w in s.types():
        for d in (FORWARD, BACKWARD):
            expected = informativity_oracle(corpus, w, d)
            if expected is None:
                with pytest.raises(ngram.NoContextsError):
                    informativity(s, w, d)
            else:
                assert informativity(s, w, d) == pytest.approx(expected, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(corpora)
def test_normalization(corpus):
    s = count_corpus(corpus)
    for c in s.fwd_marginal:
        total = math.fsum(predictability(s, w, c, FORWARD) for w, _ in s.contexts(c, BACKWARD))
        assert total == pytest.approx(1.0, abs=1e-12)
    for c in s.bwd_marginal:
        total = math.fsum(predictability(s, w, c, BACKWARD) for w, _ in s.contexts(c, FORWARD))
        assert total == pytest.approx(1.0, abs=1e-12)
    for w in s.types():
        for d in (FORWARD, BACKWARD):
            ctx = s.contexts(w, d)
            if ctx:
                n = sum(k for _, k in ctx)
                assert math.fsum(k / n for _, k in ctx) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(corpora)
def test_informativity_bounds(corpus):
    s = count_corpus(corpus)
    if not s.fwd_marginal:
        return
    upper = math.log2(max(s.fwd_marginal.values()))
    for w in s.types():
        try:
            v = informativity(s, w, FORWARD)
        except ngram.NoContextsError:
            continue
        assert 0.0 <= v <= upper + 1e-12


@settings(max_examples=100, deadline=None)
@given(corpora, st.integers(min_value=0, max_value=25))
def test_merge_equals_single_pass(corpus, cut):
    whole = count_corpus(corpus)
    merged = count_corpus(corpus[:cut]).merge(count_corpus(corpus[cut:]))
    assert merged == whole
    assert merged.fwd_marginal == whole.fwd_marginal
    assert merged.bwd_marginal == whole.bwd_marginal


def test_informativity_zero_iff_all_contexts_certain():
    s = count_corpus([["x", "y"], ["z", "y"], ["x", "y"]])
    assert informativity(s, "y", FORWARD) == 0.0
    s = count_corpus([["x", "y"], ["x", "q"]])
    assert informativity(s, "y", FORWARD) > 0.0


def test_export_lexicon():
    s = count_corpus([["a", "b"], ["a", "c"], ["d", "b"], ["a", "a"]])
    rows = ngram.export_lexicon(s, ["a", "b", "unseen"])
    assert [r["word"] for r in rows] == ["a", "b", "unseen"]
    a = rows[0]
    assert a["frequency"] == 4 and a["log2_frequency"] == 2.0
    assert rows[1]["fwd_informativity"] == informativity(s, "b", FORWARD)
    assert rows[2]["attested"] == 0 and rows[2]["log2_frequency"] is None


def test_export_bigrams_logs():
    s = count_corpus([["a", "b"], ["a", "c"], ["a", "c"], ["a", "d"]])
    rows = {(r["prev"], r["word"]): r for r in ngram.export_bigrams(s)}
    assert rows[("a", "b")]["log2_fwd_pred"] == -2.0
    assert rows[("a", "c")]["log2_fwd_pred"] == -1.0
    assert rows[("a", "b")]["log2_bwd_pred"] == 0.0
    buf = io.StringIO()
    ngram.write_rows_tsv(ngram.export_bigrams(s), ngram.BIGRAM_COLUMNS, buf)
    assert buf.getvalue().splitlines()[1] == "a\tb\t1\t-2.0\t0.0"


def test_snapshot_roundtrip_and_determinism():
    rng = random.Random(3)
    corpus = [[f"t{rng.randint(0, 30)}" for _ in range(rng.randint(1, 9))] for _ in range(200)]
    corpus.append(["中文", "词"])
    s = count_corpus(corpus)
    b1, b2 = io.BytesIO(), io.BytesIO()
    ngram.write_snapshot(s, b1)
    ngram.write_snapshot(count_corpus(corpus), b2)
    assert b1.getvalue() == b2.getvalue()
    back = ngram.read_snapshot(io.BytesIO(b1.getvalue()))
    assert back == s
    assert back.fwd_marginal == s.fwd_marginal and back.bwd_marginal == s.bwd_marginal
    for w in s.types()[:10]:
        try:
            assert informativity(back, w, FORWARD) == informativity(s, w, FORWARD)
        except ngram.NoContextsError:
            pass


def test_snapshot_rejects_garbage():
    with pytest.raises(ValueError):
        ngram.read_snapshot(io.BytesIO(b"NOTASNAP" + b"\x00" * 24))
