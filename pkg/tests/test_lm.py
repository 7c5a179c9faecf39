import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from mtsmt import lm
from mtsmt.lm import BOS, EOS, UNK, FormatError, SmoothingError
from oracles import DirectLM


def total_mass(model, history):
    return sum(10 ** model.logprob(w, history) for w in model.predictable())


def histories(model, sentences):
    hs = {()}
    for s in sentences:
        padded = [BOS] + list(s) + [EOS]
        for i in range(1, len(padded)):
            for k in range(1, model.order):
                if i - k >= 0:
                    hs.add(tuple(padded[i - k:i]))
    return hs


def test_count_examples():
    c = lm.count_ngrams([["a", "a"]], order=2)
    assert c[("a",)] == 2
    assert c[("a", "a")] == 1
    assert c[("a", EOS)] == 1
    assert c[(BOS, "a")] == 1
    assert lm.count_ngrams([], 3).is_empty()
    c = lm.count_ngrams([["a"]] * 3, order=1)
    assert c[("a",)] == 3 and c[(EOS,)] == 3


def test_counts_sum_over_continuations():
    sents = [["a", "b", "a"], ["b", "b"], ["a"]]
    c = lm.count_ngrams(sents, 3)
    for k in (2, 3):
        for h, n in c.counts[k - 1].items():
            if h[-1] == EOS:
                continue
            assert sum(v for g, v in c.counts[k].items() if g[:-1] == h) == n


def test_counts_merge_is_sharding_independent():
    sents = [["a", "b"], ["b", "c", "a"], ["c"]]
    whole = lm.count_ngrams(sents, 3)
    merged = lm.count_ngrams(sents[:1], 3).merge(lm.count_ngrams(sents[1:], 3))
    assert merged.counts == whole.counts
    assert merged.continuation_counts == whole.continuation_counts


def test_kneser_ney_two_sentence_example():
    # order 2: D2 = 4/(4+2); unigram continuation counts a=1 b=1 c=1 </s>=2,
    # D1 = 3/5, uniform over {a, b, c, </s>, <unk>}
    m = lm.train([["a", "b"], ["a", "c"]], order=2)
    p1_b = (1 - 0.6) / 5 + 0.6 * 4 / 5 / 5
    expected = (1 - 2 / 3) / 2 + (2 / 3) * 2 / 2 * p1_b
    assert math.isclose(10 ** m.logprob("b", ["a"]), expected, rel_tol=1e-12)
    assert math.isclose(expected, 0.284, rel_tol=1e-12)


def test_kneser_ney_reserves_mass():
    sents = [["of", "the", "house"]] * 3 + [["the", "cat"], ["a", "dog"], ["a", "dog", "house"]]
    m = lm.train(sents, order=3)
    assert 10 ** m.logprob("house", ["of", "the"]) < 1
    assert 10 ** m.logprob(UNK, ["of", "the"]) > 0
    c = lm.count_ngrams(sents, 3)
    for h in [("of", "the"), ("the",), ("a",)]:
        followers = {g[-1]: n for g, n in c.counts[len(h) + 1].items() if g[:-1] == h}
        total = sum(followers.values())
        kn = sum(10 ** m.logprob(w, h) for w in followers)
        ml = sum(n / total for n in followers.values())
        assert kn < ml


def test_witten_bell_example():
    m = lm.train([["a", "b"], ["a", "b"], ["a", "c"]], order=2, smoothing="wb")
    # unigram level: a=3 b=2 c=1 </s>=3, N=9, T=4, uniform over 5 symbols
    p_b = (2 + 4 / 5) / (9 + 4)
    expected = (3 / 5) * (2 / 3) + (2 / 5) * p_b
    assert math.isclose(10 ** m.logprob("b", ["a"]), expected, rel_tol=1e-12)


def test_witten_bell_single_continuation_lambda_half():
    m = lm.train([["x", "y"]], order=2, smoothing="wb")
    # history "x": c=1, T=1 -> lambda 1/2, the backoff weight stores 1 - lambda
    assert math.isclose(10 ** m.backoff[("x",)], 0.5, rel_tol=1e-12)


def test_kn_fallback_and_strict():
    counts = lm.count_ngrams([["a"]] * 3, order=1)
    m = lm.estimate_kneser_ney(counts)
    assert math.isclose(total_mass(m, ()), 1.0, abs_tol=1e-12)
    with pytest.raises(SmoothingError, match="order 1"):
        lm.estimate_kneser_ney(counts, strict=True)
    with pytest.raises(SmoothingError):
        lm.estimate_witten_bell(lm.count_ngrams([], 2))


def test_perplexity_hand_example():
    m = lm.train([["a"]] * 3, order=1)
    # n1 = 0 at order 1, so Witten-Bell: N=6, T=2, uniform 1/3 -> P(a)=P(</s>)=11/24
    assert math.isclose(lm.perplexity(m, [["a"]]), 24 / 11, rel_tol=1e-12)


def test_uniform_perplexity():
    m = lm.NGramModel.uniform(["a", "b", "c"])
    assert math.isclose(lm.perplexity(m, [["a", "b"], ["zz"]]), 5, rel_tol=1e-12)


def test_training_beats_shuffled():
    rng = random.Random(1)
    sents = [[rng.choice("abcdef") for _ in range(rng.randint(2, 6))] for _ in range(30)]
    for smoothing in ("kn", "wb"):
        m = lm.train(sents, 3, smoothing)
        shuffled = [rng.sample(s, len(s)) for s in sents]
        assert lm.perplexity(m, sents) <= lm.perplexity(m, shuffled) + 1e-12


def test_logprob_queries():
    m = lm.train([["a", "b", "c"], ["a", "b", "d"], ["b", "c"]], order=3)
    assert m.logprob("c", ["a", "b"]) == m.prob[("a", "b", "c")]
    # unstored trigram whose history is stored: back off once
    assert ("a", "b", "a") not in m.prob and ("a", "b") in m.backoff
    assert m.logprob("a", ["a", "b"]) == pytest.approx(
        m.backoff[("a", "b")] + m.logprob("a", ["b"]), abs=1e-12)
    assert m.logprob("zzz", ["a"]) == m.logprob(UNK, ["a"])
    assert m.logprob("c", ["q", "q", "a", "b"]) == m.logprob("c", ["a", "b"])
    with pytest.raises(ValueError):
        m.logprob(BOS, [])


def test_unk_floor_folds_rare_words():
    counts = lm.count_ngrams([["a", "b"], ["a", "c"], ["a", "b"], ["a", "b"]], order=2)
    m = lm.estimate_kneser_ney(counts, unk_floor=2)
    assert "c" not in m.vocab - {UNK}
    assert math.isclose(total_mass(m, ("a",)), 1.0, abs_tol=1e-12)


def random_corpus(rng, max_tokens=50):
    vocab = "abcdefg"[:rng.randint(2, 7)]
    sents, n = [], 0
    while n < max_tokens:
        s = [rng.choice(vocab) for _ in range(rng.randint(1, 6))]
        if n + len(s) > max_tokens:
            break
        sents.append(s)
        n += len(s)
    return sents or [["a"]]


@pytest.mark.parametrize("smoothing", ["kn", "wb"])
def test_matches_direct_oracle(smoothing):
    rng = random.Random(7)
    for _ in range(5):
        sents = random_corpus(rng, 20)
        order = rng.randint(1, 3)
        m = lm.train(sents, order, smoothing)
        oracle = DirectLM(sents, order, kn=smoothing == "kn")
        for h in histories(m, sents) | {("zz",) * (order - 1)}:
            h = tuple(w if w in m.vocab else UNK for w in h)
            for w in oracle.predictable:
                assert math.isclose(10 ** m.logprob(w, h), oracle.prob(w, h),
                                    rel_tol=0, abs_tol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcd"), min_size=1, max_size=5), min_size=1,
                max_size=8), st.integers(1, 4), st.sampled_from(["kn", "wb"]))
def test_normalization_property(sents, order, smoothing):
    m = lm.train(sents, order, smoothing)
    for h in histories(m, sents) | {("d", "c", "b")[:order - 1]}:
        assert math.isclose(total_mass(m, h), 1.0, abs_tol=1e-9)
    for g, lp in m.prob.items():
        assert lp <= 0.0


@settings(max_examples=15, deadline=None)
@given(st.lists(st.sampled_from("abc"), min_size=1, max_size=5), st.integers(1, 4))
def test_witten_bell_repetition_never_hurts(sentence, reps):
    base = [["a", "b"], ["c"], sentence]
    m1 = lm.train(base, 3, "wb")
    m2 = lm.train(base + [sentence] * reps, 3, "wb")
    assert m2.sentence_logprob(sentence) >= m1.sentence_logprob(sentence) - 1e-12


@pytest.mark.parametrize("smoothing", ["kn", "wb"])
def test_binary_roundtrip(tmp_path, smoothing):
    m = lm.train([["a", "b", "c"], ["b", "a"], ["c", "c", "a"]], 3, smoothing)
    back = lm.deserialize(lm.serialize(m))
    assert back == m
    lm.save(m, tmp_path / "m.bin")
    assert lm.load(tmp_path / "m.bin") == m
    for h in [(), ("a",), ("b", "a"), ("q", "q")]:
        for w in m.predictable():
            assert back.logprob(w, h) == m.logprob(w, h)


def test_arpa_roundtrip_and_format(tmp_path):
    m = lm.train([["a"], ["a"], ["a", "a"]], 1)
    text = lm.to_arpa(m)
    assert "\\1-grams:" in text
    section = text.split("\\1-grams:")[1].split("\\end\\")[0]
    words = {line.split("\t")[1] for line in section.strip().splitlines()}
    assert {"a", EOS, UNK} <= words
    m3 = lm.train([["a", "b", "c"], ["b", "a"]], 3)
    assert lm.from_arpa(lm.to_arpa(m3)) == m3
    (tmp_path / "m.arpa").write_text(lm.to_arpa(m3), encoding="utf-8")
    assert lm.load(tmp_path / "m.arpa") == m3


def test_truncated_stream_reports_offset():
    data = lm.serialize(lm.train([["a", "b"]], 2))
    for cut in (2, 7, len(data) // 2, len(data) - 1):
        with pytest.raises(FormatError) as err:
            lm.deserialize(data[:cut])
        assert err.value.offset is not None and 0 <= err.value.offset <= cut
    with pytest.raises(FormatError):
        lm.deserialize(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        lm.deserialize(data + b"\x00")
