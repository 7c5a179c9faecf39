import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from mtsmt import phrase
from mtsmt.align import NULL, AlignmentLinks, LexicalTable
from mtsmt.corpus import ParallelCorpus, SentencePair
from mtsmt.phrase import HIER_MSLR, MSD, PhraseFeatures, PhraseTable
from oracles import brute_force_hier, brute_force_phrases


def pair(src, tgt):
    return SentencePair(src.split(), tgt.split(), 1)


def links(pairs, ls, lt):
    return AlignmentLinks(frozenset(pairs), ls, lt)


def boxes(pps):
    return {(pp.source_span, pp.target_span) for pp in pps}


def spans_text(pps):
    return {(" ".join(pp.source_tokens), " ".join(pp.target_tokens)) for pp in pps}


def test_extract_monotone_and_crossed():
    p = pair("a b", "x y")
    got = phrase.extract_phrases(p, links({(0, 0), (1, 1)}, 2, 2))
    assert spans_text(got) == {("a", "x"), ("b", "y"), ("a b", "x y")}
    got = phrase.extract_phrases(p, links({(0, 1), (1, 0)}, 2, 2))
    assert spans_text(got) == {("a", "y"), ("b", "x"), ("a b", "x y")}
    assert phrase.extract_phrases(p, links(set(), 2, 2)) == []


def test_extract_includes_unaligned_extensions():
    p = pair("a b c", "x y")
    got = spans_text(phrase.extract_phrases(p, links({(0, 0), (2, 1)}, 3, 2)))
    assert {("a b", "x"), ("b c", "y"), ("a b c", "x y")} <= got
    assert ("b", "x") not in got


def test_extract_records_internal_links_and_respects_max_len():
    p = pair("a b c", "x y z")
    got = phrase.extract_phrases(p, links({(0, 0), (1, 1), (2, 2)}, 3, 3), max_len=2)
    assert all(len(pp.source_tokens) <= 2 and len(pp.target_tokens) <= 2 for pp in got)
    bc = [pp for pp in got if pp.source_tokens == ("b", "c")][0]
    assert bc.alignment == ((0, 0), (1, 1))
    with pytest.raises(ValueError):
        phrase.extract_phrases(p, links(set(), 2, 3))


def random_case(rng, max_len=8):
    ls, lt = rng.randint(1, max_len), rng.randint(1, max_len)
    density = rng.random() * 0.5
    ls_links = {(i, j) for i in range(ls) for j in range(lt) if rng.random() < density}
    return ls, lt, ls_links


def test_extraction_equals_brute_force():
    rng = random.Random(5)
    for _ in range(200):
        ls, lt, al = random_case(rng)
        p = SentencePair([f"s{i}" for i in range(ls)], [f"t{j}" for j in range(lt)], 1)
        got = phrase.extract_phrases(p, links(al, ls, lt), max_len=4)
        assert len(got) == len(boxes(got))
        assert boxes(got) == brute_force_phrases(ls, lt, al, 4)


def test_hier_training_orientations_match_oracle():
    rng = random.Random(11)
    for _ in range(150):
        ls, lt, al = random_case(rng, 6)
        p = SentencePair([f"s{i}" for i in range(ls)], [f"t{j}" for j in range(lt)], 1)
        blocks = phrase._SentenceBlocks(al, ls, lt)
        for pp in phrase.extract_phrases(p, links(al, ls, lt)):
            got = phrase.training_orientations(pp, al, ls, lt, HIER_MSLR, blocks)
            assert got == brute_force_hier(ls, lt, al, pp.source_span, pp.target_span)


def test_msd_training_orientations_word_based():
    # a b c / z x y with a-x b-y c-z: "c" is translated first
    al = {(0, 1), (1, 2), (2, 0)}
    p = pair("a b c", "z x y")
    got = {pp.source_tokens: phrase.training_orientations(pp, al, 3, 3, MSD)
           for pp in phrase.extract_phrases(p, links(al, 3, 3))}
    assert got[("c",)] == ("D", "D")
    assert got[("a",)] == ("D", "M")
    assert got[("b",)] == ("M", "D")
    assert got[("a", "b")] == ("S", "D")


def test_hier_differs_from_word_based():
    # the block "a b" precedes "c" on the target side without a word link
    # at the corner, so msd says D while the block merge says M
    al = {(0, 1), (1, 0), (2, 2)}
    pp = [x for x in phrase.extract_phrases(pair("a b c", "y x z"), links(al, 3, 3))
          if x.source_tokens == ("c",)][0]
    assert phrase.training_orientations(pp, al, 3, 3, MSD)[0] == "D"
    assert phrase.training_orientations(pp, al, 3, 3, HIER_MSLR)[0] == "M"


def test_classify_orientation_examples():
    assert phrase.classify_orientation((0, 2), (2, 4)) == "M"
    assert phrase.classify_orientation((2, 4), (0, 2)) == "S"
    assert phrase.classify_orientation((0, 1), (2, 3)) == "D"
    assert phrase.classify_orientation((0, 1), (2, 3), HIER_MSLR) == "DR"
    assert phrase.classify_orientation((3, 4), (0, 2), HIER_MSLR) == "DL"
    # with coverage the previous phrase grows into its block
    assert phrase.classify_orientation((1, 2), (2, 3), HIER_MSLR, covered={0, 1}) == "M"
    assert phrase.classify_orientation((2, 3), (0, 1), HIER_MSLR, covered={1, 2}) == "S"
    with pytest.raises(ValueError):
        phrase.classify_orientation((0, 2), (1, 3))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 6), st.integers(1, 3), st.integers(0, 6), st.integers(1, 3), st.integers(0, 20))
def test_classify_translation_invariant(a, la, b, lb, shift):
    prev, cur = (a, a + la), (b, b + lb)
    if max(a, b) < min(a + la, b + lb):
        return
    moved = ((a + shift, a + la + shift), (b + shift, b + lb + shift))
    for scheme in (MSD, HIER_MSLR):
        assert phrase.classify_orientation(prev, cur, scheme) == \
            phrase.classify_orientation(*moved, scheme)


def test_msd_counts_per_derivation():
    rng = random.Random(2)
    for _ in range(30):
        n = rng.randint(2, 7)
        cuts = sorted(rng.sample(range(1, n), rng.randint(0, n - 2)))
        spans = list(zip([0] + cuts, cuts + [n]))
        rng.shuffle(spans)
        labels = Counter(phrase.classify_orientation(p, c) for p, c in zip(spans, spans[1:]))
        assert sum(labels[o] for o in "MSD") == len(spans) - 1


def lex_tables():
    fwd = LexicalTable({"x": {"a": 0.5}, "y": {"b": 0.25}, NULL: {"a": 0.1, "b": 0.2}})
    bwd = LexicalTable({"a": {"x": 0.5}, "b": {"y": 0.4}, NULL: {"x": 0.3, "y": 0.1}})
    return fwd, bwd


def test_score_relative_frequencies():
    f = ("a",)
    inst = [phrase.PhrasePair((0, 1), (0, 1), f, ("x",), ((0, 0),))] * 3
    inst += [phrase.PhrasePair((0, 1), (0, 1), f, ("y",), ((0, 0),))]
    table = phrase.score_phrase_table(inst, *lex_tables())
    assert table[(f, ("x",))].phi_e_given_f == 0.75
    assert table[(f, ("y",))].phi_e_given_f == 0.25
    assert table[(f, ("x",))].phi_f_given_e == 1.0
    assert table[(f, ("x",))].lex_f_given_e == 0.5
    assert table[(f, ("x",))].lex_e_given_f == 0.5


def test_lexical_weight_uses_most_frequent_alignment():
    f, e = ("a", "b"), ("x", "y")
    inst = [phrase.PhrasePair((0, 2), (0, 2), f, e, ((0, 0), (1, 1)))] * 2
    inst += [phrase.PhrasePair((0, 2), (0, 2), f, e, ((0, 0),))]
    feats = phrase.score_phrase_table(inst, *lex_tables())[(f, e)]
    assert feats.lex_f_given_e == pytest.approx(0.5 * 0.25)
    assert feats.lex_e_given_f == pytest.approx(0.5 * 0.4)
    # tie: lexicographically smaller alignment ((0,0),) wins; b and y unlinked
    inst = inst[1:]
    feats = phrase.score_phrase_table(inst, *lex_tables())[(f, e)]
    assert feats.lex_f_given_e == pytest.approx(0.5 * 0.2)
    assert feats.lex_e_given_f == pytest.approx(0.5 * 0.1)


def test_lexical_weight_averages_multiple_links():
    fwd = LexicalTable({"x": {"a": 0.6}, "y": {"a": 0.2}})
    w = phrase._lex_weight(("a",), ("x", "y"), [(0, 0), (0, 1)], fwd, lambda w: w)
    assert w == pytest.approx(0.4)


def test_score_empty_raises():
    with pytest.raises(ValueError):
        phrase.score_phrase_table([], *lex_tables())


def test_table_invariants_on_corpus():
    rng = random.Random(9)
    pairs, als = [], []
    for n in range(40):
        ls, lt, al = random_case(rng, 5)
        pairs.append(SentencePair([rng.choice("abc") for _ in range(ls)],
                                  [rng.choice("xyz") for _ in range(lt)], n + 1))
        als.append(links(al, ls, lt))
    corpus = ParallelCorpus(pairs, "s", "t")
    extracted = phrase.extract_corpus(corpus, als)
    table = phrase.score_phrase_table(extracted, *lex_tables())
    by_f, by_e = Counter(), Counter()
    for (f, e), x in table.entries.items():
        by_f[f] += x.phi_e_given_f
        by_e[e] += x.phi_f_given_e
        assert all(0 < v <= 1 for v in x)
    assert all(v == pytest.approx(1.0, abs=1e-9) for v in by_f.values())
    assert all(v == pytest.approx(1.0, abs=1e-9) for v in by_e.values())
    for scheme in (MSD, HIER_MSLR):
        model = phrase.estimate_reordering(extracted, scheme)
        for dists in model.table.values():
            for d in dists:
                assert sum(d) == pytest.approx(1.0, abs=1e-9)
                assert min(d) > 0


def test_smoothing_formula():
    # always monotone over 10 instances: a uniform global distribution gives
    # 10.5 / 11.5, an all-monotone one leaves no mass for the others
    got = phrase.smoothed_distribution([10, 0, 0], (1 / 3, 1 / 3, 1 / 3), 0.5)
    assert got[0] == pytest.approx(10.5 / 11.5)
    assert phrase.smoothed_distribution([10, 0, 0], (1.0, 0.0, 0.0), 0.5)[0] == 1.0
    g = (0.6, 0.3, 0.1)
    got = phrase.smoothed_distribution([10, 0, 0], g, 0.5)
    assert got[0] == pytest.approx((10 + 0.5 * 0.6 * 3) / 11.5)
    assert sum(got) == pytest.approx(1.0)


def test_estimate_reordering_counts_and_global():
    inst = [(("a",), ("x",), "M", "M")] * 10 + [(("b",), ("y",), "S", "D")] * 2
    model = phrase.estimate_reordering(inst, "msd-bidirectional-fe")
    g_prev = ((10 + 0.5) / 13.5, (2 + 0.5) / 13.5, 0.5 / 13.5)
    assert model.global_dists[0] == pytest.approx(g_prev)
    assert model.prob(("a",), ("x",), "prev", "M") == pytest.approx((10 + 1.5 * g_prev[0]) / 11.5)
    assert model.prob(("a",), ("x",), "prev", "D") > 0
    assert model.distribution(("q",), ("r",), "next") == model.global_dists[1]
    with pytest.raises(ValueError):
        phrase.estimate_reordering(inst, "lexical")


def test_compound_split_rule():
    vocab = {"flower": 4, "pot": 9, "flowerpot": 5}
    assert phrase.compound_split("flowerpot", vocab) == ["flower", "pot"]
    vocab["flowerpot"] = 7
    assert phrase.compound_split("flowerpot", vocab) == ["flowerpot"]
    assert phrase.compound_split("zzzzzz", vocab) == ["zzzzzz"]
    # unseen word: any valid segmentation wins
    assert phrase.compound_split("potflower", {"pot": 1, "flower": 1}) == ["pot", "flower"]
    # parts shorter than the minimum are not considered
    assert phrase.compound_split("abpot", {"ab": 100, "pot": 100}) == ["abpot"]


def test_compound_split_ties_prefer_longer_first_part():
    vocab = {"abc": 4, "abcd": 4, "def": 4, "cdef": 4}
    assert phrase.compound_split("abcdef", vocab) == ["abc", "def"]
    vocab = {"abc": 4, "abcd": 4, "def": 4, "ef": 4, "cdef": 4}
    assert phrase.compound_split("abcdef", vocab, min_part_len=2) == ["abcd", "ef"]
    vocab = {"ab": 9, "cd": 9, "ef": 9, "abcd": 9}
    assert phrase.compound_split("abcdef", vocab, min_part_len=2, max_parts=3) == ["abcd", "ef"]


@settings(max_examples=100, deadline=None)
@given(st.text("abcd", min_size=1, max_size=10),
       st.dictionaries(st.text("abcd", min_size=1, max_size=5), st.integers(0, 20), max_size=12),
       st.integers(1, 3), st.integers(1, 3))
def test_compound_split_concatenates(word, vocab, min_len, parts):
    out = phrase.compound_split(word, vocab, min_len, parts)
    assert "".join(out) == word
    assert 1 <= len(out) <= max(parts, 1)


def test_split_sentence():
    vocab = {"flower": 4, "pot": 9}
    assert phrase.split_sentence(["the", "flowerpot"], vocab) == ["the", "flower", "pot"]


def test_parse_scheme():
    assert phrase.parse_scheme("hier-mslr") == HIER_MSLR
    assert phrase.parse_scheme("msd_bidirectional") == MSD
    with pytest.raises(ValueError):
        phrase.parse_scheme("mslr")


def test_file_roundtrips(tmp_path):
    corpus = ParallelCorpus([pair("a b", "y x")], "s", "t")
    al = [links({(0, 1), (1, 0)}, 2, 2)]
    extracted = phrase.extract_corpus(corpus, al)
    phrase.write_extract(extracted, tmp_path / "extract")
    back = phrase.read_extract(tmp_path / "extract")
    assert [(x.pair.source_tokens, x.pair.target_tokens, x.pair.alignment, x.msd, x.hier)
            for x in back] == \
        [(x.pair.source_tokens, x.pair.target_tokens, x.pair.alignment, x.msd, x.hier)
         for x in extracted]
    table = phrase.score_phrase_table(back, *lex_tables())
    phrase.write_phrase_table(table, tmp_path / "pt")
    assert phrase.read_phrase_table(tmp_path / "pt").entries == table.entries
    for scheme in (MSD, HIER_MSLR):
        model = phrase.estimate_reordering(back, scheme)
        phrase.write_reordering_table(model, tmp_path / "rt")
        text = (tmp_path / "rt").read_text()
        assert text.startswith(f"# scheme={scheme}")
        again = phrase.read_reordering_table(tmp_path / "rt")
        assert again.table == model.table and again.global_dists == model.global_dists
    (tmp_path / "bad").write_text("a ||| x ||| 0.5 0.5\n")
    with pytest.raises(ValueError):
        phrase.read_reordering_table(tmp_path / "bad")


def test_phrase_table_options_sorted():
    feats = PhraseFeatures(1, 1, 1, 1)
    t = PhraseTable({(("a",), ("y",)): feats, (("a",), ("x",)): feats, (("b", "c"), ("z",)): feats})
    assert [e for e, _ in t.options(["a"])] == [("x",), ("y",)]
    assert t.options(["q"]) == []
    assert t.max_source_len() == 2
