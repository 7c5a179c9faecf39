"""Deterministic toy parallel corpora with known structure.

The generated "languages" share a bijective word lexicon.  The target side
puts adjectives after nouns, nouns carry inflection suffixes on both sides
(so 6-character stems collapse them), some source nouns fuse into
compounds that the target spells as two words, and sentences may be
capitalized or wrapped in typographic quotes.
"""

import random
from dataclasses import dataclass, field
from typing import Dict, List

from .corpus import ParallelCorpus, SentencePair, write_lines

_ONSETS = "b c d f g h k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()

SOURCE_SUFFIXES = ("", "o", "ami")
TARGET_SUFFIXES = ("", "en", "is")


def _word(rng, syllables, seen):
    while True:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in seen:
            seen.add(w)
            return w


@dataclass
class Lexicon:
    nouns: Dict[str, str] = field(default_factory=dict)
    adjectives: Dict[str, str] = field(default_factory=dict)
    verbs: Dict[str, str] = field(default_factory=dict)
    function: Dict[str, str] = field(default_factory=dict)
    compounds: Dict[str, tuple] = field(default_factory=dict)   # source compound -> (noun, noun)


def make_lexicon(seed=0, n_nouns=40, n_adjectives=15, n_verbs=15, n_function=6, n_compounds=8):
    rng = random.Random(seed)
    seen = set()
    lex = Lexicon()
    for table, n, syl in ((lex.nouns, n_nouns, 3), (lex.adjectives, n_adjectives, 3),
                          (lex.verbs, n_verbs, 2), (lex.function, n_function, 1)):
        for _ in range(n):
            table[_word(rng, syl, seen)] = _word(rng, syl, seen)
    nouns = sorted(lex.nouns)
    while len(lex.compounds) < n_compounds:
        a, b = rng.sample(nouns, 2)
        lex.compounds.setdefault(a + b, (a, b))
    return lex


def _noun_pair(rng, lex, nouns):
    s = rng.choice(nouns)
    k = rng.randrange(len(SOURCE_SUFFIXES))
    return [s + SOURCE_SUFFIXES[k]], [lex.nouns[s] + TARGET_SUFFIXES[k]]


def make_pair(rng, lex: Lexicon, compound_rate=0.1, quote_rate=0.1, capitalize=True):
    nouns = sorted(lex.nouns)
    adjs = sorted(lex.adjectives)
    verbs = sorted(lex.verbs)
    func = sorted(lex.function)
    comps = sorted(lex.compounds)
    src, tgt = [], []
    for _ in range(rng.randint(2, 4)):
        kind = rng.random()
        if kind < 0.35:
            # adjective + noun swaps order on the target side
            a = rng.choice(adjs)
            ns, nt = _noun_pair(rng, lex, nouns)
            src += [a] + ns
            tgt += nt + [lex.adjectives[a]]
        elif kind < 0.6:
            f = rng.choice(func)
            ns, nt = _noun_pair(rng, lex, nouns)
            src += [f] + ns
            tgt += [lex.function[f]] + nt
        elif kind < 0.6 + compound_rate:
            c = rng.choice(comps)
            a, b = lex.compounds[c]
            src.append(c)
            tgt += [lex.nouns[a], lex.nouns[b]]
        else:
            v = rng.choice(verbs)
            src.append(v)
            tgt.append(lex.verbs[v])
    if capitalize:
        src[0] = src[0].capitalize()
        tgt[0] = tgt[0].capitalize()
    if rng.random() < quote_rate:
        src = ["“"] + src + ["”"]
        tgt = ["„"] + tgt + ["”"]
    return src, tgt


def make_corpus(n_pairs=2000, seed=0, lexicon=None, compound_rate=0.1, quote_rate=0.1,
                noise_rate=0.0, capitalize=True) -> ParallelCorpus:
    """``n_pairs`` sentence pairs; ``noise_rate`` of them get a Cyrillic
    source side, which the script filter should drop."""
    lex = lexicon or make_lexicon(seed)
    rng = random.Random(seed + 1)
    pairs = []
    for i in range(n_pairs):
        src, tgt = make_pair(rng, lex, compound_rate, quote_rate, capitalize)
        if noise_rate and rng.random() < noise_rate:
            src = ["шум", "текст"] + src[:1]
        pairs.append(SentencePair(src, tgt, i + 1))
    return ParallelCorpus(pairs, "src", "tgt")


def write_corpus(corpus: ParallelCorpus, source_path, target_path):
    """Write detokenized-looking raw text (tokens joined by spaces)."""
    write_lines(source_path, (" ".join(p.source) for p in corpus))
    write_lines(target_path, (" ".join(p.target) for p in corpus))


def compound_vocabulary(lex: Lexicon) -> List[str]:
    return sorted(lex.compounds)
