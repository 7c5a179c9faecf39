"""Parallel corpus ingestion, cleaning, normalization and splitting.

Text arrives one sentence per line, UTF-8, with the two sides of a
parallel corpus in separate files of equal line count.  Sentences are
represented as plain lists of token strings.
"""

import random
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

Sentence = List[str]

_TOKEN_RE = re.compile(r"\w+(?:[-'\u2019]\w+)*|[^\w\s]")

_PUNCT_TABLE = str.maketrans({
    "\u201c": '"', "\u201d": '"', "\u201e": '"', "\u201f": '"',
    "\u00ab": '"', "\u00bb": '"', "\u2033": '"',
    "\u2018": "'", "\u2019": "'", "\u201a": "'", "\u201b": "'", "\u2032": "'",
    "\u2010": "-", "\u2011": "-", "\u2012": "-", "\u2013": "-",
    "\u2014": "-", "\u2015": "-", "\u2212": "-",
    "\u2026": "...",
    "\u00a0": " ", "\u202f": " ", "\u2009": " ",
})


class IngestionError(ValueError):
    """Raised when an input line cannot be decoded or the sides disagree."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


@dataclass
class SentencePair:
    source: Sentence
    target: Sentence
    line_number: int = 1


@dataclass
class ParallelCorpus:
    pairs: List[SentencePair] = field(default_factory=list)
    source_lang: str = "src"
    target_lang: str = "tgt"

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def sources(self):
        return [p.source for p in self.pairs]

    def targets(self):
        return [p.target for p in self.pairs]

    def swapped(self):
        """The same corpus with source and target exchanged."""
        pairs = [SentencePair(p.target, p.source, p.line_number) for p in self.pairs]
        return ParallelCorpus(pairs, self.target_lang, self.source_lang)


@dataclass(frozen=True)
class Decision:
    keep: bool
    reason: Optional[str] = None

    def __bool__(self):
        return self.keep


KEEP = Decision(True)


class Vocabulary:
    """Surface forms with dense ids (first-occurrence order) and counts."""

    def __init__(self):
        self._ids = {}
        self._counts = Counter()

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sequence[str]]):
        vocab = cls()
        for sentence in sentences:
            for token in sentence:
                vocab.add(token)
        return vocab

    def add(self, token, count=1):
        if token not in self._ids:
            self._ids[token] = len(self._ids)
        self._counts[token] += count

    def id(self, token):
        return self._ids[token]

    def count(self, token):
        return self._counts.get(token, 0)

    def __contains__(self, token):
        return token in self._ids

    def __len__(self):
        return len(self._ids)

    def __iter__(self):
        return iter(self._ids)

    def total(self):
        return sum(self._counts.values())

    def entries(self):
        """Map surface form -> (id, count)."""
        return {w: (i, self._counts[w]) for w, i in self._ids.items()}


@dataclass
class TruecaseModel:
    best_form: dict = field(default_factory=dict)
    counts: Counter = field(default_factory=Counter)


@dataclass(frozen=True)
class CorpusStats:
    sentences: int
    source_tokens: int
    target_tokens: int
    source_vocab: int
    target_vocab: int


def tokenize(text: str, lang: str = "") -> Sentence:
    """Split a raw line into tokens.

    Runs of word characters form tokens, and hyphens or apostrophes are kept
    when they sit between word characters ("co-operate", "don't").  Every
    other non-space character becomes a token of its own.  ``lang`` is
    accepted for interface symmetry; the rules are language independent.
    """
    text = unicodedata.normalize("NFC", text)
    return _TOKEN_RE.findall(text)


def normalize_punctuation(text: str) -> str:
    """Map typographic quotes, dashes, ellipses and odd spaces to ASCII."""
    return text.translate(_PUNCT_TABLE)


def collapse_repeats(sentence: Sentence) -> Sentence:
    """Drop tokens identical to their immediate predecessor."""
    out = []
    for tok in sentence:
        if not out or out[-1] != tok:
            out.append(tok)
    return out


def clean_pair(pair: SentencePair, max_len=80, max_ratio: Optional[float] = 9.0) -> Decision:
    ls, lt = len(pair.source), len(pair.target)
    if ls == 0 or lt == 0:
        return Decision(False, "empty")
    if ls > max_len or lt > max_len:
        return Decision(False, "too_long")
    if max_ratio is not None and max(ls, lt) / min(ls, lt) > max_ratio:
        return Decision(False, "ratio")
    return KEEP


def _script(ch):
    try:
        return unicodedata.name(ch).split(" ", 1)[0]
    except ValueError:
        return "UNKNOWN"


def foreign_fraction(sentence: Sentence, allowed_scripts=("LATIN",)) -> float:
    """Fraction of characters that are neither digits, punctuation, marks,
    nor letters from one of ``allowed_scripts``."""
    allowed = {s.upper() for s in allowed_scripts}
    total = bad = 0
    for tok in sentence:
        for ch in tok:
            total += 1
            cat = unicodedata.category(ch)
            if cat[0] in "NPM":
                continue
            if cat[0] == "L" and _script(ch) in allowed:
                continue
            bad += 1
    return bad / total if total else 0.0


def filter_noise(sentence: Sentence, allowed_scripts=("LATIN",), threshold=0.2) -> Decision:
    if foreign_fraction(sentence, allowed_scripts) > threshold:
        return Decision(False, "noise")
    return KEEP


def _best_forms(counts):
    # most frequent casing per lowercased form, ties to the smaller string
    best = {}
    for form, n in counts.items():
        key = form.lower()
        cur = best.get(key)
        if cur is None or n > counts[cur] or (n == counts[cur] and form < cur):
            best[key] = form
    return best


def train_truecaser(sentences: Iterable[Sequence[str]]) -> TruecaseModel:
    # sentence-initial tokens are skipped, their case is forced by position;
    # a form seen only there is known in its lowercased form
    counts = Counter()
    initial = set()
    for sentence in sentences:
        if sentence:
            initial.add(sentence[0].lower())
        counts.update(sentence[1:])
    best = _best_forms(counts)
    for key in initial:
        best.setdefault(key, key)
    return TruecaseModel(best, counts)


def truecase(sentence: Sentence, model: TruecaseModel) -> Sentence:
    if not sentence:
        return []
    first = sentence[0].lower()
    return [model.best_form.get(first, first)] + list(sentence[1:])


def save_truecaser(model: TruecaseModel, path):
    """One ``form<TAB>count`` line per observed surface form; forms seen only
    sentence-initially are stored with count 0."""
    rows = dict(model.counts)
    for key, form in model.best_form.items():
        if form not in rows:
            rows[form] = 0
    write_lines(path, (f"{w}\t{n}" for w, n in sorted(rows.items())))


def load_truecaser(path) -> TruecaseModel:
    rows = Counter()
    for line in read_lines(path):
        if line:
            form, n = line.rsplit("\t", 1)
            rows[form] = int(n)
    best = _best_forms(rows)
    return TruecaseModel(best, Counter({w: n for w, n in rows.items() if n > 0}))


def split_corpus(corpus: ParallelCorpus, n_dev=1000, n_test=1000, seed=0):
    """Carve random dev and test sets out of ``corpus``.

    Indices are drawn with ``random.Random(seed).sample(range(N), n_dev + n_test)``
    (Python's Mersenne Twister); the first ``n_dev`` drawn indices form dev,
    the rest test.  All three parts keep the original corpus order.
    """
    n = len(corpus)
    if n <= n_dev + n_test:
        raise ValueError(
            f"corpus of {n} pairs is too small for {n_dev} dev + {n_test} test pairs")
    drawn = random.Random(seed).sample(range(n), n_dev + n_test)
    dev_idx = set(drawn[:n_dev])
    test_idx = set(drawn[n_dev:])

    def part(idx):
        return ParallelCorpus([corpus.pairs[i] for i in sorted(idx)],
                              corpus.source_lang, corpus.target_lang)

    train_idx = [i for i in range(n) if i not in dev_idx and i not in test_idx]
    return part(train_idx), part(dev_idx), part(test_idx)


def corpus_stats(corpus: ParallelCorpus) -> CorpusStats:
    src_vocab, tgt_vocab = set(), set()
    ns = nt = 0
    for pair in corpus:
        ns += len(pair.source)
        nt += len(pair.target)
        src_vocab.update(pair.source)
        tgt_vocab.update(pair.target)
    return CorpusStats(len(corpus), ns, nt, len(src_vocab), len(tgt_vocab))


def stem(token: str, k: int = 6) -> str:
    if k < 1:
        raise ValueError("stem length must be >= 1")
    return token.lower()[:k]


# -- file I/O -------------------------------------------------------------

def read_lines(path) -> List[str]:
    """Read a UTF-8 file, one entry per line, reporting bad bytes by line."""
    lines = []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            try:
                lines.append(raw.decode("utf-8").rstrip("\r\n"))
            except UnicodeDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid UTF-8 ({exc.reason})",
                                     lineno) from None
    return lines


def write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def read_parallel(source_path, target_path, source_lang="src", target_lang="tgt",
                  tokenized=False) -> ParallelCorpus:
    """Load two line-aligned files.  With ``tokenized=True`` lines are split on
    whitespace, otherwise they go through :func:`tokenize`."""
    src = read_lines(source_path)
    tgt = read_lines(target_path)
    if len(src) != len(tgt):
        raise IngestionError(
            f"line count mismatch: {source_path} has {len(src)}, {target_path} has {len(tgt)}")
    split = str.split if tokenized else (lambda s: tokenize(s))
    pairs = [SentencePair(split(s), split(t), i) for i, (s, t) in enumerate(zip(src, tgt), 1)]
    return ParallelCorpus(pairs, source_lang, target_lang)


def write_parallel(corpus: ParallelCorpus, source_path, target_path):
    write_lines(source_path, (" ".join(p.source) for p in corpus))
    write_lines(target_path, (" ".join(p.target) for p in corpus))


def clean_corpus(corpus: ParallelCorpus, max_len=80, max_ratio=9.0, allowed_scripts=None,
                 noise_threshold=0.2, dedup=False):
    """Apply the pair filters; returns ``(kept_corpus, drop_log)`` where the
    log holds ``(line_number, reason)`` tuples."""
    kept, log = [], []
    for pair in corpus:
        if dedup:
            pair = SentencePair(collapse_repeats(pair.source), collapse_repeats(pair.target),
                                pair.line_number)
        decision = clean_pair(pair, max_len, max_ratio)
        if decision and allowed_scripts is not None:
            src_scripts, tgt_scripts = allowed_scripts
            decision = filter_noise(pair.source, src_scripts, noise_threshold)
            if decision:
                decision = filter_noise(pair.target, tgt_scripts, noise_threshold)
        if decision:
            kept.append(pair)
        else:
            log.append((pair.line_number, decision.reason))
    return ParallelCorpus(kept, corpus.source_lang, corpus.target_lang), log
