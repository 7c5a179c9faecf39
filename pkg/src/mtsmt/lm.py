"""N-gram language models with interpolated Kneser-Ney or Witten-Bell smoothing.

Models are stored in backoff form (log10 probabilities for observed n-grams
plus log10 backoff weights for histories), which is exactly equivalent to the
interpolated estimate for every query.  Both an ARPA text form and a compact
binary form are supported.
"""

import io
import logging
import math
import struct
from collections import Counter, defaultdict
from typing import Dict, Iterable, Sequence, Tuple

log = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

KNESER_NEY = "kneser_ney_interpolated"
WITTEN_BELL = "witten_bell"

Gram = Tuple[str, ...]


class SmoothingError(ValueError):
    pass


class FormatError(ValueError):
    """Malformed serialized model; ``offset`` is the byte (or line) position."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class NGramCounts:
    """Raw n-gram counts of a padded corpus side, for orders 1..order.

    ``counts[k]`` maps k-tuples to occurrence counts; ``continuation_counts[k]``
    (k < order) maps k-tuples to the number of distinct word types seen
    immediately before them.
    """

    def __init__(self, order, counts=None):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self.counts: Dict[int, Counter] = counts or {k: Counter() for k in range(1, order + 1)}
        self.continuation_counts = _continuations(self.counts, order)

    def __getitem__(self, gram):
        return self.counts[len(gram)].get(tuple(gram), 0)

    def is_empty(self):
        return not self.counts[1]

    def merge(self, other):
        """Sum two count sets (e.g. built on disjoint shards of a corpus)."""
        if other.order != self.order:
            raise ValueError("cannot merge counts of different order")
        merged = {k: self.counts[k] + other.counts[k] for k in self.counts}
        return NGramCounts(self.order, merged)


def _continuations(counts, order):
    cont = {}
    for k in range(1, order):
        preceding = defaultdict(set)
        for gram in counts[k + 1]:
            preceding[gram[1:]].add(gram[0])
        cont[k] = Counter({g: len(s) for g, s in preceding.items()})
    return cont


def count_ngrams(sentences: Iterable[Sequence[str]], order=5) -> NGramCounts:
    if order < 1:
        raise ValueError("order must be >= 1")
    counts = {k: Counter() for k in range(1, order + 1)}
    for sentence in sentences:
        padded = (BOS,) + tuple(sentence) + (EOS,)
        for k in range(1, order + 1):
            c = counts[k]
            for i in range(len(padded) - k + 1):
                c[padded[i:i + k]] += 1
    return NGramCounts(order, counts)


class NGramModel:
    """A backoff n-gram model queried in log10 space."""

    def __init__(self, order, vocab, prob, backoff, smoothing):
        self.order = order
        self.vocab = frozenset(vocab) | {BOS, EOS, UNK}
        self.prob: Dict[Gram, float] = prob
        self.backoff: Dict[Gram, float] = backoff
        self.smoothing = smoothing

    @classmethod
    def uniform(cls, words):
        """Order-1 model assigning 1/V to each of ``words`` (plus </s> and <unk>)."""
        vocab = set(words) | {EOS, UNK}
        lp = -math.log10(len(vocab))
        return cls(1, vocab, {(w,): lp for w in vocab}, {}, "uniform")

    def predictable(self):
        """Words that receive probability mass (everything but <s>)."""
        return sorted(self.vocab - {BOS})

    def logprob(self, word, history=()):
        if word == BOS:
            raise ValueError("the sentence-begin marker is never predicted")
        if word not in self.vocab:
            word = UNK
        if self.order > 1:
            hist = tuple(w if w in self.vocab else UNK for w in history[max(0, len(history) - self.order + 1):])
        else:
            hist = ()
        total = 0.0
        prob, backoff = self.prob, self.backoff
        while True:
            p = prob.get(hist + (word,))
            if p is not None:
                return total + p
            if not hist:
                raise KeyError(f"no unigram entry for {word!r}")
            total += backoff.get(hist, 0.0)
            hist = hist[1:]

    def sentence_logprob(self, sentence):
        history = [BOS]
        total = 0.0
        for w in list(sentence) + [EOS]:
            total += self.logprob(w, history)
            history.append(w)
        return total

    def __eq__(self, other):
        return (isinstance(other, NGramModel) and self.order == other.order
                and self.vocab == other.vocab and self.prob == other.prob
                and self.backoff == other.backoff and self.smoothing == other.smoothing)


def logprob(model: NGramModel, word, history=()):
    return model.logprob(word, history)


def perplexity(model: NGramModel, sentences: Sequence[Sequence[str]]) -> float:
    if not sentences:
        raise ValueError("perplexity of an empty corpus is undefined")
    total = 0.0
    n = 0
    for sentence in sentences:
        total += model.sentence_logprob(sentence)
        n += len(sentence) + 1
    return 10.0 ** (-total / n)


# -- estimation -------------------------------------------------------------

def _remap_rare(counts: NGramCounts, floor):
    rare = {g[0] for g, c in counts.counts[1].items() if c < floor and g[0] not in (BOS, EOS)}
    if not rare:
        return counts
    remapped = {}
    for k, table in counts.counts.items():
        new = Counter()
        for g, c in table.items():
            new[tuple(UNK if w in rare else w for w in g)] += c
        remapped[k] = new
    return NGramCounts(counts.order, remapped)


def _level(counts: NGramCounts, k, continuation):
    """Counts used at order k: raw counts, or continuation counts for the
    lower orders of a Kneser-Ney model (n-grams opening with <s> keep their
    raw count since nothing can precede them)."""
    raw = counts.counts[k]
    if k == 1:
        raw = {g: c for g, c in raw.items() if g[0] != BOS}
    if not continuation or k == counts.order:
        return dict(raw)
    cont = counts.continuation_counts[k]
    return {g: (c if g[0] == BOS else cont[g]) for g, c in raw.items()}


def _counts_of_counts(level):
    freq = Counter(level.values())
    return freq.get(1, 0), freq.get(2, 0)


def _estimate(counts: NGramCounts, use_kn, strict=False):
    if counts.is_empty():
        raise SmoothingError("cannot estimate a model from empty counts")
    order = counts.order
    vocab = {g[0] for g in counts.counts[1]} | {EOS, UNK}
    predictable = sorted(vocab - {BOS})
    prob, backoff = {}, {}
    model = NGramModel(order, vocab, prob, backoff, KNESER_NEY if use_kn else WITTEN_BELL)

    for k in range(1, order + 1):
        level = _level(counts, k, use_kn)
        kn_here = use_kn
        if use_kn:
            n1, n2 = _counts_of_counts(level)
            if n1 == 0 or n2 == 0:
                if strict:
                    raise SmoothingError(
                        f"order {k} lacks singleton/doubleton counts (n1={n1}, n2={n2}); "
                        "Kneser-Ney discount undefined")
                log.warning("order %d: n1=%d n2=%d, falling back to Witten-Bell at this order",
                            k, n1, n2)
                kn_here = False
            else:
                discount = n1 / (n1 + 2.0 * n2)

        if k == 1:
            total = sum(level.values())
            types = len(level)
            uniform = 1.0 / len(predictable)
            for w in predictable:
                c = level.get((w,), 0)
                if kn_here:
                    p = max(c - discount, 0.0) / total + discount * types / total * uniform
                else:
                    p = (c + types * uniform) / (total + types)
                prob[(w,)] = math.log10(p)
            continue

        totals = Counter()
        types = Counter()
        for g, c in level.items():
            totals[g[:-1]] += c
            types[g[:-1]] += 1
        gammas = {}
        for h, tot in totals.items():
            if kn_here:
                gammas[h] = discount * types[h] / tot
            else:
                gammas[h] = types[h] / (tot + types[h])
        for g, c in level.items():
            h = g[:-1]
            lower = 10.0 ** model.logprob(g[-1], h[1:])
            if kn_here:
                p = (c - discount) / totals[h] + gammas[h] * lower
            else:
                p = c / (totals[h] + types[h]) + gammas[h] * lower
            prob[g] = math.log10(p)
        # histories get their weight only after the whole order is filled, so
        # the lower-order queries above never see order-k state
        for h, gamma in gammas.items():
            backoff[h] = math.log10(gamma)
    return model


def estimate_kneser_ney(counts: NGramCounts, unk_floor=1, strict=False) -> NGramModel:
    """Interpolated Kneser-Ney with one discount per order, D = n1 / (n1 + 2 n2).

    Words seen fewer than ``unk_floor`` times are folded into <unk>.  An order
    whose adjusted counts have no singletons or no doubletons falls back to
    Witten-Bell (or raises :class:`SmoothingError` when ``strict``).
    """
    if unk_floor > 1:
        counts = _remap_rare(counts, unk_floor)
    return _estimate(counts, use_kn=True, strict=strict)


def estimate_witten_bell(counts: NGramCounts) -> NGramModel:
    return _estimate(counts, use_kn=False)


def train(sentences, order=5, smoothing="kn", unk_floor=1) -> NGramModel:
    counts = count_ngrams(sentences, order)
    if smoothing in ("kn", KNESER_NEY):
        return estimate_kneser_ney(counts, unk_floor=unk_floor)
    if smoothing in ("wb", WITTEN_BELL):
        return estimate_witten_bell(counts)
    raise ValueError(f"unknown smoothing {smoothing!r}")


# -- serialization ----------------------------------------------------------

_MAGIC = b"MTLM"
_VERSION = 1


def _grams_by_order(model):
    by_order = defaultdict(set)
    for g in model.prob:
        by_order[len(g)].add(g)
    for g in model.backoff:
        by_order[len(g)].add(g)
    return by_order


def serialize(model: NGramModel) -> bytes:
    words = sorted(model.vocab)
    ids = {w: i for i, w in enumerate(words)}
    out = io.BytesIO()
    out.write(_MAGIC)
    out.write(struct.pack("<HH", _VERSION, model.order))
    sm = model.smoothing.encode("utf-8")
    out.write(struct.pack("<H", len(sm)) + sm)
    out.write(struct.pack("<I", len(words)))
    for w in words:
        b = w.encode("utf-8")
        out.write(struct.pack("<I", len(b)) + b)
    by_order = _grams_by_order(model)
    nan = float("nan")
    for k in range(1, model.order + 1):
        grams = sorted(by_order.get(k, ()))
        out.write(struct.pack("<I", len(grams)))
        entry = struct.Struct("<%dIdBd" % k)
        for g in grams:
            p = model.prob.get(g, nan)
            has_bo = g in model.backoff
            out.write(entry.pack(*(ids[w] for w in g), p, has_bo, model.backoff.get(g, 0.0)))
    return out.getvalue()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def unpack(self, fmt):
        st = struct.Struct(fmt)
        if self.pos + st.size > len(self.data):
            raise FormatError("truncated stream", self.pos)
        vals = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return vals

    def string(self, len_fmt):
        (n,) = self.unpack(len_fmt)
        start = self.pos
        if start + n > len(self.data):
            raise FormatError("truncated string", start)
        self.pos += n
        try:
            return self.data[start:self.pos].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("invalid UTF-8 in string", start) from None


def deserialize(data: bytes) -> NGramModel:
    r = _Reader(data)
    if data[:4] != _MAGIC:
        raise FormatError("bad magic header", 0)
    r.pos = 4
    version, order = r.unpack("<HH")
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    smoothing = r.string("<H")
    (nwords,) = r.unpack("<I")
    words = [r.string("<I") for _ in range(nwords)]
    prob, backoff = {}, {}
    for k in range(1, order + 1):
        (n,) = r.unpack("<I")
        fmt = "<%dIdBd" % k
        for _ in range(n):
            at = r.pos
            vals = r.unpack(fmt)
            try:
                g = tuple(words[i] for i in vals[:k])
            except IndexError:
                raise FormatError("word id out of range", at) from None
            p, has_bo, bo = vals[k:]
            if not math.isnan(p):
                prob[g] = p
            if has_bo:
                backoff[g] = bo
    if r.pos != len(data):
        raise FormatError("trailing bytes", r.pos)
    return NGramModel(order, words, prob, backoff, smoothing)


def save(model, path):
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load(path) -> NGramModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == _MAGIC:
        return deserialize(data)
    return from_arpa(data.decode("utf-8"))


def to_arpa(model: NGramModel) -> str:
    by_order = _grams_by_order(model)
    lines = [f"# smoothing={model.smoothing}", "", "\\data\\"]
    sections = []
    for k in range(1, model.order + 1):
        grams = sorted(g for g in by_order.get(k, ()) if g in model.prob or g == (BOS,))
        sections.append(grams)
        lines.append(f"ngram {k}={len(grams)}")
    for k, grams in enumerate(sections, 1):
        lines += ["", f"\\{k}-grams:"]
        for g in grams:
            p = model.prob.get(g, -99.0)
            fields = [repr(p), " ".join(g)]
            if g in model.backoff:
                fields.append(repr(model.backoff[g]))
            lines.append("\t".join(fields))
    lines += ["", "\\end\\", ""]
    return "\n".join(lines)


def from_arpa(text: str) -> NGramModel:
    smoothing = "unknown"
    prob, backoff = {}, {}
    vocab = set()
    order = 0
    k = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("# smoothing="):
            smoothing = line.split("=", 1)[1]
        elif line.startswith("ngram "):
            order = max(order, int(line[6:].split("=")[0]))
        elif line.startswith("\\") and line.endswith("-grams:"):
            k = int(line[1:].split("-")[0])
        elif line in ("\\data\\", "\\end\\") or line.startswith("#"):
            continue
        elif k is not None:
            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise FormatError("bad ARPA entry", lineno)
            g = tuple(fields[1].split(" "))
            if len(g) != k:
                raise FormatError(f"expected {k} words", lineno)
            p = float(fields[0])
            if not (g == (BOS,) and p <= -99.0):
                prob[g] = p
            if len(fields) == 3:
                backoff[g] = float(fields[2])
            if k == 1:
                vocab.add(g[0])
        else:
            raise FormatError("unexpected line outside sections", lineno)
    if order == 0:
        raise FormatError("missing \\data\\ header", 0)
    return NGramModel(order, vocab, prob, backoff, smoothing)
