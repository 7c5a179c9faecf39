"""Phrase-pair extraction and scoring, lexicalized reordering, compound splitting."""

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

from .align import NULL, AlignmentLinks, FLOOR
from .corpus import SentencePair

MSD = "msd"
HIER_MSLR = "hier_mslr"
ORIENTATIONS = {MSD: ("M", "S", "D"), HIER_MSLR: ("M", "S", "DL", "DR")}
DIRECTIONS = ("prev", "next")

_SCHEME_NAMES = {
    "msd": MSD, "msd-bidirectional-fe": MSD, "msd_bidirectional": MSD,
    "hier-mslr": HIER_MSLR, "hier_mslr": HIER_MSLR, "hier-mslr-bidirectional-fe": HIER_MSLR,
    "hier_mslr_bidirectional": HIER_MSLR,
}


def parse_scheme(name):
    try:
        return _SCHEME_NAMES[name]
    except KeyError:
        raise ValueError(f"unknown reordering scheme {name!r}") from None


@dataclass(frozen=True)
class PhrasePair:
    source_span: Tuple[int, int]
    target_span: Tuple[int, int]
    source_tokens: Tuple[str, ...]
    target_tokens: Tuple[str, ...]
    alignment: Tuple[Tuple[int, int], ...] = ()   # links relative to the box corner


class PhraseFeatures(NamedTuple):
    phi_f_given_e: float
    phi_e_given_f: float
    lex_f_given_e: float
    lex_e_given_f: float


# -- extraction ------------------------------------------------------------

def extract_phrases(pair: SentencePair, alignment: AlignmentLinks, max_len=7) -> List[PhrasePair]:
    """All phrase pairs consistent with ``alignment``, up to ``max_len`` words a side.

    For each source span, the minimal target span covering its links is
    checked for consistency and then widened over unaligned target words at
    either edge.  Source spans with unaligned boundary words come out of the
    outer enumeration directly.
    """
    src, tgt = pair.source, pair.target
    ls, lt = len(src), len(tgt)
    if (alignment.source_len, alignment.target_len) != (ls, lt):
        raise ValueError("alignment dimensions do not match the sentence pair")
    s2t = [[] for _ in range(ls)]
    t2s = [[] for _ in range(lt)]
    for i, j in alignment.links:
        s2t[i].append(j)
        t2s[j].append(i)
    tgt_aligned = [bool(x) for x in t2s]

    out = []
    for s1 in range(ls):
        tmin, tmax = lt, -1
        for s2 in range(s1, min(ls, s1 + max_len)):
            for j in s2t[s2]:
                tmin = min(tmin, j)
                tmax = max(tmax, j)
            if tmax < 0 or tmax - tmin + 1 > max_len:
                continue
            if any(not (s1 <= i <= s2) for j in range(tmin, tmax + 1) for i in t2s[j]):
                continue
            t1 = tmin
            while t1 >= 0 and (t1 == tmin or not tgt_aligned[t1]) and tmax - t1 + 1 <= max_len:
                t2 = tmax
                while t2 < lt and (t2 == tmax or not tgt_aligned[t2]) and t2 - t1 + 1 <= max_len:
                    links = tuple(sorted((i - s1, j - t1) for i, j in alignment.links
                                         if s1 <= i <= s2 and t1 <= j <= t2))
                    out.append(PhrasePair((s1, s2 + 1), (t1, t2 + 1), tuple(src[s1:s2 + 1]),
                                          tuple(tgt[t1:t2 + 1]), links))
                    t2 += 1
                t1 -= 1
    return out


# -- orientation -----------------------------------------------------------

def _span(x):
    return tuple(x.source_span) if hasattr(x, "source_span") else tuple(x)


def _block(start, end, covered):
    while start - 1 in covered:
        start -= 1
    while end in covered:
        end += 1
    return start, end


def classify_orientation(prev, current, scheme=MSD, covered=None):
    """Orientation of ``current`` relative to the phrase translated before it.

    ``prev``/``current`` are source spans ``(start, end)`` or phrase pairs.
    For ``hier_mslr``, ``covered`` (source positions translated so far) lets
    ``prev`` grow into the maximal contiguous block around it; discontinuous
    cases are ``DR`` when ``current`` lies right of that block, else ``DL``.
    """
    ps, pe = _span(prev)
    cs, ce = _span(current)
    if max(ps, cs) < min(pe, ce):
        raise ValueError(f"overlapping source spans {ps, pe} and {cs, ce}")
    if scheme == HIER_MSLR and covered is not None:
        ps, pe = _block(ps, pe, covered)
    if pe == cs:
        return "M"
    if ps == ce:
        return "S"
    if scheme == MSD:
        return "D"
    return "DR" if cs >= pe else "DL"


class _SentenceBlocks:
    """Consistent blocks indexed by target boundary.

    ``ending[t]`` holds the source starts and ends of blocks whose target
    side ends at ``t`` (exclusive); ``starting[t]`` the same for blocks whose
    target side starts at ``t``.  Blocks may absorb unaligned words on
    either side, exactly like extracted phrase pairs.
    """

    def __init__(self, links, ls, lt):
        self.t2s = [[] for _ in range(lt)]
        s2t = [[] for _ in range(ls)]
        for i, j in links:
            self.t2s[j].append(i)
            s2t[i].append(j)
        self.ending = defaultdict(lambda: (set(), set()))
        self.starting = defaultdict(lambda: (set(), set()))
        for x in range(lt):
            smin, smax = ls, -1
            for y in range(x, lt):
                for i in self.t2s[y]:
                    smin = min(smin, i)
                    smax = max(smax, i)
                if smax < 0:
                    continue
                if all(x <= j <= y for i in range(smin, smax + 1) for j in s2t[i]):
                    lo, hi = smin, smax + 1
                    while lo > 0 and not s2t[lo - 1]:
                        lo -= 1
                    while hi < ls and not s2t[hi]:
                        hi += 1
                    for table in (self.ending[y + 1], self.starting[x]):
                        table[0].update(range(lo, smin + 1))
                        table[1].update(range(smax + 1, hi + 1))

    def nearest_source(self, t, step):
        while 0 <= t < len(self.t2s):
            if self.t2s[t]:
                return self.t2s[t]
            t += step
        return None


def training_orientations(pp: PhrasePair, links, ls, lt, scheme=MSD, blocks=None):
    """(previous, next) orientation labels of an extracted phrase pair.

    ``msd`` is word based: the neighbouring alignment point decides.  For
    ``hier_mslr`` any consistent block adjacent on the target side counts.
    The sentence boundaries act as phrases at source positions -1 and ``ls``.
    """
    s1, s2 = pp.source_span
    t1, t2 = pp.target_span
    cur = (s1, s2)
    if scheme == MSD:
        if t1 == 0:
            prev = classify_orientation((-1, 0), cur, MSD)
        elif (s1 - 1, t1 - 1) in links:
            prev = "M"
        elif (s2, t1 - 1) in links:
            prev = "S"
        else:
            prev = "D"
        if t2 == lt:
            nxt = classify_orientation(cur, (ls, ls + 1), MSD)
        elif (s2, t2) in links:
            nxt = "M"
        elif (s1 - 1, t2) in links:
            nxt = "S"
        else:
            nxt = "D"
        return prev, nxt

    if blocks is None:
        blocks = _SentenceBlocks(links, ls, lt)
    if t1 == 0:
        prev = classify_orientation((-1, 0), cur, HIER_MSLR)
    else:
        starts, ends = blocks.ending.get(t1, ((), ()))
        if s1 in ends:
            prev = "M"
        elif s2 in starts:
            prev = "S"
        else:
            srcs = blocks.nearest_source(t1 - 1, -1)
            prev = "DR" if srcs is None or min(srcs) < s1 else "DL"
    if t2 == lt:
        nxt = classify_orientation(cur, (ls, ls + 1), HIER_MSLR)
    else:
        starts, ends = blocks.starting.get(t2, ((), ()))
        if s2 in starts:
            nxt = "M"
        elif s1 in ends:
            nxt = "S"
        else:
            srcs = blocks.nearest_source(t2, 1)
            nxt = "DR" if srcs is None or max(srcs) >= s2 else "DL"
    return prev, nxt


@dataclass(frozen=True)
class ExtractedPhrase:
    pair: PhrasePair
    msd: Tuple[str, str]
    hier: Tuple[str, str]

    def orientations(self, scheme):
        return self.msd if scheme == MSD else self.hier


def extract_corpus(corpus, alignments, max_len=7) -> List[ExtractedPhrase]:
    """Extract phrase pairs with both reordering schemes' orientations."""
    out = []
    for pair, al in zip(corpus, alignments):
        ls, lt = len(pair.source), len(pair.target)
        blocks = _SentenceBlocks(al.links, ls, lt)
        for pp in extract_phrases(pair, al, max_len):
            out.append(ExtractedPhrase(
                pp,
                training_orientations(pp, al.links, ls, lt, MSD),
                training_orientations(pp, al.links, ls, lt, HIER_MSLR, blocks)))
    return out


# -- phrase table ----------------------------------------------------------

class PhraseTable:
    def __init__(self, entries: Optional[Dict] = None):
        self.entries: Dict[Tuple[Tuple[str, ...], Tuple[str, ...]], PhraseFeatures] = entries or {}
        self._index = None

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        return key in self.entries

    def __getitem__(self, key):
        return self.entries[key]

    def options(self, source):
        """Target phrases and features for a source phrase."""
        if self._index is None:
            index = defaultdict(list)
            for (f, e), feats in sorted(self.entries.items()):
                index[f].append((e, feats))
            self._index = dict(index)
        return self._index.get(tuple(source), [])

    def max_source_len(self):
        return max((len(f) for f, _ in self.entries), default=0)


def _lex_weight(gen_words, cond_words, links, table, key):
    """Product over generated words of the mean t(gen | linked cond), or
    t(gen | NULL) for unlinked words.  ``links`` are (gen_idx, cond_idx)."""
    linked = defaultdict(list)
    for g, c in links:
        linked[g].append(c)
    w = 1.0
    for g, word in enumerate(gen_words):
        word = key(word)
        cs = linked.get(g)
        if cs:
            w *= sum(table.prob(word, key(cond_words[c])) for c in cs) / len(cs)
        else:
            w *= table.prob(word, NULL)
    return w


def score_phrase_table(instances: Iterable, lex_fwd, lex_bwd, key=None) -> PhraseTable:
    """Relative-frequency phrase probabilities plus lexical weights.

    ``lex_fwd`` holds t(source word | target word), ``lex_bwd`` holds
    t(target word | source word); ``key`` maps surface words to the form
    those tables were trained on (e.g. a stemmer).  Each phrase pair's
    lexical weights use its most frequent internal alignment, ties going to
    the lexicographically smallest.
    """
    key = key or (lambda w: w)
    joint = Counter()
    f_count = Counter()
    e_count = Counter()
    aligns = defaultdict(Counter)
    for inst in instances:
        pp = inst.pair if isinstance(inst, ExtractedPhrase) else inst
        fe = (pp.source_tokens, pp.target_tokens)
        joint[fe] += 1
        f_count[pp.source_tokens] += 1
        e_count[pp.target_tokens] += 1
        aligns[fe][pp.alignment] += 1
    if not joint:
        raise ValueError("no phrase instances to score")
    entries = {}
    for (f, e), c in joint.items():
        best = min(aligns[(f, e)].items(), key=lambda kv: (-kv[1], kv[0]))[0]
        lex_fe = _lex_weight(f, e, best, lex_fwd, key)
        lex_ef = _lex_weight(e, f, [(j, i) for i, j in best], lex_bwd, key)
        entries[(f, e)] = PhraseFeatures(c / e_count[e], c / f_count[f], lex_fe, lex_ef)
    return PhraseTable(entries)


# -- reordering model -------------------------------------------------------

def smoothed_distribution(counts, global_dist, sigma=0.5):
    """(c_o + sigma*K*g_o) / (C + sigma*K) for each orientation o."""
    k = len(global_dist)
    total = sum(counts)
    return tuple((c + sigma * k * g) / (total + sigma * k) for c, g in zip(counts, global_dist))


class ReorderingModel:
    def __init__(self, scheme, table, global_dists):
        self.scheme = scheme
        self.orientations = ORIENTATIONS[scheme]
        self.table: Dict[Tuple, Tuple[Tuple[float, ...], Tuple[float, ...]]] = table
        self.global_dists = global_dists   # (prev, next)

    def distribution(self, f, e, direction):
        d = 0 if direction == "prev" else 1
        entry = self.table.get((tuple(f), tuple(e)))
        return entry[d] if entry is not None else self.global_dists[d]

    def prob(self, f, e, direction, orientation):
        return self.distribution(f, e, direction)[self.orientations.index(orientation)]


def estimate_reordering(instances: Iterable, scheme=MSD, sigma=0.5) -> ReorderingModel:
    """Per-phrase-pair orientation distributions for both directions.

    ``instances`` yields :class:`ExtractedPhrase` records or
    ``(source_tokens, target_tokens, prev_label, next_label)`` tuples.  Counts
    are smoothed towards the global orientation distribution, which is itself
    add-sigma smoothed so no orientation ever gets zero probability.
    """
    scheme = parse_scheme(scheme)
    labels = ORIENTATIONS[scheme]
    idx = {o: n for n, o in enumerate(labels)}
    k = len(labels)
    counts = defaultdict(lambda: ([0] * k, [0] * k))
    glob = ([0] * k, [0] * k)
    for inst in instances:
        if isinstance(inst, ExtractedPhrase):
            f, e = inst.pair.source_tokens, inst.pair.target_tokens
            prev, nxt = inst.orientations(scheme)
        else:
            f, e, prev, nxt = inst
        entry = counts[(tuple(f), tuple(e))]
        for d, label in enumerate((prev, nxt)):
            entry[d][idx[label]] += 1
            glob[d][idx[label]] += 1
    global_dists = tuple(tuple((g + sigma) / (sum(gd) + sigma * k) for g in gd) for gd in glob)
    table = {fe: (smoothed_distribution(c[0], global_dists[0], sigma),
                  smoothed_distribution(c[1], global_dists[1], sigma))
             for fe, c in counts.items()}
    return ReorderingModel(scheme, table, global_dists)


# -- compound splitting ------------------------------------------------------

def _freq(vocab, word):
    if hasattr(vocab, "count") and not isinstance(vocab, dict):
        return vocab.count(word)
    return vocab.get(word, 0)


def _segmentations(word, vocab, min_part_len, max_parts):
    if max_parts == 0:
        return
    if len(word) >= min_part_len and _freq(vocab, word) > 0:
        yield [word]
    for cut in range(min_part_len, len(word) - min_part_len + 1):
        head = word[:cut]
        if _freq(vocab, head) <= 0:
            continue
        for rest in _segmentations(word[cut:], vocab, min_part_len, max_parts - 1):
            yield [head] + rest


def compound_split(word, vocab, min_part_len=3, max_parts=2) -> List[str]:
    """Split ``word`` when the geometric mean of its parts' corpus
    frequencies beats the frequency of the word itself.

    Only segmentations into 2..``max_parts`` in-vocabulary parts of at least
    ``min_part_len`` characters are considered.  Ties prefer fewer parts,
    then longer parts from the left.
    """
    best_key, best = None, None
    for parts in _segmentations(word, vocab, min_part_len, max_parts):
        if len(parts) < 2:
            continue
        gmean = math.prod(_freq(vocab, p) for p in parts) ** (1.0 / len(parts))
        key = (-gmean, len(parts), [-len(p) for p in parts])
        if best_key is None or key < best_key:
            best_key, best = key, parts
    if best is not None and -best_key[0] > _freq(vocab, word):
        return best
    return [word]


def split_sentence(sentence, vocab, min_part_len=3, max_parts=2):
    out = []
    for w in sentence:
        out.extend(compound_split(w, vocab, min_part_len, max_parts))
    return out


# -- file formats ------------------------------------------------------------

def write_extract(extracted: Iterable[ExtractedPhrase], path):
    with open(path, "w", encoding="utf-8") as fh:
        for x in extracted:
            pp = x.pair
            al = " ".join(f"{i}-{j}" for i, j in pp.alignment)
            fh.write(f"{' '.join(pp.source_tokens)} ||| {' '.join(pp.target_tokens)} ||| {al} "
                     f"||| {' '.join(x.msd)} ||| {' '.join(x.hier)}\n")


def read_extract(path) -> List[ExtractedPhrase]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            f, e, al, msd, hier = (x.strip() for x in line.rstrip("\n").split("|||"))
            links = tuple(tuple(int(v) for v in item.split("-")) for item in al.split())
            f, e = tuple(f.split()), tuple(e.split())
            pp = PhrasePair((0, len(f)), (0, len(e)), f, e, links)
            out.append(ExtractedPhrase(pp, tuple(msd.split()), tuple(hier.split())))
    return out


def write_phrase_table(table: PhraseTable, path):
    with open(path, "w", encoding="utf-8") as fh:
        for (f, e), x in sorted(table.entries.items()):
            fh.write(f"{' '.join(f)} ||| {' '.join(e)} ||| {x.phi_f_given_e!r} {x.lex_f_given_e!r} "
                     f"{x.phi_e_given_f!r} {x.lex_e_given_f!r}\n")


def read_phrase_table(path) -> PhraseTable:
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = [x.strip() for x in line.rstrip("\n").split("|||")]
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno}: malformed phrase-table line")
            phi_fe, lex_fe, phi_ef, lex_ef = (float(v) for v in parts[2].split())
            entries[(tuple(parts[0].split()), tuple(parts[1].split()))] = PhraseFeatures(
                phi_fe, phi_ef, lex_fe, lex_ef)
    return PhraseTable(entries)


def write_reordering_table(model: ReorderingModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        labels = " ".join(model.orientations)
        fh.write(f"# scheme={model.scheme} orientations={labels} directions=prev,next\n")
        for d, name in enumerate(DIRECTIONS):
            fh.write(f"# global_{name}=" + " ".join(repr(p) for p in model.global_dists[d]) + "\n")
        for (f, e), (prev, nxt) in sorted(model.table.items()):
            probs = " ".join(repr(p) for p in prev + nxt)
            fh.write(f"{' '.join(f)} ||| {' '.join(e)} ||| {probs}\n")


def read_reordering_table(path) -> ReorderingModel:
    scheme = None
    glob = [None, None]
    table = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# scheme="):
                scheme = parse_scheme(line.split()[1].split("=", 1)[1])
                continue
            if line.startswith("# global_"):
                name, values = line[len("# global_"):].split("=", 1)
                glob[DIRECTIONS.index(name)] = tuple(float(v) for v in values.split())
                continue
            if scheme is None:
                raise ValueError(f"{path}: missing '# scheme=' header")
            f, e, probs = (x.strip() for x in line.split("|||"))
            vals = tuple(float(v) for v in probs.split())
            k = len(ORIENTATIONS[scheme])
            if len(vals) != 2 * k:
                raise ValueError(f"{path}: expected {2 * k} probabilities, got {len(vals)}")
            table[(tuple(f.split()), tuple(e.split()))] = (vals[:k], vals[k:])
    if scheme is None:
        raise ValueError(f"{path}: missing '# scheme=' header")
    k = len(ORIENTATIONS[scheme])
    glob = [g if g is not None else (1.0 / k,) * k for g in glob]
    return ReorderingModel(scheme, table, tuple(glob))
