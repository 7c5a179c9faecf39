"""Word alignment: IBM Model 1, a diagonal-prior Model 2 in the style of
fast_align, Viterbi link extraction, and alignment symmetrization.

Throughout, a lexical table holds ``t[cond][gen]``: the probability of
generating word ``gen`` from conditioning word ``cond`` (or from NULL).
The *forward* model generates source words from target words, so each
source word is linked to at most one target word; the *backward* model is
trained on the swapped corpus.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import List, Optional

from .corpus import ParallelCorpus, SentencePair, stem

log = logging.getLogger(__name__)

NULL = "<null>"
FLOOR = 1e-12

HEURISTICS = ("intersection", "union", "grow", "grow-diag", "grow-diag-final",
              "grow-diag-final-and")

_N4 = ((-1, 0), (0, -1), (1, 0), (0, 1))
_N8 = _N4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class AlignmentLinks:
    links: frozenset
    source_len: int
    target_len: int

    def __post_init__(self):
        object.__setattr__(self, "links", frozenset(self.links))
        for i, j in self.links:
            if not (0 <= i < self.source_len and 0 <= j < self.target_len):
                raise AlignmentError(
                    f"link {i}-{j} outside a {self.source_len}x{self.target_len} pair")

    def __iter__(self):
        return iter(sorted(self.links))

    def __len__(self):
        return len(self.links)

    def to_pharaoh(self):
        return " ".join(f"{i}-{j}" for i, j in sorted(self.links))

    @classmethod
    def from_pharaoh(cls, line, source_len, target_len):
        links = set()
        for item in line.split():
            i, j = item.split("-")
            links.add((int(i), int(j)))
        return cls(frozenset(links), source_len, target_len)


class LexicalTable:
    """Conditional word translation probabilities ``t(gen | cond)``."""

    def __init__(self, t=None):
        self.t = t if t is not None else {}
        self.log_likelihoods: List[float] = []

    def prob(self, gen, cond, floor=FLOOR):
        p = self.t.get(cond, {}).get(gen, 0.0)
        return p if p > floor else floor

    def row_sums(self):
        return {cond: sum(row.values()) for cond, row in self.t.items()}

    def __contains__(self, cond):
        return cond in self.t


@dataclass
class FastAlignParams:
    lex: LexicalTable
    tension: float = 4.0
    p_null: float = 0.08
    log_likelihoods: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.tension <= 0:
            raise ValueError("tension must be positive")
        if not 0.0 <= self.p_null < 1.0:
            raise ValueError("p_null must lie in [0, 1)")


def _bitext(corpus):
    """(generated, conditioning) sentence pairs for the forward model."""
    if isinstance(corpus, ParallelCorpus):
        return [(p.source, p.target) for p in corpus]
    return list(corpus)


def _uniform_table(bitext):
    cooc = defaultdict(set)
    for gen, cond in bitext:
        gen_types = set(gen)
        cooc[NULL] |= gen_types
        for e in set(cond):
            cooc[e] |= gen_types
    return {e: dict.fromkeys(fs, 1.0 / len(fs)) for e, fs in cooc.items()}


def _normalize(counts):
    table = {}
    for cond, row in counts.items():
        z = sum(row.values())
        table[cond] = {f: c / z for f, c in row.items()}
    return table


def model1_expected_counts(table: LexicalTable, bitext):
    """One Model 1 E-step: expected link counts and corpus log-likelihood.

    The alignment prior is uniform over the conditioning words plus NULL, so
    the likelihood of a generated word is ``sum_i t(f | e_i) / (m + 1)``.
    """
    t = table.t
    counts = defaultdict(lambda: defaultdict(float))
    ll = 0.0
    for gen, cond in bitext:
        conds = [NULL] + list(cond)
        rows = [t.get(c, {}) for c in conds]
        norm = len(conds)
        for f in gen:
            probs = [row.get(f, 0.0) for row in rows]
            z = sum(probs)
            if z <= 0.0:
                ll += math.log(FLOOR)
                continue
            ll += math.log(z / norm)
            for c, p in zip(conds, probs):
                if p > 0.0:
                    counts[c][f] += p / z
    return counts, ll


def train_model1(corpus, iterations=5) -> LexicalTable:
    """Model 1 EM generating source words from target words.

    ``corpus`` may be a :class:`ParallelCorpus` or a list of
    ``(generated, conditioning)`` token lists.  The log-likelihood before each
    update and after the last one is kept on ``table.log_likelihoods``; a
    decrease is a bug and raises.
    """
    bitext = _bitext(corpus)
    if not bitext:
        raise ValueError("cannot train on an empty corpus")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    table = LexicalTable(_uniform_table(bitext))
    lls = []
    for _ in range(iterations):
        counts, ll = model1_expected_counts(table, bitext)
        lls.append(ll)
        table = LexicalTable(_normalize(counts))
    lls.append(model1_expected_counts(table, bitext)[1])
    for a, b in zip(lls, lls[1:]):
        if b < a - 1e-9 * (1.0 + abs(a)):
            raise AlignmentError(f"EM log-likelihood decreased: {a} -> {b}")
    table.log_likelihoods = lls
    return table


# -- fast_align style Model 2 ---------------------------------------------

def alignment_prior(j, n, m, tension, p_null):
    """Prior over the link of generated word ``j`` (1-based, of ``n``) to
    NULL (index 0 of the result) or conditioning word ``i = 1..m``."""
    weights = [math.exp(-tension * abs(i / m - j / n)) for i in range(1, m + 1)]
    z = sum(weights)
    return [p_null] + [(1.0 - p_null) * w / z for w in weights]


def _expected_h(j, n, m, tension):
    hs = [-abs(i / m - j / n) for i in range(1, m + 1)]
    ws = [math.exp(tension * h) for h in hs]
    z = sum(ws)
    return sum(w * h for w, h in zip(ws, hs)) / z


def fast_align_expected_counts(params: FastAlignParams, bitext):
    """E-step under the diagonal prior.

    Returns ``(counts, log_likelihood, feature_stats)`` where feature_stats
    maps ``(j, n, m)`` to ``[posterior mass on real words, sum of q * h]``
    for the tension gradient.
    """
    t = params.lex.t
    counts = defaultdict(lambda: defaultdict(float))
    stats = defaultdict(lambda: [0.0, 0.0])
    ll = 0.0
    for gen, cond in bitext:
        n, m = len(gen), len(cond)
        if m == 0:
            continue
        rows = [t.get(e, {}) for e in cond]
        null_row = t.get(NULL, {})
        for j, f in enumerate(gen, 1):
            prior = alignment_prior(j, n, m, params.tension, params.p_null)
            probs = [prior[0] * null_row.get(f, 0.0)]
            probs += [prior[i + 1] * rows[i].get(f, 0.0) for i in range(m)]
            z = sum(probs)
            if z <= 0.0:
                ll += math.log(FLOOR)
                continue
            ll += math.log(z)
            if probs[0] > 0.0:
                counts[NULL][f] += probs[0] / z
            st = stats[(j, n, m)]
            for i in range(m):
                q = probs[i + 1] / z
                if q > 0.0:
                    counts[cond[i]][f] += q
                    st[0] += q
                    st[1] += q * -abs((i + 1) / m - j / n)
    return counts, ll, stats


def _optimize_tension(tension, stats, steps=8, rate=20.0):
    mass = sum(s[0] for s in stats.values())
    if mass <= 0.0:
        return tension
    emp = sum(s[1] for s in stats.values())
    for _ in range(steps):
        mod = sum(s[0] * _expected_h(j, n, m, tension) for (j, n, m), s in stats.items())
        tension += rate * (emp - mod) / mass
        tension = min(max(tension, 0.1), 14.0)
    return tension


def train_fast_align(corpus, iterations=5, optimize_tension=False, tension=4.0,
                     p_null=0.08) -> FastAlignParams:
    bitext = _bitext(corpus)
    if not bitext:
        raise ValueError("cannot train on an empty corpus")
    params = FastAlignParams(LexicalTable(_uniform_table(bitext)), tension, p_null)
    lls = []
    for _ in range(iterations):
        counts, ll, stats = fast_align_expected_counts(params, bitext)
        lls.append(ll)
        params.lex = LexicalTable(_normalize(counts))
        if optimize_tension:
            params.tension = _optimize_tension(params.tension, stats)
    lls.append(fast_align_expected_counts(params, bitext)[1])
    params.log_likelihoods = lls
    return params


# -- Viterbi ---------------------------------------------------------------

def viterbi_align(params, pair: SentencePair, direction="forward", floor=FLOOR) -> AlignmentLinks:
    """Link every generated word to its best conditioning word, or to nothing
    when NULL scores strictly higher.  Ties go to the smaller index."""
    if direction == "forward":
        gen, cond = pair.source, pair.target
    elif direction == "backward":
        gen, cond = pair.target, pair.source
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if isinstance(params, FastAlignParams):
        lex = params.lex
    else:
        lex = params
    n, m = len(gen), len(cond)
    links = set()
    for j, f in enumerate(gen):
        if m == 0:
            break
        if isinstance(params, FastAlignParams):
            prior = alignment_prior(j + 1, n, m, params.tension, params.p_null)
        else:
            prior = None
        best_i, best = -1, -1.0
        for i, e in enumerate(cond):
            s = lex.prob(f, e, floor)
            if prior is not None:
                s *= prior[i + 1]
            if s > best:
                best_i, best = i, s
        null_score = lex.prob(f, NULL, floor)
        if prior is not None:
            null_score *= prior[0]
        if null_score > best:
            continue
        links.add((j, best_i) if direction == "forward" else (best_i, j))
    return AlignmentLinks(frozenset(links), len(pair.source), len(pair.target))


# -- symmetrization --------------------------------------------------------

def parse_heuristic(name: str) -> str:
    canonical = name.replace("_", "-")
    if canonical not in HEURISTICS:
        raise ValueError(f"unknown symmetrization heuristic {name!r}; "
                         f"expected one of {', '.join(HEURISTICS)}")
    return canonical


def symmetrize(forward: AlignmentLinks, backward: AlignmentLinks, heuristic="grow-diag-final-and"):
    """Combine two directional alignments.

    Growing starts from the intersection and repeatedly sweeps the aligned
    points in row-major (source, target) order.  Each visited point adds
    those of its union neighbours (4-neighbourhood for ``grow``, 8 for the
    ``grow-diag`` family, in a fixed order) that have at least one word still
    unaligned.  Points added during a sweep are visited later in the same
    sweep if they come after the current position.
    The ``final`` pass then adds every remaining union point whose source or
    target word (``final``), or both words (``final-and``), were left
    unaligned by growing.
    """
    heuristic = parse_heuristic(heuristic)
    if (forward.source_len, forward.target_len) != (backward.source_len, backward.target_len):
        raise AlignmentError(
            f"dimension mismatch: {forward.source_len}x{forward.target_len} vs "
            f"{backward.source_len}x{backward.target_len}")
    ls, lt = forward.source_len, forward.target_len
    inter = forward.links & backward.links
    union = forward.links | backward.links
    if heuristic == "intersection":
        return AlignmentLinks(inter, ls, lt)
    if heuristic == "union":
        return AlignmentLinks(union, ls, lt)

    current = set(inter)
    src_done = [False] * ls
    tgt_done = [False] * lt
    for i, j in current:
        src_done[i] = tgt_done[j] = True
    points = sorted(union)
    neighbours = _N4 if heuristic == "grow" else _N8

    grew = True
    while grew:
        grew = False
        for i, j in points:
            if (i, j) not in current:
                continue
            for di, dj in neighbours:
                p = (i + di, j + dj)
                if p in union and p not in current and (not src_done[p[0]] or not tgt_done[p[1]]):
                    current.add(p)
                    src_done[p[0]] = tgt_done[p[1]] = True
                    grew = True
    pending = sorted(union - current)

    if heuristic.endswith("final") or heuristic.endswith("final-and"):
        both = heuristic.endswith("-and")
        # alignedness is read from the grown alignment, not updated mid-pass,
        # which keeps final-and a subset of final
        for i, j in pending:
            free_s, free_t = not src_done[i], not tgt_done[j]
            if (free_s and free_t) if both else (free_s or free_t):
                current.add((i, j))
    return AlignmentLinks(frozenset(current), ls, lt)


# -- corpus pipeline -------------------------------------------------------

@dataclass
class AlignmentResult:
    links: List[AlignmentLinks]
    forward: object
    backward: object
    stem_k: Optional[int] = None

    def key(self, word):
        """Map a surface word to the form the lexical tables were trained on."""
        return stem(word, self.stem_k) if self.stem_k else word


def _stemmed(corpus, k):
    pairs = [SentencePair([stem(w, k) for w in p.source], [stem(w, k) for w in p.target],
                          p.line_number) for p in corpus]
    return ParallelCorpus(pairs, corpus.source_lang, corpus.target_lang)


def align_corpus(corpus: ParallelCorpus, model_kind="model1", heuristic="grow-diag-final-and",
                 stem_k=None, iterations=5, optimize_tension=False) -> AlignmentResult:
    """Train both directions, Viterbi-align every pair, and symmetrize.

    With ``stem_k`` both sides are truncated to their first ``stem_k``
    characters for training and alignment; since stemming maps tokens one to
    one, links index the original surface tokens.
    """
    heuristic = parse_heuristic(heuristic)
    work = _stemmed(corpus, stem_k) if stem_k else corpus
    if model_kind == "model1":
        fwd = train_model1(work, iterations)
        bwd = train_model1(work.swapped(), iterations)
    elif model_kind in ("fast_align", "fast-align"):
        fwd = train_fast_align(work, iterations, optimize_tension)
        bwd = train_fast_align(work.swapped(), iterations, optimize_tension)
    else:
        raise ValueError(f"unknown alignment model {model_kind!r}")
    links = []
    for pair in work:
        f = viterbi_align(fwd, pair, "forward")
        b = viterbi_align(bwd, pair, "backward")
        links.append(symmetrize(f, b, heuristic))
    return AlignmentResult(links, fwd, bwd, stem_k)


# -- file formats ----------------------------------------------------------

def write_lexical_table(table: LexicalTable, path, header=None):
    with open(path, "w", encoding="utf-8") as fh:
        for line in header or ():
            fh.write(f"# {line}\n")
        for cond in sorted(table.t):
            for gen, p in sorted(table.t[cond].items()):
                fh.write(f"{cond}\t{gen}\t{p!r}\n")


def read_lexical_table(path):
    t = defaultdict(dict)
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                meta[key] = value
                continue
            if not line:
                continue
            cond, gen, p = line.split("\t")
            t[cond][gen] = float(p)
    return LexicalTable(dict(t)), meta


def save_params(params, path):
    if isinstance(params, FastAlignParams):
        write_lexical_table(params.lex, path, [f"kind=fast_align", f"tension={params.tension!r}",
                                               f"p_null={params.p_null!r}"])
    else:
        write_lexical_table(params, path, ["kind=model1"])


def load_params(path):
    table, meta = read_lexical_table(path)
    if meta.get("kind") == "fast_align":
        return FastAlignParams(table, float(meta["tension"]), float(meta["p_null"]))
    return table


def write_pharaoh(alignments, path):
    with open(path, "w", encoding="utf-8") as fh:
        for a in alignments:
            fh.write(a.to_pharaoh() + "\n")


def read_pharaoh(path, corpus: ParallelCorpus):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) != len(corpus):
        raise AlignmentError(f"{path} has {len(lines)} lines for {len(corpus)} sentence pairs")
    return [AlignmentLinks.from_pharaoh(line, len(p.source), len(p.target))
            for line, p in zip(lines, corpus)]
