"""Automatic evaluation: BLEU, NIST, METEOR, TER and RIBES.

Hypotheses are token lists; references come as a list of alternatives per
hypothesis.  Corpus scores aggregate sufficient statistics before applying
the final formula, except RIBES which averages sentence scores.
"""

import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional

from .corpus import read_lines, stem

METRICS = ("bleu", "nist", "meteor", "ribes", "ter")
NIST_BETA = math.log(0.5) / math.log(1.5) ** 2


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check(hypotheses, references):
    if len(hypotheses) == 0:
        raise ValueError("no hypotheses to score")
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} reference sets")
    for refs in references:
        if len(refs) == 0:
            raise ValueError("every hypothesis needs at least one reference")


# -- BLEU -----------------------------------------------------------------

@dataclass
class NGramMatchStats:
    matches: List[int]
    totals: List[int]
    hyp_len: int
    ref_len: int

    def __add__(self, other):
        return NGramMatchStats([a + b for a, b in zip(self.matches, other.matches)],
                               [a + b for a, b in zip(self.totals, other.totals)],
                               self.hyp_len + other.hyp_len, self.ref_len + other.ref_len)


def _closest_ref_len(c, refs):
    return min((abs(len(r) - c), len(r)) for r in refs)[1]


def bleu_stats(hyp, refs, max_n=4) -> NGramMatchStats:
    matches, totals = [], []
    for n in range(1, max_n + 1):
        h = _ngrams(hyp, n)
        best = Counter()
        for r in refs:
            best |= _ngrams(r, n)
        matches.append(sum(min(c, best[g]) for g, c in h.items()))
        totals.append(max(len(hyp) - n + 1, 0))
    return NGramMatchStats(matches, totals, len(hyp), _closest_ref_len(len(hyp), refs))


@dataclass
class BleuResult:
    score: float
    precisions: List[float]
    brevity_penalty: float
    stats: NGramMatchStats


def corpus_bleu(hypotheses, references, max_n=4) -> BleuResult:
    """Corpus BLEU on a 0-100 scale; the reference length per sentence is
    the closest one, ties going to the shorter."""
    _check(hypotheses, references)
    stats = NGramMatchStats([0] * max_n, [0] * max_n, 0, 0)
    for hyp, refs in zip(hypotheses, references):
        stats = stats + bleu_stats(hyp, refs, max_n)
    precisions = [m / t if t else 0.0 for m, t in zip(stats.matches, stats.totals)]
    c, r = stats.hyp_len, stats.ref_len
    bp = 1.0 if c >= r else (math.exp(1 - r / c) if c else 0.0)
    if min(precisions) == 0.0:
        return BleuResult(0.0, precisions, bp, stats)
    score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuResult(score, precisions, bp, stats)


def bleu(hypotheses, references, max_n=4) -> float:
    return corpus_bleu(hypotheses, references, max_n).score


# -- NIST -----------------------------------------------------------------

def nist_info(references, max_n=5):
    """Information weight of every reference n-gram, from pooled counts."""
    counts = Counter()
    total = 0
    for refs in references:
        for r in refs:
            total += len(r)
            for n in range(1, max_n + 1):
                counts.update(_ngrams(r, n))
    info = {}
    for g, c in counts.items():
        denom = total if len(g) == 1 else counts[g[:-1]]
        info[g] = math.log2(denom / c)
    return info


def nist(hypotheses, references, max_n=5) -> float:
    _check(hypotheses, references)
    info = nist_info(references, max_n)
    gain = [0.0] * max_n
    totals = [0] * max_n
    c = 0
    r = 0.0
    for hyp, refs in zip(hypotheses, references):
        c += len(hyp)
        r += sum(len(x) for x in refs) / len(refs)
        for n in range(1, max_n + 1):
            h = _ngrams(hyp, n)
            best = Counter()
            for ref in refs:
                best |= _ngrams(ref, n)
            gain[n - 1] += sum(min(k, best[g]) * info[g] for g, k in h.items() if best[g])
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    score = sum(g / t for g, t in zip(gain, totals) if t)
    ratio = min(c / r, 1.0) if r else 1.0
    factor = math.exp(NIST_BETA * math.log(ratio) ** 2) if ratio > 0 else 0.0
    return score * factor


# -- METEOR ---------------------------------------------------------------

@dataclass
class MeteorStats:
    matches: int
    hyp_len: int
    ref_len: int
    chunks: int

    def __add__(self, other):
        return MeteorStats(self.matches + other.matches, self.hyp_len + other.hyp_len,
                           self.ref_len + other.ref_len, self.chunks + other.chunks)

    def score(self):
        m = self.matches
        if m == 0:
            return 0.0
        p, r = m / self.hyp_len, m / self.ref_len
        fmean = 10 * p * r / (r + 9 * p)
        penalty = 0.5 * (self.chunks / m) ** 3
        return 100.0 * fmean * (1 - penalty)


def count_chunks(alignment):
    """Runs of matches contiguous and in order on both sides."""
    chunks = 0
    prev = None
    for h, r in sorted(alignment):
        if prev is None or h != prev[0] + 1 or r != prev[1] + 1:
            chunks += 1
        prev = (h, r)
    return chunks


def _stage_align(hyp_keys, ref_keys, fixed, beam=1000):
    """Add a maximum one-to-one matching on equal keys to ``fixed``, choosing
    among maximum matchings the one with fewest chunks overall.

    Hypothesis positions are scanned left to right; a state records the
    reference positions used and the reference position matched at the
    previous hypothesis position.  Equal states are merged keeping fewer
    chunks, which makes the search exact while the beam is not exceeded.
    """
    fixed = dict(fixed)
    used_fixed = set(fixed.values())
    free_h = Counter(k for i, k in enumerate(hyp_keys) if i not in fixed)
    free_r = Counter(k for j, k in enumerate(ref_keys) if j not in used_fixed)
    need = {k: min(c, free_r[k]) for k, c in free_h.items() if free_r[k]}
    left = Counter()    # free hypothesis occurrences still ahead, per key
    for i, k in enumerate(hyp_keys):
        if i not in fixed:
            left[k] += 1
    # state: (used ref positions, matched so far per key, last ref) -> (chunks, links)
    states = {(frozenset(used_fixed), (), None): (0, ())}
    for i, key in enumerate(hyp_keys):
        nxt = {}

        def push(used, got, last, chunks, links):
            st = (used, got, last)
            cur = nxt.get(st)
            if cur is None or (chunks, links) < cur:
                nxt[st] = (chunks, links)

        if i not in fixed:
            left[key] -= 1
        for (used, got, last), (chunks, links) in states.items():
            if i in fixed:
                r = fixed[i]
                c = chunks + (0 if last is not None and r == last + 1 else 1)
                push(used, got, r, c, links)
                continue
            gotd = dict(got)
            have = gotd.get(key, 0)
            want = need.get(key, 0)
            # skipping is allowed only if the remaining occurrences can still reach the maximum
            if want - have <= left[key]:
                push(used, got, None, chunks, links)
            if have < want:
                gotd[key] = have + 1
                g2 = tuple(sorted(gotd.items()))
                for r, rk in enumerate(ref_keys):
                    if rk == key and r not in used:
                        c = chunks + (0 if last is not None and r == last + 1 else 1)
                        push(used | {r}, g2, r, c, links + ((i, r),))
        if len(nxt) > beam:
            items = sorted(nxt.items(), key=lambda kv: (kv[1][0], kv[1][1]))[:beam]
            nxt = dict(items)
        states = nxt
    best = min(states.values())
    out = dict(fixed)
    out.update(dict(best[1]))
    return out


def meteor_align(hyp, ref, stemmer=stem):
    """Exact matches first, then stem matches among what is left."""
    exact = _stage_align(hyp, ref, {})
    stemmed = _stage_align([stemmer(w) for w in hyp], [stemmer(w) for w in ref], exact)
    return sorted(stemmed.items())


def meteor_stats(hyp, ref, stemmer=stem) -> MeteorStats:
    links = meteor_align(hyp, ref, stemmer)
    return MeteorStats(len(links), len(hyp), len(ref), count_chunks(links))


def meteor(hypothesis, reference, stemmer=stem) -> float:
    return meteor_stats(hypothesis, reference, stemmer).score()


def corpus_meteor(hypotheses, references, stemmer=stem) -> float:
    """Aggregate matches, lengths and chunks; per sentence the reference
    giving the best sentence score is used."""
    _check(hypotheses, references)
    total = MeteorStats(0, 0, 0, 0)
    for hyp, refs in zip(hypotheses, references):
        best = max((meteor_stats(hyp, r, stemmer) for r in refs), key=lambda s: s.score())
        total = total + best
    return total.score()


# -- TER ------------------------------------------------------------------

def edit_distance(a, b):
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        for j in range(1, len(b) + 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1]))
        prev = cur
    return prev[-1]


def apply_shift(tokens, start, length, dest):
    """Move ``tokens[start:start+length]`` so it begins at index ``dest`` of
    the result."""
    block = tokens[start:start + length]
    rest = tokens[:start] + tokens[start + length:]
    return rest[:dest] + block + rest[dest:]


def _candidate_shifts(hyp, ref, max_block):
    for start in range(len(hyp)):
        for length in range(1, min(max_block, len(hyp) - start) + 1):
            block = hyp[start:start + length]
            if ref[start:start + length] == block:
                continue
            for dest in range(len(ref) - length + 1):
                if dest != start and ref[dest:dest + length] == block \
                        and dest <= len(hyp) - length:
                    yield start, length, dest


def ter_edits(hyp, ref, max_block=10):
    """(shifts, edit distance after shifting), found greedily."""
    hyp = list(hyp)
    ref = list(ref)
    shifts = 0
    dist = edit_distance(hyp, ref)
    while dist > 0:
        best = None
        for start, length, dest in _candidate_shifts(hyp, ref, max_block):
            cand = apply_shift(hyp, start, length, dest)
            gain = dist - edit_distance(cand, ref) - 1
            if gain > 0 and (best is None or gain > best[0]):
                best = (gain, cand)
        if best is None:
            break
        hyp = best[1]
        shifts += 1
        dist = edit_distance(hyp, ref)
    return shifts, dist


def ter(hypothesis, reference, max_block=10) -> float:
    if not reference:
        raise ValueError("TER needs a non-empty reference")
    shifts, dist = ter_edits(hypothesis, reference, max_block)
    return 100.0 * (shifts + dist) / len(reference)


def corpus_ter(hypotheses, references, max_block=10) -> float:
    """Total edits over total reference length; per sentence the reference
    with the lowest edit rate is used."""
    _check(hypotheses, references)
    edits = length = 0
    for hyp, refs in zip(hypotheses, references):
        options = []
        for r in refs:
            if not r:
                raise ValueError("TER needs non-empty references")
            e = sum(ter_edits(hyp, r, max_block))
            options.append((e / len(r), e, len(r)))
        _, e, n = min(options)
        edits += e
        length += n
    return 100.0 * edits / length


# -- RIBES ----------------------------------------------------------------

def _count_sub(seq, sub):
    n = len(sub)
    return sum(1 for i in range(len(seq) - n + 1) if seq[i:i + n] == sub)


def _find_sub(seq, sub):
    n = len(sub)
    for i in range(len(seq) - n + 1):
        if seq[i:i + n] == sub:
            return i
    return -1


def ribes_alignment(hyp, ref):
    """Reference positions of hypothesis words, in hypothesis order.

    Words unique on both sides align directly.  Otherwise growing right
    and then left contexts are tried until one occurs exactly once on both
    sides.  A reference position is used at most once.
    """
    hyp, ref = list(hyp), list(ref)
    positions = []
    used = set()
    for i, w in enumerate(hyp):
        if w not in ref:
            continue
        pos = -1
        if hyp.count(w) == 1 and ref.count(w) == 1:
            pos = ref.index(w)
        else:
            for window in range(1, max(i + 1, len(hyp) - i)):
                if i + window < len(hyp):
                    sub = hyp[i:i + window + 1]
                    if _count_sub(hyp, sub) == 1 and _count_sub(ref, sub) == 1:
                        pos = _find_sub(ref, sub)
                        break
                if i - window >= 0:
                    sub = hyp[i - window:i + 1]
                    if _count_sub(hyp, sub) == 1 and _count_sub(ref, sub) == 1:
                        pos = _find_sub(ref, sub) + window
                        break
        if pos >= 0 and pos not in used:
            used.add(pos)
            positions.append(pos)
    return positions


def kendall_nkt(positions):
    n = len(positions)
    concordant = sum(1 for a in range(n) for b in range(a + 1, n) if positions[a] < positions[b])
    return concordant / (n * (n - 1) / 2)


def spearman_nsr(positions):
    n = len(positions)
    ranks = {p: k for k, p in enumerate(sorted(positions))}
    d2 = sum((k - ranks[p]) ** 2 for k, p in enumerate(positions))
    rho = 1 - 6 * d2 / (n * (n * n - 1))
    return (rho + 1) / 2


def ribes(hypothesis, reference, alpha=0.25, beta=0.10, correlation="kendall") -> float:
    if not hypothesis or not reference:
        return 0.0
    positions = ribes_alignment(hypothesis, reference)
    if len(positions) < 2:
        return 0.0
    if correlation == "kendall":
        nkt = kendall_nkt(positions)
    elif correlation == "spearman":
        nkt = spearman_nsr(positions)
    else:
        raise ValueError(f"unknown correlation {correlation!r}")
    precision = len(positions) / len(hypothesis)
    bp = min(1.0, math.exp(1 - len(reference) / len(hypothesis)))
    return 100.0 * nkt * precision ** alpha * bp ** beta


def corpus_ribes(hypotheses, references, alpha=0.25, beta=0.10, correlation="kendall") -> float:
    _check(hypotheses, references)
    total = 0.0
    for hyp, refs in zip(hypotheses, references):
        total += max(ribes(hyp, r, alpha, beta, correlation) for r in refs)
    return total / len(hypotheses)


# -- report ---------------------------------------------------------------

@dataclass
class EvaluationReport:
    bleu: Optional[float] = None
    nist: Optional[float] = None
    meteor: Optional[float] = None
    ribes: Optional[float] = None
    ter: Optional[float] = None

    def values(self):
        return [getattr(self, m) for m in METRICS]

    def header(self):
        return "\t".join(m.upper() for m, v in zip(METRICS, self.values()) if v is not None)

    def row(self):
        return "\t".join(f"{v:.2f}" for v in self.values() if v is not None)

    def as_dict(self):
        return {m.upper(): v for m, v in zip(METRICS, self.values()) if v is not None}


def _lower(sentences, lowercase):
    return [[w.lower() for w in s] for s in sentences] if lowercase else [list(s) for s in sentences]


def evaluate_corpus(hypotheses, references, lowercase=True, metrics=METRICS) -> EvaluationReport:
    hyps = _lower(hypotheses, lowercase)
    refs = [_lower(r, lowercase) for r in references]
    _check(hyps, refs)
    report = EvaluationReport()
    funcs = {"bleu": bleu, "nist": nist, "meteor": corpus_meteor, "ribes": corpus_ribes,
             "ter": corpus_ter}
    for m in metrics:
        setattr(report, m, funcs[m](hyps, refs))
    return report


def evaluate(hyp_path, ref_paths, lowercase=True, metrics=METRICS) -> EvaluationReport:
    """Score a tokenized hypothesis file against one or more reference files."""
    if isinstance(ref_paths, (str, bytes)) or hasattr(ref_paths, "__fspath__"):
        ref_paths = [ref_paths]
    hyps = [line.split() for line in read_lines(hyp_path)]
    ref_sets = []
    for path in ref_paths:
        lines = read_lines(path)
        if len(lines) != len(hyps):
            raise ValueError(f"line count mismatch: {hyp_path} has {len(hyps)} lines, "
                             f"{path} has {len(lines)}")
        ref_sets.append([line.split() for line in lines])
    references = [list(rs) for rs in zip(*ref_sets)]
    return evaluate_corpus(hyps, references, lowercase, metrics)


def sentence_breakdown(hypotheses, references, lowercase=True):
    """Per-sentence rows of all five metrics."""
    rows = []
    for hyp, refs in zip(hypotheses, references):
        rows.append(evaluate_corpus([hyp], [refs], lowercase))
    return rows
