"""Stack-based beam-search decoding over a log-linear model, and a grid tuner."""

import math
import random
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Tuple

from .lm import BOS, EOS, NGramModel
from .phrase import (DIRECTIONS, HIER_MSLR, ORIENTATIONS, PhraseFeatures, PhraseTable,
                     ReorderingModel, classify_orientation)

PHRASE_FEATURES = ("phi_f_e", "lex_f_e", "phi_e_f", "lex_e_f")
BASE_FEATURES = PHRASE_FEATURES + ("lm", "distortion", "word_penalty", "phrase_penalty", "oov")
GRID = (0.25, 0.5, 0.8, 1.0, 1.25, 2.0, 4.0)


def reordering_features(scheme):
    return tuple(f"reo_{d}_{o}" for d in DIRECTIONS for o in ORIENTATIONS[scheme])


class Weights(dict):
    """Feature name -> weight; missing features weigh 0."""

    def __missing__(self, key):
        return 0.0

    def dot(self, features: Dict[str, float]) -> float:
        return sum(self[k] * v for k, v in features.items() if self[k] != 0.0)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for k in sorted(self):
                fh.write(f"{k}\t{self[k]!r}\n")

    @classmethod
    def load(cls, path):
        w = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    name, value = line.split("\t")
                    w[name] = float(value)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: expected 'name<TAB>value'") from None
                if not math.isfinite(w[name]):
                    raise ValueError(f"{path}:{lineno}: weight must be finite")
        return w


def default_weights(scheme=None) -> Weights:
    w = Weights(phi_f_e=0.2, lex_f_e=0.2, phi_e_f=0.2, lex_e_f=0.2, lm=1.0, distortion=0.3,
                word_penalty=0.0, phrase_penalty=-0.2, oov=-10.0)
    for schema in ([scheme] if scheme else list(ORIENTATIONS)):
        for name in reordering_features(schema):
            w[name] = 0.3
    return w


@dataclass
class DecoderConfig:
    beam_size: int = 100
    distortion_limit: Optional[int] = 6     # None means unlimited
    max_phrase_len: int = 7
    recombine: bool = True

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.distortion_limit is not None and self.distortion_limit < 0:
            raise ValueError("distortion_limit must be >= 0")


@dataclass
class Models:
    table: PhraseTable
    lm: NGramModel
    reordering: Optional[ReorderingModel] = None


class AppliedPhrase(NamedTuple):
    source_span: Tuple[int, int]
    source: Tuple[str, ...]
    target: Tuple[str, ...]
    features: Optional[PhraseFeatures]     # None for an OOV copy

    @property
    def is_oov(self):
        return self.features is None


@dataclass
class Translation:
    output: List[str]
    derivation: List[AppliedPhrase]
    score: float
    fallback: bool = False


class _Covered:
    """Source positions as a container; -1 is the virtual sentence start."""
    __slots__ = ("mask",)

    def __init__(self, mask):
        self.mask = mask

    def __contains__(self, i):
        return i == -1 or (i >= 0 and (self.mask >> i) & 1 == 1)


# -- features -------------------------------------------------------------

def _phrase_local(ap: AppliedPhrase):
    """Features that depend on the phrase alone."""
    h = {"word_penalty": float(len(ap.target)), "phrase_penalty": 1.0}
    if ap.features is None:
        h["oov"] = 1.0
    else:
        f = ap.features
        h["phi_f_e"] = math.log(f.phi_f_given_e)
        h["lex_f_e"] = math.log(f.lex_f_given_e)
        h["phi_e_f"] = math.log(f.phi_e_given_f)
        h["lex_e_f"] = math.log(f.lex_e_given_f)
    return h


def _add(h, other):
    for k, v in other.items():
        h[k] = h.get(k, 0.0) + v


def _reorder_step(reordering, prev: Optional[AppliedPhrase], cur: Optional[AppliedPhrase],
                  n, covered_mask):
    """Orientation features for the transition prev -> cur.

    ``prev=None`` is the sentence start and ``cur=None`` the sentence end.
    The current phrase scores its orientation towards what came before; the
    previous phrase scores the next-orientation of ``cur``.  For hier_mslr the
    previous side merges the covered block; the next side is phrase based.
    """
    scheme = reordering.scheme
    h = {}
    pspan = prev.source_span if prev is not None else (-1, 0)
    cspan = cur.source_span if cur is not None else (n, n + 1)
    if cur is not None:
        covered = _Covered(covered_mask) if scheme == HIER_MSLR else None
        o = classify_orientation(pspan, cspan, scheme, covered)
        h[f"reo_prev_{o}"] = math.log(reordering.prob(cur.source, cur.target, "prev", o))
    if prev is not None:
        o = classify_orientation(pspan, cspan, scheme)
        key = f"reo_next_{o}"
        h[key] = h.get(key, 0.0) + math.log(reordering.prob(prev.source, prev.target, "next", o))
    return h


def feature_vector(derivation: List[AppliedPhrase], n, lm: NGramModel,
                   reordering: Optional[ReorderingModel] = None) -> Dict[str, float]:
    """Recompute every feature of a complete derivation from scratch."""
    h = {}
    output = []
    prev = None
    mask = 0
    for ap in derivation:
        _add(h, _phrase_local(ap))
        prev_end = prev.source_span[1] if prev is not None else 0
        h["distortion"] = h.get("distortion", 0.0) - abs(ap.source_span[0] - prev_end)
        if reordering is not None:
            _add(h, _reorder_step(reordering, prev, ap, n, mask))
        for i in range(*ap.source_span):
            mask |= 1 << i
        output.extend(ap.target)
        prev = ap
    if reordering is not None and prev is not None:
        _add(h, _reorder_step(reordering, prev, None, n, mask))
    h["lm"] = lm.sentence_logprob(output)
    return h


def score_derivation(derivation, n, models: Models, weights: Weights) -> float:
    return weights.dot(feature_vector(derivation, n, models.lm, models.reordering))


# -- search ---------------------------------------------------------------

class _Hyp:
    __slots__ = ("coverage", "count", "tail", "last", "score", "future", "output", "parent",
                 "phrase")

    def __init__(self, coverage, count, tail, last, score, future, output, parent, phrase):
        self.coverage = coverage
        self.count = count
        self.tail = tail
        self.last = last
        self.score = score
        self.future = future
        self.output = output
        self.parent = parent
        self.phrase = phrase

    def derivation_key(self):
        return tuple(self.derivation())

    def derivation(self):
        out = []
        h = self
        while h.parent is not None:
            out.append(h.phrase)
            h = h.parent
        return out[::-1]


def translation_options(sentence, table: PhraseTable, max_phrase_len=7):
    """Applicable phrases per source span, plus OOV copies for words no
    option covers."""
    n = len(sentence)
    options = {}
    covered = [False] * n
    for i in range(n):
        for j in range(i + 1, min(n, i + max_phrase_len) + 1):
            src = tuple(sentence[i:j])
            opts = table.options(src)
            if opts:
                options[(i, j)] = [AppliedPhrase((i, j), src, e, feats) for e, feats in opts]
                for k in range(i, j):
                    covered[k] = True
    for i in range(n):
        if not covered[i]:
            options[(i, i + 1)] = [AppliedPhrase((i, i + 1), (sentence[i],), (sentence[i],), None)]
    return options


def _future_costs(n, options, lm, weights):
    """Best achievable score per span, ignoring ordering and context."""
    span_best = [[-math.inf] * (n + 1) for _ in range(n + 1)]
    for (i, j), opts in options.items():
        for ap in opts:
            h = _phrase_local(ap)
            h["lm"] = sum(lm.logprob(w) for w in ap.target)
            span_best[i][j] = max(span_best[i][j], weights.dot(h))
    fc = [[-math.inf] * (n + 1) for _ in range(n + 1)]
    for length in range(1, n + 1):
        for i in range(n - length + 1):
            j = i + length
            best = span_best[i][j]
            for k in range(i + 1, j):
                best = max(best, fc[i][k] + fc[k][j])
            fc[i][j] = best
    return fc


def _gap_cost(coverage, n, fc):
    total = 0.0
    i = 0
    while i < n:
        if (coverage >> i) & 1:
            i += 1
            continue
        j = i
        while j < n and not (coverage >> j) & 1:
            j += 1
        total += fc[i][j]
        i = j
    return total


def _better(a_score, a_out, b_score, b_out):
    return a_score > b_score or (a_score == b_score and a_out < b_out)


def decode(sentence, table: PhraseTable, lm: NGramModel, reordering: Optional[ReorderingModel],
           weights: Weights, config: Optional[DecoderConfig] = None) -> Translation:
    """Translate one tokenized sentence.

    Stacks are indexed by the number of covered source words.  Expansions
    must start within ``distortion_limit`` of the end of the previous span.
    Each stack keeps the ``beam_size`` best hypotheses by score plus future
    cost; equal scores are ordered by output tokens.
    """
    config = config or DecoderConfig()
    sentence = list(sentence)
    n = len(sentence)
    if n == 0:
        raise ValueError("cannot decode an empty sentence")
    options = translation_options(sentence, table, config.max_phrase_len)
    fc = _future_costs(n, options, lm, weights)
    by_start = {}
    for (i, j), opts in sorted(options.items()):
        by_start.setdefault(i, []).extend(opts)
    state_len = max(lm.order - 1, 0)
    tail0 = (BOS,)[-state_len:] if state_len else ()
    root = _Hyp(0, 0, tail0, None, 0.0, fc[0][n], (), None, None)
    stacks = [dict() for _ in range(n + 1)]
    stacks[0][None] = root
    full = (1 << n) - 1
    limit = config.distortion_limit
    w_dist = weights["distortion"]
    w_lm = weights["lm"]
    local = {ap: weights.dot(_phrase_local(ap)) for opts in options.values() for ap in opts}
    lm_memo, reo_memo, gap_memo = {}, {}, {}

    def lm_cost(tail, target):
        total = 0.0
        hist = tail
        for w in target:
            key = (w, hist)
            lp = lm_memo.get(key)
            if lp is None:
                lp = lm_memo[key] = lm.logprob(w, hist)
            total += lp
            hist = (hist + (w,))[-state_len:] if state_len else ()
        return total, hist

    def reo_cost(prev, ap, coverage):
        key = (prev, ap, coverage if hier else None)
        v = reo_memo.get(key)
        if v is None:
            v = reo_memo[key] = weights.dot(_reorder_step(reordering, prev, ap, n, coverage))
        return v

    def gap_cost(coverage):
        v = gap_memo.get(coverage)
        if v is None:
            v = gap_memo[coverage] = _gap_cost(coverage, n, fc)
        return v

    hier = reordering is not None and reordering.scheme == HIER_MSLR
    for size in range(n):
        hyps = sorted(stacks[size].values(), key=lambda h: (-(h.score + h.future), h.output))
        for hyp in hyps[:config.beam_size]:
            prev_end = hyp.last.source_span[1] if hyp.last is not None else 0
            for i, opts in by_start.items():
                jump = abs(i - prev_end)
                if limit is not None and jump > limit:
                    continue
                for ap in opts:
                    s, e = ap.source_span
                    span_mask = ((1 << (e - s)) - 1) << s
                    if hyp.coverage & span_mask:
                        continue
                    lm_score, tail = lm_cost(hyp.tail, ap.target)
                    score = hyp.score + local[ap] + w_lm * lm_score - w_dist * jump
                    if reordering is not None:
                        score += reo_cost(hyp.last, ap, hyp.coverage)
                    coverage = hyp.coverage | span_mask
                    output = hyp.output + ap.target
                    if config.recombine:
                        if reordering is not None:
                            key = (coverage, tail, ap.source_span, ap.source, ap.target)
                        else:
                            key = (coverage, tail, e)
                    else:
                        key = (coverage, output, hyp.derivation_key() + (ap,))
                    stack = stacks[size + e - s]
                    old = stack.get(key)
                    if old is None or _better(score, output, old.score, old.output):
                        stack[key] = _Hyp(coverage, size + e - s, tail, ap, score,
                                          gap_cost(coverage), output, hyp, ap)

    best, best_score = None, -math.inf
    for hyp in stacks[n].values():
        assert hyp.coverage == full
        final = {"lm": lm.logprob(EOS, hyp.tail)}
        if reordering is not None:
            _add(final, _reorder_step(reordering, hyp.last, None, n, hyp.coverage))
        score = hyp.score + weights.dot(final)
        if best is None or _better(score, hyp.output, best_score, best.output):
            best, best_score = hyp, score
    if best is None:
        deriv = [AppliedPhrase((i, i + 1), (w,), (w,), None) for i, w in enumerate(sentence)]
        models = Models(table, lm, reordering)
        return Translation(list(sentence), deriv, score_derivation(deriv, n, models, weights), True)
    return Translation(list(best.output), best.derivation(), best_score)


def decode_corpus(sentences, models: Models, weights: Weights, config=None) -> List[Translation]:
    return [decode(s, models.table, models.lm, models.reordering, weights, config)
            for s in sentences]


def write_trace(translation: Translation, n, models: Models, fh):
    """One ``span ||| phrase ||| feature breakdown`` line per step."""
    prev, mask = None, 0
    for ap in translation.derivation:
        h = _phrase_local(ap)
        prev_end = prev.source_span[1] if prev is not None else 0
        h["distortion"] = -abs(ap.source_span[0] - prev_end)
        if models.reordering is not None:
            _add(h, _reorder_step(models.reordering, prev, ap, n, mask))
        for i in range(*ap.source_span):
            mask |= 1 << i
        feats = " ".join(f"{k}={v:.6g}" for k, v in sorted(h.items()))
        fh.write(f"{ap.source_span[0]}-{ap.source_span[1]} ||| {' '.join(ap.source)} -> "
                 f"{' '.join(ap.target)} ||| {feats}\n")
        prev = ap
    fh.write("\n")


# -- tuning ---------------------------------------------------------------

def tune_weights(dev, models: Models, initial: Weights, metric=None, restarts=8, iterations=30,
                 seed=0, config=None, grid=GRID):
    """Coordinate ascent on dev-set corpus BLEU.

    Each round visits features in sorted order and tries every grid
    multiplier of the current weight (a zero weight is scaled from 1, and
    0 stays a candidate).  A round without improvement ends a run.  Runs
    start from ``initial`` and from ``restarts`` seeded perturbations of it.
    Only strict improvements are accepted, so the result is never worse
    on dev than ``initial``.
    """
    from .metrics import corpus_bleu

    metric = metric or (lambda hyps, refs: corpus_bleu(hyps, refs).score)
    sources = [p.source for p in dev]
    refs = [[p.target] for p in dev]
    cache = {}

    def evaluate(w):
        key = tuple(sorted(w.items()))
        if key not in cache:
            hyps = [t.output for t in decode_corpus(sources, models, w, config)]
            cache[key] = metric(hyps, refs)
        return cache[key]

    rng = random.Random(seed)
    names = sorted(set(initial) | set(BASE_FEATURES))
    if models.reordering is not None:
        names = sorted(set(names) | set(reordering_features(models.reordering.scheme)))
    starts = [Weights(initial)]
    for _ in range(restarts):
        starts.append(Weights({k: initial[k] * rng.uniform(0.5, 2.0) for k in names}))

    best_w, best_score = Weights(initial), evaluate(initial)
    for start in starts:
        cur = Weights(start)
        cur_score = evaluate(cur)
        for _ in range(iterations):
            improved = False
            for name in names:
                base = cur[name] if cur[name] != 0.0 else 1.0
                candidates = [base * g for g in grid]
                if cur[name] == 0.0:
                    candidates.insert(0, 0.0)
                for value in candidates:
                    if value == cur[name]:
                        continue
                    trial = Weights(cur)
                    trial[name] = value
                    score = evaluate(trial)
                    if score > cur_score:
                        cur, cur_score, improved = trial, score, True
            if not improved:
                break
        if cur_score > best_score:
            best_w, best_score = cur, cur_score
    return best_w
