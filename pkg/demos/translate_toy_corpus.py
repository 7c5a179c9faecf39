"""
Training a phrase-based system on a toy corpus
==============================================

Builds a synthetic bilingual corpus whose adjectives swap places with
their nouns on the target side, then walks through every training step
by hand: word alignment, phrase extraction, scoring, a language model,
and decoding.  Run it with ``python demos/translate_toy_corpus.py``.
"""

from mtsmt import align, decode, lm, metrics, phrase, synthetic
from mtsmt.corpus import ParallelCorpus

corpus = synthetic.make_corpus(1500, seed=3)
train, held_out = ParallelCorpus(corpus.pairs[:1400]), corpus.pairs[1400:]
first = train.pairs[0]
print("first pair:", " ".join(first.source), "|||", " ".join(first.target))

# Word alignment: Model 1 in both directions, then grow-diag-final-and
result = align.align_corpus(train, "model1", "grow-diag-final-and")
print("alignment of the first pair:", result.links[0].to_pharaoh())

# Phrase pairs consistent with the alignment, with their reordering context
extracted = phrase.extract_corpus(train, result.links)
table = phrase.score_phrase_table(extracted, result.forward, result.backward)
reordering = phrase.estimate_reordering(extracted, phrase.MSD)
print(len(extracted), "extracted instances,", len(table.entries), "distinct phrase pairs")

# A trigram Kneser-Ney model over the target side
target_lm = lm.train(train.targets(), 3, "kn")

models = decode.Models(table, target_lm, reordering)
weights = decode.default_weights(phrase.MSD)
out = decode.decode_corpus([p.source for p in held_out], models, weights)
for pair, t in list(zip(held_out, out))[:3]:
    print("src:", " ".join(pair.source))
    print("hyp:", " ".join(t.output))
    print("ref:", " ".join(pair.target))

report = metrics.evaluate_corpus([t.output for t in out], [[p.target] for p in held_out])
print(report)
