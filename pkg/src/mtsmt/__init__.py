"""Desk-scale phrase-based statistical machine translation.

Modules, in pipeline order: ``corpus`` (ingestion, cleaning, truecasing,
splits), ``lm`` (n-gram language models), ``align`` (IBM Model 1,
fast_align, symmetrization), ``phrase`` (extraction, scoring, reordering
models, compound splitting), ``decode`` (beam search and tuning),
``metrics`` (BLEU, NIST, METEOR, TER, RIBES) and ``harness`` (cached
experiment runs).  ``synthetic`` builds toy corpora with known structure.
"""

__version__ = "0.1.0"
