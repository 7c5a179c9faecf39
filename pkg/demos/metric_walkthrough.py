"""
Five evaluation metrics on small examples
=========================================

Scores a few hand-made hypotheses so the behaviour of each metric is easy
to see: BLEU's brevity penalty, TER's block shifts, and how RIBES reacts
to word order while the n-gram metrics barely notice.
"""

from mtsmt import metrics

ref = "it is a guide to action which ensures that".split()
short = "it is a guide to action".split()
print("BLEU for a correct but short hypothesis: %.2f" % metrics.bleu([short], [[ref]]))

# One shift fixes the order, so TER is a single edit over four words
print("TER  a c b d vs a b c d: %.2f" % metrics.ter("a c b d".split(), "a b c d".split()))

ordered = "the patient takes the tablet after the meal".split()
scrambled = "after the meal the patient takes the tablet".split()
for name, hyp in (("ordered", ordered), ("scrambled", scrambled)):
    rep = metrics.evaluate_corpus([hyp], [[ordered]])
    print(f"{name:9s}", "  ".join(f"{k}={v:.2f}" for k, v in rep.as_dict().items()))
