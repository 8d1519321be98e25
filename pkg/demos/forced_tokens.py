"""
Forced tokens under a clause grammar
====================================

The grammar ``the N hit the N`` leaves the LM free only at the two noun
slots.  Everywhere else the constraint has a single option, so the product
of LM and constraint puts all its mass there, whatever the LM prefers.
"""

from eventgen import earley
from eventgen.dist import EOS
from eventgen.grammar import event_grammar
from eventgen.lm import TableLM
from eventgen.sampler import constrained_dist, divergence_report, prepare_grammar
from eventgen.lm import SamplerConfig

# an LM that would rather stop, or say "hit" first
lm = TableLM({
    "": {"hit": 0.6, EOS: 0.3, "the": 0.1},
    "the": {"cat": 0.5, "dog": 0.3, EOS: 0.2},
    "cat": {"hit": 0.9, "the": 0.1},
    "dog": {"hit": 0.1, "the": 0.9},
    "hit": {"the": 1.0},
    "hit the": {"cat": 0.5, "dog": 0.5},
    "hit the cat": {EOS: 1.0},
    "hit the dog": {EOS: 1.0},
})
g = prepare_grammar(event_grammar("hit"), lm)

state = earley.init(g)
sentence = ["the", "cat", "hit", "the", "dog"]
for i, tok in enumerate(sentence):
    d = constrained_dist(lm, state, sentence[:i])
    shown = {t: round(p, 3) for t, p in d.items() if p > 0}
    print(f"position {i + 1}: {shown}")
    state = state.advance(tok)

# Local renormalization keeps cat and dog at 0.5 each for the subject, but
# among complete sentences the LM prefers "cat" nine to one, because "dog"
# rarely continues with "hit".  The exact gap between the two:
rep = divergence_report(lm, event_grammar("hit"), (), SamplerConfig.neutral())
print("total variation:", round(rep.tv, 6))
for s in sorted(rep.local):
    print(" ".join(s), round(rep.local[s], 3), round(rep.globl[s], 3))
