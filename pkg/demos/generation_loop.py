"""
Collecting distinct sentences for one verb sense
================================================

A small n-gram model stands in for the LM.  The loop raises the seed until
it runs out, then the temperature, and keeps the lowest-surprisal sentences.
"""

from eventgen.grammar import event_grammar
from eventgen.lm import SamplerConfig, train_ngram
from eventgen.sampler import GenRequest, generate_unique

corpus = [
    "the dog chased the cat",
    "the boy hit the ball",
    "the girl hit the drum",
    "the storm hit the coast",
    "the car hit the wall",
    "the boy kicked the ball",
    "the man saw the dog",
    "the cat saw the boy",
]
lm = train_ngram(corpus, order=3, smoothing_k=0.05)

req = GenRequest(
    verb="hit", verb_past="hit", sense_gloss="strike",
    grammar=event_grammar("hit"),
    sampler=SamplerConfig(seed=0),
    n_unique=10, n_keep=4, max_seeds=20, max_temps=5,
)
res = generate_unique(req, lm)
print("attempts:", res.attempts, "distinct:", res.n_unique_found, "exhausted:", res.exhausted)
for s in res.sentences:
    print(f"{s.surprisal:7.3f}  seed {s.seed:3d}  T={s.temperature:.1f}  {s.text}")

# The noun slots accept any vocabulary word, so "saw" or "chased" can land
# there; surprisal ranks such sentences below the ones the corpus supports.
