"""
Polysemy features and prompt choice
===================================

Yes/no log-odds from eight prompts feed a nested cross-validated SVM.  Then
candidate gloss prompts are scored by how closely their sense counts match
a reference lexicon.
"""

import numpy as np

from eventgen.sense import (
    PolysemyFeatures,
    PromptCandidate,
    fit_polysemy_classifier,
    score_prompts,
    select_prompt,
)

rng = np.random.default_rng(1)

# monosemous verbs lean towards "yes" on the one-sense prompts
n = 40
mono = rng.random(n) < 0.5
signs = np.array([1, 1, 1, 1, -1, -1, -1, -1])
X = np.where(mono, 1.0, -1.0)[:, None] * signs + rng.normal(0, 0.8, (n, 8))
feats = [PolysemyFeatures(f"verb{i}", tuple(x)) for i, x in enumerate(X)]

clf, report = fit_polysemy_classifier(feats, list(mono), seed=0)
print("outer accuracy", round(report.outer_accuracy, 3), report.fold_accuracies)
print("refit", report.refit_kernel, report.refit_C)

_, shuffled = fit_polysemy_classifier(feats, list(rng.permutation(mono)), seed=0)
print("with shuffled labels", round(shuffled.outer_accuracy, 3))

# three prompts; counts are what each produced for 15 polysemous verbs
ref = {f"p{i}": int(rng.integers(2, 7)) for i in range(15)}
cands = [
    PromptCandidate("terse", "List the senses of {{VERB}}.", 0.7,
                    {v: max(1, c - 1) for v, c in ref.items()}),
    PromptCandidate("guided", "List the senses of {{VERB}}, one per line, as 1. 2. 3.", 0.8,
                    {v: c + (i % 5 == 0) for i, (v, c) in enumerate(ref.items())}),
    PromptCandidate("verbose", "Please list every distinct sense of {{VERB}} " * 3, 0.9,
                    {v: c + 2 for v, c in ref.items()}),
]
# the interval is a bootstrap 95% CI of the MAE gap to the best candidate
for c in score_prompts(cands, ref, bootstrap_B=1000, seed=0):
    print(f"{c.id:8s} MAE {c.mae:.2f}  gap CI [{c.ci_low:+.2f}, {c.ci_high:+.2f}]")
print("selected:", select_prompt(cands, ref).id)
