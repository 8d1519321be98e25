"""
From ratings to survey lists
============================

Synthetic ratings go through per-rater z-scoring, calibration selection,
list assembly and pair construction.
"""

import numpy as np

from eventgen.stimulus import (
    RatingRecord,
    calibration_audit,
    make_lists,
    make_pairs,
    rank_by_zsum,
    select_calibration,
    zscore_by_participant,
)

rng = np.random.default_rng(0)

# 124 hand-written sentences, four per verb, half natural and half not;
# raters differ in how much of the scale they use
truth = np.concatenate([rng.normal(0.3, 0.08, 62), rng.normal(0.75, 0.08, 62)])
ratings = []
for r in range(20):
    lo, span = rng.uniform(0, 0.2), rng.uniform(0.5, 0.8)
    for i in rng.choice(124, 60, replace=False):
        x = np.clip(lo + span * truth[i] + rng.normal(0, 0.05), 0, 1)
        ratings.append(RatingRecord(f"r{r}", f"s{i:03d}", float(x), f"v{i % 31}"))

scores = zscore_by_participant(ratings)
cal = select_calibration(scores, k=50)
audit = calibration_audit(scores, cal)
print("selected", len(cal.selected), "shortfall", cal.shortfall)
print({k: round(v, 3) if isinstance(v, float) else v for k, v in audit.items()})

# 367 targets into lists of 89 with fewer than 60 targets each
lists = make_lists([f"t{i}" for i in range(367)], cal, 89, 59, seed=0)
for sl in lists:
    print(f"list {sl.list_number}: {sl.target_count} targets, {sl.total} items")

# pairs: a verb with three senses gives 3 same-sense and 3 different-sense pairs
rows = [("hit", f"hit.0{s}", f"hit{s}_{j}", float(rng.normal()), float(rng.normal()))
        for s in (1, 2, 3) for j in range(4)]
for p in make_pairs(rank_by_zsum(rows)):
    print(p.pair_type, p.sentence_a, p.sentence_b)
