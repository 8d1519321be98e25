"""Experiment materials: rating normalization, calibration sets, lists, pairs."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ADMIT_TOL = 1e-12


@dataclass(frozen=True)
class RatingRecord:
    participant_id: str
    sentence_id: str
    rating: float
    verb: str = ""

    def __post_init__(self):
        if not 0.0 <= self.rating <= 1.0:
            raise ValueError(f"rating {self.rating} outside [0, 1]")


@dataclass(frozen=True)
class SentenceScore:
    sentence_id: str
    verb: str
    score: float
    n_raters: int

    def __post_init__(self):
        if self.n_raters < 1:
            raise ValueError("a score needs at least one rater")


def zscore_by_participant(
    ratings: Iterable[RatingRecord], verbs: Mapping[str, str] | None = None
) -> list[SentenceScore]:
    """Standardize each rater's ratings (population SD), then average per sentence.

    A rater whose ratings do not vary contributes z = 0 for every item.
    Sentences come out in order of first appearance.
    """
    by_participant: dict[str, list[RatingRecord]] = {}
    for r in ratings:
        by_participant.setdefault(r.participant_id, []).append(r)
    zs: dict[str, list[float]] = {}
    verb_of: dict[str, str] = {}
    for rs in by_participant.values():
        x = np.array([r.rating for r in rs])
        sd = x.std()
        z = (x - x.mean()) / sd if sd > 0 else np.zeros_like(x)
        for r, v in zip(rs, z):
            zs.setdefault(r.sentence_id, []).append(float(v))
            if r.verb:
                verb_of.setdefault(r.sentence_id, r.verb)
    verbs = verbs or {}
    return [
        SentenceScore(sid, verbs.get(sid, verb_of.get(sid, "")), math.fsum(v) / len(v), len(v))
        for sid, v in zs.items()
    ]


@dataclass(frozen=True)
class CalibrationSet:
    selected: tuple[str, ...]
    initial_block: tuple[str, ...]
    k: int
    shortfall: bool
    rejected: Mapping[str, str] = field(default_factory=dict)  # sentence_id -> reason

    @property
    def remainder(self) -> tuple[str, ...]:
        return self.selected[len(self.initial_block):]


def select_calibration(
    scores: Sequence[SentenceScore],
    k: int = 50,
    block_size: int = 8,
    min_gap_sd: float = 0.5,
    max_per_verb: int = 2,
) -> CalibrationSet:
    """Greedy calibration pick.

    Sentences are visited by distance of their score to the overall mean.
    One is kept unless it would push the running mean of the kept set away
    from the overall mean, or its verb already has ``max_per_verb`` kept
    sentences, or it lies within ``min_gap_sd`` standard deviations (of all
    scores) of an already kept sentence of the same verb.
    """
    if len(scores) < k:
        raise ValueError(f"need at least {k} scores, got {len(scores)}")
    x = np.array([s.score for s in scores])
    mu, sd = float(x.mean()), float(x.std())
    gap = min_gap_sd * sd
    order = sorted(range(len(scores)), key=lambda i: (abs(x[i] - mu), scores[i].sentence_id))
    chosen: list[int] = []
    total = 0.0
    kept_by_verb: dict[str, list[float]] = {}
    rejected = {}
    for i in order:
        if len(chosen) == k:
            break
        s = scores[i]
        same = kept_by_verb.get(s.verb, [])
        if len(same) >= max_per_verb:
            rejected[s.sentence_id] = "verb-limit"
            continue
        if any(abs(s.score - v) < gap for v in same):
            rejected[s.sentence_id] = "verb-gap"
            continue
        if chosen:
            m = total / len(chosen)
            # toward mu means the step x - m points the same way as mu - m
            if (s.score - m) * (mu - m) < -ADMIT_TOL:
                rejected[s.sentence_id] = "wrong-direction"
                continue
        chosen.append(i)
        total += s.score
        kept_by_verb.setdefault(s.verb, []).append(s.score)
    ids = tuple(scores[i].sentence_id for i in chosen)
    return CalibrationSet(ids, ids[:block_size], k, len(ids) < k, rejected)


def uniform_ks(values) -> float:
    """Kolmogorov-Smirnov distance from a uniform law over the values' own range."""
    srt = np.sort(np.asarray(values, float))
    lo, hi = srt[0], srt[-1]
    if hi <= lo:
        return 1.0
    u = (srt - lo) / (hi - lo)
    n = len(u)
    return float(max(np.max(np.arange(1, n + 1) / n - u), np.max(u - np.arange(n) / n)))


def calibration_audit(scores: Sequence[SentenceScore], cal: CalibrationSet, min_gap_sd=0.5) -> dict:
    """Recheck a calibration set after the fact.

    The mean gap and the uniformity (KS distance) of the selected scores are
    reported next to the same figures for the same-size prefix of the
    distance sort, alongside the per-verb limits.
    """
    by_id = {s.sentence_id: s for s in scores}
    x = np.array([s.score for s in scores])
    mu, sd = float(x.mean()), float(x.std())
    sel = np.array([by_id[i].score for i in cal.selected])
    order = sorted(scores, key=lambda s: (abs(s.score - mu), s.sentence_id))
    prefix = np.array([s.score for s in order[: len(sel)]])
    verbs: dict[str, list[float]] = {}
    for i in cal.selected:
        verbs.setdefault(by_id[i].verb, []).append(by_id[i].score)
    return {
        "n_selected": len(sel),
        "mean_gap": abs(float(sel.mean()) - mu),
        "prefix_mean_gap": abs(float(prefix.mean()) - mu),
        "max_per_verb": max(len(v) for v in verbs.values()),
        "min_pair_gap_sd": min(
            (abs(v[0] - v[1]) / sd for v in verbs.values() if len(v) == 2), default=math.inf
        ),
        "gap_ok": all(abs(v[0] - v[1]) >= min_gap_sd * sd for v in verbs.values() if len(v) == 2),
        "uniform_ks": uniform_ks(sel),
        "prefix_uniform_ks": uniform_ks(prefix),
        "initial_block_ok": cal.initial_block == cal.selected[: len(cal.initial_block)],
    }


@dataclass(frozen=True)
class ListParams:
    """Sizes for one survey type: list length, target cap, lead-in block, practice items."""

    list_total: int
    target_cap: int
    block_size: int
    n_practice: int

    @property
    def survey_length(self) -> int:
        return self.n_practice + self.block_size + self.list_total


RATING_LISTS = ListParams(list_total=89, target_cap=59, block_size=8, n_practice=3)
PAIR_LISTS = ListParams(list_total=62, target_cap=60, block_size=6, n_practice=2)


@dataclass(frozen=True)
class StimulusList:
    list_number: int
    items: tuple[str, ...]
    target_count: int
    calibration_positions: tuple[int, ...]

    @property
    def total(self) -> int:
        return len(self.items)

    @property
    def targets(self) -> tuple[str, ...]:
        cal = set(self.calibration_positions)
        return tuple(x for i, x in enumerate(self.items) if i not in cal)

    def to_json(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


def balanced_sizes(n: int, cap: int) -> list[int]:
    """``ceil(n / cap)`` chunk sizes that differ by at most one."""
    if n == 0:
        return []
    k = -(-n // cap)
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


def make_lists(
    targets: Sequence[str],
    calibration: CalibrationSet | Sequence[str],
    list_total: int = RATING_LISTS.list_total,
    target_cap: int = RATING_LISTS.target_cap,
    seed: int | np.random.Generator = 0,
    block_size: int | None = None,
    cycle: bool = True,
) -> list[StimulusList]:
    """Shuffle targets into balanced lists, then pad each with calibration items.

    Padding draws from the calibration items after the lead-in block, in
    their selection order, restarting from the front for every list.  Within
    a list the calibration items are interleaved at seeded random positions,
    and both sequences keep their own order.
    """
    if target_cap >= list_total:
        raise ValueError("target_cap must be below list_total")
    if len(set(targets)) != len(targets):
        raise ValueError("duplicate target ids")
    if isinstance(calibration, CalibrationSet):
        pool = list(calibration.selected[len(calibration.initial_block) if block_size is None else block_size:])
    else:
        pool = list(calibration)[block_size or 0:]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shuffled = [targets[i] for i in rng.permutation(len(targets))]
    out = []
    start = 0
    for number, size in enumerate(balanced_sizes(len(shuffled), target_cap), 1):
        chunk = shuffled[start:start + size]
        start += size
        need = list_total - size
        if need > len(pool) and not cycle:
            raise ValueError(f"list {number} needs {need} calibration items, only {len(pool)} available")
        if need and not pool:
            raise ValueError("no calibration items to pad with")
        pad = [pool[i % len(pool)] for i in range(need)]
        positions = np.sort(rng.choice(list_total, size=need, replace=False))
        items: list[str] = []
        t = iter(chunk)
        c = iter(pad)
        pos = set(positions.tolist())
        for i in range(list_total):
            items.append(next(c) if i in pos else next(t))
        out.append(StimulusList(number, tuple(items), size, tuple(int(p) for p in positions)))
    return out


SAME, DIFFERENT = "same-sense", "different-sense"


@dataclass(frozen=True)
class SentencePair:
    pair_id: str
    sentence_a: str
    sentence_b: str
    verb: str
    pair_type: str
    senses: tuple[str, str]

    def __post_init__(self):
        if (self.pair_type == SAME) != (self.senses[0] == self.senses[1]):
            raise ValueError("pair type disagrees with its senses")
        if self.sentence_a == self.sentence_b:
            raise ValueError("a pair needs two different sentences")


def rank_by_zsum(rows: Iterable[tuple[str, str, str, float, float]]) -> dict[tuple[str, str], list[str]]:
    """``(verb, sense, sentence_id, z_naturalness, z_typicality)`` rows to
    sentence ids per ``(verb, sense)``, best summed z first."""
    groups: dict[tuple[str, str], list[tuple[float, str]]] = {}
    for verb, sense, sid, zn, zt in rows:
        groups.setdefault((verb, sense), []).append((zn + zt, sid))
    return {
        key: [sid for _, sid in sorted(v, key=lambda p: (-p[0], p[1]))]
        for key, v in groups.items()
    }


def make_pairs(per_sense_top: Mapping[tuple[str, str], Sequence[str]]) -> list[SentencePair]:
    """One same-sense pair from each sense's top two sentences and one
    different-sense pair per two senses of a verb, from their top sentences."""
    by_verb: dict[str, list[tuple[str, Sequence[str]]]] = {}
    for (verb, sense), ranked in per_sense_top.items():
        by_verb.setdefault(verb, []).append((sense, ranked))
    out = []
    for verb in sorted(by_verb):
        senses = [(s, r) for s, r in sorted(by_verb[verb]) if r]
        for sense, ranked in senses:
            if len(ranked) >= 2:
                a, b = ranked[0], ranked[1]
                out.append(SentencePair(f"{verb}:{a}|{b}", a, b, verb, SAME, (sense, sense)))
        for (s1, r1), (s2, r2) in combinations(senses, 2):
            a, b = r1[0], r2[0]
            out.append(SentencePair(f"{verb}:{a}|{b}", a, b, verb, DIFFERENT, (s1, s2)))
    return out


def read_ratings(path) -> list[RatingRecord]:
    """CSV with a header, or JSONL (by ``.jsonl``/``.json`` suffix)."""
    path = Path(path)
    if path.suffix in (".jsonl", ".json"):
        with open(path, encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    return [
        RatingRecord(str(r["participant_id"]), str(r["sentence_id"]), float(r["rating"]), str(r.get("verb") or ""))
        for r in rows
    ]


def read_scores(path) -> list[SentenceScore]:
    with open(path, encoding="utf-8") as fh:
        return [SentenceScore(**json.loads(line)) for line in fh if line.strip()]


def write_jsonl(rows: Iterable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            d = r.to_json() if hasattr(r, "to_json") else asdict(r)
            fh.write(json.dumps(d, sort_keys=True) + "\n")
