"""Deciding how many senses a verb has and getting glosses for them from an LM.

Stage one asks the LM eight yes/no questions about whether a verb has one
meaning, turns each answer distribution into log-odds and classifies the
verb as monosemous or polysemous with an SVM.  Stage two prompts for one gloss
or for a numbered list of glosses.  The prompt wording for the list case is
chosen by comparing each candidate's sense counts with a reference lexicon.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .lm import LanguageModel, tokenize
from .svm import CvReport, Pipeline, nested_cv

POLYSEMY_PROMPTS = (
    'Does the verb "{{VERB}}" have only one sense when used in a transitive clause?',
    'Does the verb "{{VERB}}" have only one possible meaning when used in a transitive clause?',
    'Does the verb "{{VERB}}" have only one sense when used in a transitive clause? '
    "Only answer with YES or NO.",
    'Does the verb "{{VERB}}" have only one possible meaning when used in a transitive clause? '
    "Only answer with YES or NO.",
    'Does the verb "{{VERB}}" have MORE THAN one distinct meaning when used in a transitive clause?',
    'Does the verb "{{VERB}}" have more than one distinct meaning when used in a transitive clause?',
    'When used in a transitive clause, does the verb "{{VERB}}" have ONE meaning, '
    "or MORE THAN ONE distinct meaning?",
    'When used in a transitive clause, does the verb "{{VERB}}" have one meaning, '
    "or more than one distinct meaning?",
)

MONOSEMOUS_PROMPT = (
    'Please describe the one possible sense of the verb "{{VERB}}" '
    "when it is used in a transitive clause."
)
BASE_PROMPT = (
    'Describe and enumerate the distinct possible senses of the verb "{{VERB}}" '
    "when it is found in a transitive clause."
)
PROMPT_COMPONENTS = (
    'For example, if you were given the verb "administrate", you should respond with '
    '"manage" because "administrate" has one transitive sense.',
    'For example, if you were given the verb "abandon", you should respond with '
    '"1. leave behind; 2. exchange; 3. surrender, give over" since "abandon" has three '
    "transitive senses.",
    'For example, the verb "jump" has five senses because it has multiple possible meanings '
    'when it is used, so you should output something like "1. stock prices, increase, '
    "2. be excited for an opportunity, getting there first, 3. physically or metaphorically "
    'leap, physical motion, 4. to escape, bail out, 5. attack, gangsta style".',
    "Ensure that the sense description(s) can stand alone and do not depend on being the "
    "synonym of some other verb.",
)
# the wording the original selection settled on; it carries one extra sentence
# that is not among the combinable components
FINAL_POLYSEMY_PROMPT = (
    BASE_PROMPT
    + " Feel free to give only one sense if it only has one possible meaning. "
    + PROMPT_COMPONENTS[0]
)
TEMPERATURES = (0.7, 0.8, 0.9)

YES, NO = "yes", "no"
ZERO_FLOOR = 1e-12

REFERENCE_LEXICON = "reference-lexicon"
LM_GENERATED = "lm-generated"


def fill(template: str, verb: str) -> str:
    return template.replace("{{VERB}}", verb)


# Stage one --------------------------------------------------------------


@dataclass(frozen=True)
class PolysemyFeatures:
    verb: str
    log_odds: tuple[float, ...]
    flags: tuple[str, ...] = ()  # one entry per prompt; "" when nothing was clamped

    def __post_init__(self):
        if len(self.log_odds) != len(POLYSEMY_PROMPTS):
            raise ValueError(f"expected {len(POLYSEMY_PROMPTS)} features")
        if not all(math.isfinite(x) for x in self.log_odds):
            raise ValueError("features must be finite")


def answer_mass(dist, word: str) -> float:
    """Probability that the next token is ``word`` in any capitalization."""
    return math.fsum(p for tok, p in dist.entries.items() if tok.casefold() == word)


def log_odds(p_yes: float, p_no: float) -> tuple[float, str]:
    if p_yes <= 0 and p_no <= 0:
        return 0.0, "no-mass"
    if p_yes <= 0 or p_no <= 0:
        return math.log(max(p_yes, ZERO_FLOOR)) - math.log(max(p_no, ZERO_FLOOR)), "clamped"
    return math.log(p_yes) - math.log(p_no), ""


def polysemy_features(lm: LanguageModel, verb: str) -> PolysemyFeatures:
    """Log-odds of a YES over a NO first answer token for each of the eight prompts."""
    values, flags = [], []
    for template in POLYSEMY_PROMPTS:
        d = lm.next_token_dist(tokenize(fill(template, verb), lower=False))
        v, flag = log_odds(answer_mass(d, YES), answer_mass(d, NO))
        values.append(v)
        flags.append(flag)
    return PolysemyFeatures(verb, tuple(values), tuple(flags))


MONOSEMOUS, POLYSEMOUS = "monosemous", "polysemous"


def _as_label(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return MONOSEMOUS if x else POLYSEMOUS
    if x in (MONOSEMOUS, POLYSEMOUS):
        return x
    raise ValueError(f"label must be a bool or {MONOSEMOUS!r}/{POLYSEMOUS!r}, not {x!r}")


@dataclass
class PolysemyClassifier:
    model: Pipeline
    report: CvReport

    def predict(self, features: Sequence[PolysemyFeatures]) -> list[str]:
        X = np.array([f.log_odds for f in features])
        return [str(v) for v in self.model.predict(X)]

    def is_monosemous(self, f: PolysemyFeatures) -> bool:
        return self.predict([f])[0] == MONOSEMOUS


def fit_polysemy_classifier(
    features: Sequence[PolysemyFeatures],
    labels: Sequence,
    seed: int = 0,
    outer_folds: int = 5,
    inner_folds: int = 4,
    on_fit: Callable[[np.ndarray, np.ndarray], None] | None = None,
) -> tuple[PolysemyClassifier, CvReport]:
    """Nested-CV-validated SVM over kernel {linear, rbf} and C, refit on everything.

    ``labels`` are booleans (True = monosemous) or the strings
    ``"monosemous"``/``"polysemous"``.
    """
    if len(features) != len(labels):
        raise ValueError("features and labels differ in length")
    if len(features) < 10:
        raise ValueError("need at least 10 labeled verbs")
    y = np.array([_as_label(v) for v in labels])
    if len(set(y)) < 2:
        raise ValueError("labels contain a single class")
    X = np.array([f.log_odds for f in features])
    model, report = nested_cv(X, y, outer_folds, inner_folds, seed, on_fit=on_fit)
    return PolysemyClassifier(model, report), report


# Stage two --------------------------------------------------------------


@dataclass(frozen=True)
class SenseInventory:
    verb: str
    senses: tuple[tuple[str, str], ...]  # (sense_id, gloss)
    source: str = LM_GENERATED
    diagnostic: str = ""

    def __post_init__(self):
        ids = [s for s, _ in self.senses]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate sense ids for {self.verb!r}")
        if not self.senses and not self.diagnostic:
            raise ValueError("an empty inventory needs a diagnostic")

    @property
    def glosses(self) -> list[str]:
        return [g for _, g in self.senses]

    def __len__(self):
        return len(self.senses)


def load_lexicon(path) -> dict[str, SenseInventory]:
    """Read ``{verb: [{"sense_id": .., "gloss": ..}, ..]}``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        verb: SenseInventory(
            verb, tuple((e["sense_id"], e["gloss"]) for e in entries), REFERENCE_LEXICON
        )
        for verb, entries in data.items()
    }


class TextCompleter(Protocol):
    def complete(self, prompt: str, temperature: float, seed: int) -> str: ...


class CannedCompleter:
    """Stored completions keyed by full prompt text or by verb.

    A verb key matches the first quoted word of the prompt, which is where
    every template puts the target verb.
    """

    def __init__(self, completions: Mapping[str, str]):
        self.completions = dict(completions)

    def complete(self, prompt: str, temperature: float, seed: int) -> str:
        if prompt in self.completions:
            return self.completions[prompt]
        m = re.search(r'"([^"]+)"', prompt)
        return self.completions.get(m.group(1), "") if m else ""


_PUNCT_EDGE = ' \t\r\n;,.:"'
_MARKER_RE = re.compile(r"(?<!\S)(\d+)[.)](?=\s|$)")


def _trim(s: str) -> str:
    return s.strip().strip(_PUNCT_EDGE).strip()


def parse_enumeration(text: str) -> list[str]:
    """Split ``"1. a; 2. b"`` style output into glosses.

    Markers must count up by one from the first one found, which keeps
    numbers inside a gloss from splitting it.  Text before the first marker
    is dropped.  Without markers the whole trimmed text is one item.
    """
    starts = []
    expected = None
    for m in _MARKER_RE.finditer(text):
        n = int(m.group(1))
        if expected is None or n == expected:
            starts.append(m)
            expected = n + 1
    if not starts:
        t = _trim(text)
        return [t] if t else []
    items = []
    for a, b in zip(starts, starts[1:] + [None]):
        item = _trim(text[a.end(): b.start() if b else len(text)])
        if item:
            items.append(item)
    return items


@dataclass
class PromptCandidate:
    id: str
    text: str
    temperature: float
    counts: dict[str, int] = field(default_factory=dict)
    mae: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "temperature": self.temperature,
            "counts": self.counts,
            "mae": self.mae,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "PromptCandidate":
        return cls(
            str(d["id"]),
            d["text"],
            float(d["temperature"]),
            {k: int(v) for k, v in d.get("counts", {}).items()},
        )


def prompt_combinations() -> list[str]:
    """The base prompt followed by every subset of the components, kept in order.

    Subsets go by size and then by position, starting with the bare base
    prompt, for 16 texts in all.
    """
    out = []
    for r in range(len(PROMPT_COMPONENTS) + 1):
        for combo in combinations(PROMPT_COMPONENTS, r):
            out.append(" ".join((BASE_PROMPT,) + combo))
    return out


def prompt_candidates(temperatures: Sequence[float] = TEMPERATURES) -> list[PromptCandidate]:
    return [
        PromptCandidate(f"p{i:02d}-t{t:g}", text, t)
        for i, text in enumerate(prompt_combinations())
        for t in temperatures
    ]


def generate_glosses(
    lm: TextCompleter,
    verb: str,
    is_monosemous: bool,
    prompt: PromptCandidate | None = None,
    seed: int = 0,
) -> SenseInventory:
    """Ask ``lm`` for glosses of ``verb``: one for a monosemous verb, a list otherwise."""
    if is_monosemous:
        text, temperature = fill(MONOSEMOUS_PROMPT, verb), (prompt.temperature if prompt else 0.8)
    else:
        if prompt is None:
            raise ValueError("a polysemous verb needs a prompt candidate")
        text, temperature = fill(prompt.text, verb), prompt.temperature
    completion = lm.complete(text, temperature, seed)
    if is_monosemous:
        g = _trim(completion)
        glosses = [g] if g else []
    else:
        glosses = parse_enumeration(completion)
    if not glosses:
        return SenseInventory(verb, (), LM_GENERATED, f"no gloss found in {completion!r}")
    senses = tuple((f"{verb}.lm{i:02d}", g) for i, g in enumerate(glosses, 1))
    return SenseInventory(verb, senses, LM_GENERATED)


def count_senses(
    lm: TextCompleter, verbs: Sequence[str], candidate: PromptCandidate, seed: int = 0
) -> dict[str, int]:
    return {v: len(generate_glosses(lm, v, False, candidate, seed)) for v in verbs}


def score_prompts(
    candidates: Sequence[PromptCandidate],
    reference_counts: Mapping[str, int],
    bootstrap_B: int = 1000,
    seed: int = 0,
) -> list[PromptCandidate]:
    """Copies of ``candidates`` with MAE and a percentile 95% bootstrap CI of
    ``MAE(candidate) - MAE(best)`` filled in."""
    if not candidates:
        raise ValueError("no prompt candidates")
    verbs = sorted(reference_counts)
    ref = np.array([reference_counts[v] for v in verbs], float)
    errs = []
    for c in candidates:
        if set(c.counts) != set(verbs):
            raise ValueError(f"candidate {c.id} does not cover the reference verb set")
        errs.append(np.abs(np.array([c.counts[v] for v in verbs], float) - ref))
    errs = np.array(errs)
    maes = errs.mean(axis=1)
    best = int(np.argmin(maes))
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(verbs), size=(bootstrap_B, len(verbs)))
    out = []
    for c, e, mae in zip(candidates, errs, maes):
        diffs = (e - errs[best])[idx].mean(axis=1)
        lo, hi = np.percentile(diffs, [2.5, 97.5])
        out.append(replace(c, mae=float(mae), ci_low=float(lo), ci_high=float(hi)))
    return out


def best_set(scored: Sequence[PromptCandidate], tol: float = 1e-12) -> list[PromptCandidate]:
    return [c for c in scored if c.ci_low <= tol and c.ci_high >= -tol]


def select_prompt(
    candidates: Sequence[PromptCandidate],
    reference_counts: Mapping[str, int],
    bootstrap_B: int = 1000,
    seed: int = 0,
) -> PromptCandidate:
    """Shortest, then coolest, then lowest-id prompt among those statistically
    tied with the lowest-MAE one."""
    scored = score_prompts(candidates, reference_counts, bootstrap_B, seed)
    return min(best_set(scored), key=lambda c: (len(c.text), c.temperature, c.id))
