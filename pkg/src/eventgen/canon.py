"""Turn dependency-annotated corpus sentences into "The N V-ed the N." items.

Input records come from an external parser and sense tagger as JSONL::

    {"source_id": "r1", "sense_tag": "hit.02", "verb_index": 3,
     "tokens": [{"surface": "my", "lemma": "my", "upos": "PRON",
                 "head": 1, "deprel": "nmod:poss"}, ...]}

``head`` is the 0-based index of the governing token, -1 for the root.
Relation labels follow Universal Dependencies, with the older Stanford
spellings (``dobj``, ``poss``) accepted too.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

from .lm import LanguageModel, surprisal, tokenize

log = logging.getLogger(__name__)

SUBJECT_RELS = frozenset({"nsubj"})
OBJECT_RELS = frozenset({"obj", "dobj"})
DETERMINER_RELS = frozenset({"det", "det:poss", "nmod:poss", "poss"})
NOUN_TAGS = frozenset({"NOUN"})
RELATIONS = SUBJECT_RELS | OBJECT_RELS | DETERMINER_RELS
DEFAULT_STOPLIST = frozenset({"lot", "bit", "bunch", "ton", "deal"})

_WORD = re.compile(r"^\w+$")
_CANON = re.compile(r"^The \w+ \w+ the \w+\.$")


class AnnotationError(ValueError):
    pass


class Token(NamedTuple):
    surface: str
    lemma: str
    upos: str
    head: int
    deprel: str


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: tuple[Token, ...]
    verb_index: int
    sense_tag: str
    source_id: str

    def __post_init__(self):
        n = len(self.tokens)
        if not 0 <= self.verb_index < n:
            raise AnnotationError(f"{self.source_id}: verb_index {self.verb_index} out of range")
        for i, tok in enumerate(self.tokens):
            if tok.head != -1 and not 0 <= tok.head < n:
                raise AnnotationError(f"{self.source_id}: token {i} has dangling head {tok.head}")
            if tok.head == i:
                raise AnnotationError(f"{self.source_id}: token {i} heads itself")

    @classmethod
    def from_json(cls, d: Mapping) -> "AnnotatedSentence":
        try:
            toks = tuple(
                Token(t["surface"], t["lemma"], t["upos"], int(t["head"]), t["deprel"])
                for t in d["tokens"]
            )
            return cls(toks, int(d["verb_index"]), d.get("sense_tag", ""), str(d.get("source_id", "")))
        except (KeyError, TypeError) as e:
            raise AnnotationError(f"malformed record: {e}") from None

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "sense_tag": self.sense_tag,
            "verb_index": self.verb_index,
            "tokens": [t._asdict() for t in self.tokens],
        }

    def dependents(self, i: int) -> list[int]:
        return [j for j, t in enumerate(self.tokens) if t.head == i]


def read_annotations(path) -> Iterator[AnnotatedSentence | AnnotationError]:
    """Yield one record (or the error it raised) per non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield AnnotatedSentence.from_json(json.loads(line))
            except (json.JSONDecodeError, AnnotationError) as e:
                yield AnnotationError(f"line {lineno}: {e}")


def _noun_form(s: AnnotatedSentence, i: int) -> str:
    surface = s.tokens[i].surface
    return surface[:1].lower() + surface[1:] if i == 0 else surface


def _determined_noun(s: AnnotatedSentence, i: int, stoplist) -> str | None:
    tok = s.tokens[i]
    if tok.upos not in NOUN_TAGS or tok.lemma.lower() in stoplist:
        return None
    if not any(s.tokens[j].deprel in DETERMINER_RELS for j in s.dependents(i)):
        return None
    form = _noun_form(s, i)
    return form if _WORD.match(form) else None


def filter_transitive(
    s: AnnotatedSentence,
    target_verbs: Iterable[str],
    stoplist: Iterable[str] = DEFAULT_STOPLIST,
) -> tuple[str, str] | None:
    """``(subject noun, object noun)`` if the verb heads a determined-noun
    subject and object, else ``None``.  The first qualifying dependent of each
    kind wins."""
    verb = s.tokens[s.verb_index]
    if verb.lemma.lower() not in set(target_verbs):
        return None
    stop = {w.lower() for w in stoplist}
    subj = obj = None
    for j in s.dependents(s.verb_index):
        rel = s.tokens[j].deprel
        if subj is None and rel in SUBJECT_RELS:
            subj = _determined_noun(s, j, stop)
        elif obj is None and rel in OBJECT_RELS:
            obj = _determined_noun(s, j, stop)
    if subj is None or obj is None:
        return None
    return subj, obj


def load_lexicon(path=None) -> dict[str, str]:
    """Lemma to past-tense map; the bundled irregular list by default."""
    if path is None:
        text = resources.files("eventgen").joinpath("data/irregular_verbs.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    lex = json.loads(text)
    if any(not v for v in lex.values()):
        raise ValueError("past-tense forms must be non-empty")
    return lex


def load_stoplist(path=None) -> frozenset[str]:
    if path is None:
        text = resources.files("eventgen").joinpath("data/bleached_nouns.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))


_VOWELS = set("aeiou")


def _cvc(word: str) -> bool:
    # one-syllable consonant-vowel-consonant ending, last letter not w/x/y
    if len(word) < 3 or word[-1] in "wxy":
        return False
    c1, v, c2 = word[-3:]
    if c1 in _VOWELS or v not in _VOWELS or c2 in _VOWELS:
        return False
    return sum(ch in _VOWELS for ch in word) == 1


def regular_past(lemma: str) -> str:
    w = lemma.lower()
    if w.endswith("e"):
        return w + "d"
    if w.endswith("y") and len(w) > 1 and w[-2] not in _VOWELS:
        return w[:-1] + "ied"
    if _cvc(w):
        return w + w[-1] + "ed"
    return w + "ed"


def past_tense(lemma: str, lex: Mapping[str, str] | None = None) -> str:
    lex = load_lexicon() if lex is None else lex
    return lex.get(lemma.lower()) or regular_past(lemma)


@dataclass(frozen=True)
class CanonSentence:
    subject_noun: str
    verb_past: str
    object_noun: str
    sense_tag: str
    source_id: str
    surprisal: float = float("nan")

    @property
    def rendered(self) -> str:
        return f"The {self.subject_noun} {self.verb_past} the {self.object_noun}."

    def to_json(self) -> dict:
        d = asdict(self)
        d["rendered"] = self.rendered
        return d


def canonicalize(
    s: AnnotatedSentence, nouns: tuple[str, str], lex: Mapping[str, str] | None = None
) -> CanonSentence:
    subj, obj = nouns
    c = CanonSentence(subj, past_tense(s.tokens[s.verb_index].lemma, lex), obj, s.sense_tag, s.source_id)
    if not _CANON.match(c.rendered):
        raise AnnotationError(f"{s.source_id}: cannot render {c.rendered!r}")
    return c


def score(c: CanonSentence, lm: LanguageModel) -> CanonSentence:
    """Attach the LM surprisal of the rendered sentence."""
    return CanonSentence(
        c.subject_noun, c.verb_past, c.object_noun, c.sense_tag, c.source_id,
        surprisal(lm, tokenize(c.rendered)),
    )


def select_per_sense(
    candidates: Sequence[CanonSentence], lm: LanguageModel | None = None, n: int = 4
) -> dict[str, list[CanonSentence]]:
    """Lowest-surprisal ``n`` per sense.  Candidates are scored with ``lm``
    when given; otherwise their stored surprisal is used."""
    groups: dict[str, list[CanonSentence]] = {}
    for c in candidates:
        groups.setdefault(c.sense_tag, []).append(score(c, lm) if lm is not None else c)
    return {
        sense: sorted(group, key=lambda c: (c.surprisal, c.source_id))[:n]
        for sense, group in sorted(groups.items())
    }


def selection_summary(selected: Mapping[str, Sequence[CanonSentence]], n: int = 4) -> dict:
    """Per-sense counts, with senses short of two candidates flagged."""
    return {
        "per_sense": {s: len(v) for s, v in selected.items()},
        "short": sorted(s for s, v in selected.items() if len(v) < n),
        "fewer_than_two": sorted(s for s, v in selected.items() if len(v) < 2),
    }


def canonicalize_stream(
    records: Iterable[AnnotatedSentence | AnnotationError],
    target_verbs: Iterable[str],
    stoplist: Iterable[str] = DEFAULT_STOPLIST,
    lex: Mapping[str, str] | None = None,
) -> tuple[list[CanonSentence], list[str]]:
    """Filter and rewrite a record stream; bad records become error strings."""
    lex = load_lexicon() if lex is None else lex
    verbs = {v.lower() for v in target_verbs}
    stop = frozenset(stoplist)
    out, errors = [], []
    for rec in records:
        if isinstance(rec, AnnotationError):
            errors.append(str(rec))
            continue
        nouns = filter_transitive(rec, verbs, stop)
        if nouns is None:
            continue
        try:
            out.append(canonicalize(rec, nouns, lex))
        except AnnotationError as e:
            errors.append(str(e))
    for e in errors:
        log.warning("skipped record: %s", e)
    return out, errors
