import json
import re

import pytest
from hypothesis import given, strategies as st

from eventgen.canon import (
    AnnotatedSentence,
    AnnotationError,
    CanonSentence,
    Token,
    canonicalize,
    canonicalize_stream,
    filter_transitive,
    load_lexicon,
    load_stoplist,
    past_tense,
    read_annotations,
    regular_past,
    select_per_sense,
    selection_summary,
)

CANON = re.compile(r"^The \w+ \w+ the \w+\.$")


def sent(words, verb_index=None, sense="hit.01", sid="s"):
    """``words`` are (surface, lemma, upos, head, deprel) tuples."""
    toks = tuple(Token(*w) for w in words)
    if verb_index is None:
        verb_index = next(i for i, t in enumerate(toks) if t.head == -1)
    return AnnotatedSentence(toks, verb_index, sense, sid)


# "His body hit the floor with a thud"
BODY = [
    ("His", "he", "PRON", 1, "nmod:poss"),
    ("body", "body", "NOUN", 2, "nsubj"),
    ("hit", "hit", "VERB", -1, "root"),
    ("the", "the", "DET", 4, "det"),
    ("floor", "floor", "NOUN", 2, "obj"),
    ("with", "with", "ADP", 7, "case"),
    ("a", "a", "DET", 7, "det"),
    ("thud", "thud", "NOUN", 2, "obl"),
]

# "The resolutioners are hitting the gym"
GYM = [
    ("The", "the", "DET", 1, "det"),
    ("resolutioners", "resolutioner", "NOUN", 3, "nsubj"),
    ("are", "be", "AUX", 3, "aux"),
    ("hitting", "hit", "VERB", -1, "root"),
    ("the", "the", "DET", 5, "det"),
    ("gym", "gym", "NOUN", 3, "obj"),
]


@pytest.mark.parametrize("words, rendered", [(BODY, "The body hit the floor."), (GYM, "The resolutioners hit the gym.")])
def test_golden_rewrites(words, rendered):
    s = sent(words)
    nouns = filter_transitive(s, ["hit"])
    assert canonicalize(s, nouns).rendered == rendered


def test_pronoun_subject_is_rejected():
    words = [("She", "she", "PRON", 1, "nsubj"), ("hit", "hit", "VERB", -1, "root"),
             ("the", "the", "DET", 3, "det"), ("ball", "ball", "NOUN", 1, "obj")]
    assert filter_transitive(sent(words), ["hit"]) is None


def test_bare_noun_is_rejected():
    words = [("Dogs", "dog", "NOUN", 1, "nsubj"), ("hit", "hit", "VERB", -1, "root"),
             ("the", "the", "DET", 3, "det"), ("ball", "ball", "NOUN", 1, "obj")]
    assert filter_transitive(sent(words), ["hit"]) is None


def test_bleached_noun_is_rejected():
    words = [("The", "the", "DET", 1, "det"), ("storm", "storm", "NOUN", 2, "nsubj"),
             ("hit", "hit", "VERB", -1, "root"), ("a", "a", "DET", 4, "det"),
             ("lot", "lot", "NOUN", 2, "obj")]
    assert filter_transitive(sent(words), ["hit"]) is None
    assert "lot" in load_stoplist()


def test_non_target_verb_is_ignored():
    assert filter_transitive(sent(BODY), ["kick"]) is None


def test_missing_object_is_rejected():
    assert filter_transitive(sent(BODY[:3]), ["hit"]) is None


def test_dangling_head_is_an_annotation_error():
    with pytest.raises(AnnotationError):
        sent([("x", "x", "NOUN", 5, "nsubj"), ("hit", "hit", "VERB", -1, "root")], verb_index=1)
    with pytest.raises(AnnotationError):
        sent([("x", "x", "NOUN", 0, "nsubj")], verb_index=0)


def test_annotations_round_trip_and_bad_lines(tmp_path):
    p = tmp_path / "a.jsonl"
    good = sent(BODY, sid="r1")
    p.write_text(json.dumps(good.to_json()) + "\n\nnot json\n" + json.dumps({"tokens": []}) + "\n")
    recs = list(read_annotations(p))
    assert recs[0] == good
    assert all(isinstance(r, AnnotationError) for r in recs[1:]) and len(recs) == 3
    out, errors = canonicalize_stream(recs, ["hit"])
    assert [c.rendered for c in out] == ["The body hit the floor."]
    assert len(errors) == 2


@pytest.mark.parametrize(
    "lemma, past",
    [("smash", "smashed"), ("stop", "stopped"), ("carry", "carried"), ("admit", "admitted"),
     ("hit", "hit"), ("take", "took"), ("play", "played"), ("bake", "baked"), ("open", "opened")],
)
def test_past_tense(lemma, past):
    assert past_tense(lemma) == past


def test_regular_rule_without_lexicon():
    assert regular_past("walk") == "walked"
    assert past_tense("hit", {}) == "hitted"
    assert all(v for v in load_lexicon().values())


def _cand(sense, sid, sur):
    return CanonSentence("dog", "hit", "ball", sense, sid, sur)


def test_select_per_sense_counts():
    cands = [_cand("a", f"a{i}", float(10 - i)) for i in range(10)]
    cands += [_cand("b", f"b{i}", float(i)) for i in range(3)]
    sel = select_per_sense(cands)
    assert [c.source_id for c in sel["a"]] == ["a9", "a8", "a7", "a6"]
    assert len(sel["b"]) == 3
    assert "c" not in sel
    summary = selection_summary(sel)
    assert summary["short"] == ["b"] and summary["fewer_than_two"] == []


def test_select_ties_break_on_source_id():
    sel = select_per_sense([_cand("a", "z", 1.0), _cand("a", "m", 1.0)], n=1)
    assert sel["a"][0].source_id == "m"


def test_selection_scores_with_lm(ngram_lm):
    cands = [CanonSentence("man", "hit", "ball", "hit.01", "1"), CanonSentence("zzz", "hit", "qqq", "hit.01", "2")]
    sel = select_per_sense(cands, ngram_lm, n=2)["hit.01"]
    assert sel[0].surprisal <= sel[1].surprisal
    assert all(c.surprisal > 0 for c in sel)


noun = st.from_regex(r"[a-z]{1,10}", fullmatch=True)


@given(noun, noun, st.sampled_from(["hit", "kick", "carry", "stop", "take"]))
def test_rendered_form_always_matches(subj, obj, verb):
    words = [("The", "the", "DET", 1, "det"), (subj, subj, "NOUN", 2, "nsubj"),
             (verb, verb, "VERB", -1, "root"), ("the", "the", "DET", 4, "det"),
             (obj, obj, "NOUN", 2, "obj")]
    s = sent(words)
    nouns = filter_transitive(s, [verb], stoplist=())
    assert nouns == (subj, obj)
    assert CANON.match(canonicalize(s, nouns).rendered)
