import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eventgen.dist import EOS
from eventgen.lm import TableLM, tokenize
from eventgen.sense import (
    BASE_PROMPT,
    FINAL_POLYSEMY_PROMPT,
    LM_GENERATED,
    MONOSEMOUS_PROMPT,
    POLYSEMY_PROMPTS,
    PROMPT_COMPONENTS,
    CannedCompleter,
    PolysemyFeatures,
    PromptCandidate,
    SenseInventory,
    fill,
    fit_polysemy_classifier,
    generate_glosses,
    load_lexicon,
    parse_enumeration,
    polysemy_features,
    prompt_candidates,
    prompt_combinations,
    score_prompts,
    select_prompt,
)


def test_eight_prompt_variants():
    assert len(POLYSEMY_PROMPTS) == 8
    assert len(set(POLYSEMY_PROMPTS)) == 8
    assert all("{{VERB}}" in p for p in POLYSEMY_PROMPTS)


def test_constant_ratio_gives_log_four():
    lm = TableLM({"": {"yes": 0.8, "no": 0.2}})
    f = polysemy_features(lm, "hit")
    assert f.log_odds == pytest.approx((math.log(4),) * 8)


def test_equal_mass_gives_zero():
    f = polysemy_features(TableLM({"": {"yes": 0.3, "no": 0.3, "maybe": 0.4}}), "hit")
    assert f.log_odds == (0.0,) * 8


def test_per_prompt_table_values():
    ratios = [1, 2, 3, 4, 0.5, 0.25, 5, 6]
    table = {"": {"yes": 0.5, "no": 0.5}}
    for template, r in zip(POLYSEMY_PROMPTS, ratios):
        table[" ".join(tokenize(fill(template, "kick"), lower=False))] = {"yes": r, "no": 1.0, "other": 2.0}
    f = polysemy_features(TableLM(table), "kick")
    assert f.log_odds == pytest.approx(tuple(math.log(r) for r in ratios))


def test_capitalization_variants_are_pooled():
    a = polysemy_features(TableLM({"": {"yes": 0.6, "no": 0.4}}), "x")
    b = polysemy_features(TableLM({"": {"yes": 0.2, "YES": 0.3, "Yes": 0.1, "No": 0.3, "NO": 0.1}}), "x")
    assert a.log_odds == pytest.approx(b.log_odds)


def test_case_emphasis_variants_stay_distinct():
    assert tokenize(fill(POLYSEMY_PROMPTS[4], "hit"), lower=False) != tokenize(
        fill(POLYSEMY_PROMPTS[5], "hit"), lower=False
    )


def test_ngram_model_folds_case_emphasised_prompts(ngram_lm):
    upper = ngram_lm.next_token_dist(tokenize("The MAN", lower=False))
    lower = ngram_lm.next_token_dist(tokenize("the man"))
    assert upper.entries == lower.entries


def test_missing_mass_is_flagged():
    f = polysemy_features(TableLM({"": {"maybe": 1.0}}), "x")
    assert f.log_odds == (0.0,) * 8 and set(f.flags) == {"no-mass"}
    g = polysemy_features(TableLM({"": {"yes": 1.0}}), "x")
    assert all(math.isfinite(v) and v > 0 for v in g.log_odds)
    assert set(g.flags) == {"clamped"}


def test_feature_shape_is_checked():
    with pytest.raises(ValueError):
        PolysemyFeatures("x", (0.0,) * 7)
    with pytest.raises(ValueError):
        PolysemyFeatures("x", (math.inf,) + (0.0,) * 7)


def _features(n, seed, separable=True, shuffle=False):
    rng = np.random.default_rng(seed)
    labels = np.array([i % 2 == 0 for i in range(n)])
    mean = np.where(labels, 2.0, -2.0)[:, None] if separable else 0.0
    X = mean + rng.normal(scale=0.1 if separable else 1.0, size=(n, 8))
    if shuffle:
        labels = rng.permutation(labels)
    return [PolysemyFeatures(f"v{i}", tuple(row)) for i, row in enumerate(X)], list(labels)


def test_classifier_on_separable_features():
    feats, labels = _features(40, 0)
    clf, rep = fit_polysemy_classifier(feats, labels)
    assert rep.outer_accuracy >= 0.9
    assert rep.refit_accuracy == 1.0
    assert clf.predict(feats[:2]) == ["monosemous", "polysemous"]
    assert clf.is_monosemous(feats[0])


def test_classifier_input_checks():
    feats, labels = _features(12, 1)
    with pytest.raises(ValueError):
        fit_polysemy_classifier(feats[:9], labels[:9])
    with pytest.raises(ValueError):
        fit_polysemy_classifier(feats, [True] * 12)
    with pytest.raises(ValueError):
        fit_polysemy_classifier(feats, ["mono"] * 12)


# glosses


def test_prompt_texts():
    assert fill(MONOSEMOUS_PROMPT, "box").startswith('Please describe the one possible sense of the verb "box"')
    assert FINAL_POLYSEMY_PROMPT.startswith(BASE_PROMPT)
    assert FINAL_POLYSEMY_PROMPT.endswith(PROMPT_COMPONENTS[0])


def test_sixteen_combinations_in_listed_order():
    combos = prompt_combinations()
    assert len(combos) == 16
    assert combos[0] == BASE_PROMPT
    assert all(c.startswith(BASE_PROMPT) for c in combos)
    for c in combos:
        positions = [c.find(p) for p in PROMPT_COMPONENTS if p in c]
        assert positions == sorted(positions)
    assert combos[-1] == " ".join((BASE_PROMPT,) + PROMPT_COMPONENTS)
    cands = prompt_candidates()
    assert len(cands) == 48 and len({c.id for c in cands}) == 48
    assert {c.temperature for c in cands} == {0.7, 0.8, 0.9}


def test_monosemous_gloss_is_the_whole_answer():
    inv = generate_glosses(CannedCompleter({"administrate": " manage. "}), "administrate", True)
    assert inv.glosses == ["manage"]
    assert inv.source == LM_GENERATED


def test_polysemous_glosses_from_enumeration():
    cand = PromptCandidate("p", FINAL_POLYSEMY_PROMPT, 0.8)
    inv = generate_glosses(
        CannedCompleter({"abandon": "1. leave behind; 2. exchange; 3. surrender, give over"}), "abandon", False, cand
    )
    assert inv.glosses == ["leave behind", "exchange", "surrender, give over"]
    assert [s for s, _ in inv.senses] == ["abandon.lm01", "abandon.lm02", "abandon.lm03"]


def test_empty_answer_gives_empty_inventory_with_diagnostic():
    inv = generate_glosses(CannedCompleter({}), "hit", False, PromptCandidate("p", BASE_PROMPT, 0.7))
    assert len(inv) == 0 and inv.diagnostic
    with pytest.raises(ValueError):
        SenseInventory("hit", ())


def test_canned_completer_keys_on_target_verb_not_examples():
    c = CannedCompleter({"jump": "wrong", "hit": "1. strike 2. reach"})
    text = fill(" ".join((BASE_PROMPT,) + PROMPT_COMPONENTS), "hit")
    assert c.complete(text, 0.8, 0) == "1. strike 2. reach"


@pytest.mark.parametrize(
    "text, items",
    [
        ("1. a; 2. b; 3. c", ["a", "b", "c"]),
        ("manage", ["manage"]),
        ("1. strike 2. reach", ["strike", "reach"]),
        ("1. strike\n2. reach", ["strike", "reach"]),
        ("1) strike\n2) reach", ["strike", "reach"]),
        ("", []),
        ("Here you go:\n1. strike\n2. reach", ["strike", "reach"]),
        ("1. hit in 1990\n2. reach", ["hit in 1990", "reach"]),
    ],
)
def test_parse_enumeration(text, items):
    assert parse_enumeration(text) == items


def test_parse_five_item_example():
    text = PROMPT_COMPONENTS[2].split('like "')[1]
    assert len(parse_enumeration(text)) == 5


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.text(alphabet="abcdefgh ,", min_size=1, max_size=12).filter(lambda s: s.strip(" ,")), min_size=1, max_size=9),
    st.sampled_from(["; ", "\n", " "]),
    st.sampled_from([".", ")"]),
)
def test_enumeration_count_round_trip(glosses, sep, mark):
    text = sep.join(f"{i}{mark} {g}" for i, g in enumerate(glosses, 1))
    assert len(parse_enumeration(text)) == len(glosses)


def test_lexicon_loading(tmp_path):
    p = tmp_path / "lex.json"
    p.write_text('{"hit": [{"sense_id": "hit.01", "gloss": "strike"}, {"sense_id": "hit.02", "gloss": "reach"}]}')
    lex = load_lexicon(p)
    assert lex["hit"].glosses == ["strike", "reach"]
    assert lex["hit"].source == "reference-lexicon"


# prompt selection


def test_mae_zero_candidate_wins():
    ref = {f"v{i}": 3 for i in range(10)}
    good = PromptCandidate("good", "x" * 90, 0.9, dict(ref))
    bad = PromptCandidate("bad", "x" * 10, 0.7, {v: 5 for v in ref})
    assert select_prompt([bad, good], ref).id == "good"


def test_identical_counts_pick_shortest():
    ref = {"a": 2, "b": 4}
    long_ = PromptCandidate("long", "x" * 80, 0.7, {"a": 3, "b": 4})
    short = PromptCandidate("short", "x" * 50, 0.9, {"a": 3, "b": 4})
    assert select_prompt([long_, short], ref).id == "short"


def test_equal_length_picks_lowest_temperature_then_id():
    ref = {"a": 2}
    c = [PromptCandidate(i, "same", t, {"a": 2}) for i, t in (("z", 0.9), ("y", 0.7), ("x", 0.7))]
    assert select_prompt(c, ref).id == "x"


def test_disjoint_error_halves_tie_statistically():
    verbs = [f"v{i}" for i in range(20)]
    ref = {v: 3 for v in verbs}
    a = PromptCandidate("a", "a" * 60, 0.8, {v: 4 if i < 10 else 3 for i, v in enumerate(verbs)})
    b = PromptCandidate("b", "b" * 40, 0.8, {v: 3 if i < 10 else 4 for i, v in enumerate(verbs)})
    scored = score_prompts([a, b], ref, bootstrap_B=1000, seed=0)
    assert scored[0].mae == scored[1].mae == 0.5
    for c in scored:
        assert c.ci_low <= 0 <= c.ci_high
    assert select_prompt([a, b], ref).id == "b"


def test_selection_input_checks():
    with pytest.raises(ValueError):
        select_prompt([], {"a": 1})
    with pytest.raises(ValueError):
        select_prompt([PromptCandidate("p", "t", 0.7, {"b": 1})], {"a": 1})


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=3, max_size=12), st.integers(0, 5), st.integers(0, 1000))
def test_unique_perfect_candidate_always_selected(ref_counts, n_others, seed):
    verbs = [f"v{i}" for i in range(len(ref_counts))]
    ref = dict(zip(verbs, ref_counts))
    rng = np.random.default_rng(seed)
    cands = [PromptCandidate("perfect", "p" * 200, 0.9, dict(ref))]
    for j in range(n_others):
        counts = {v: int(c + rng.integers(1, 3)) for v, c in ref.items()}
        cands.append(PromptCandidate(f"o{j}", "o" * (j + 1), 0.7, counts))
    assert select_prompt(cands, ref, bootstrap_B=200, seed=seed).id == "perfect"
