import math

import pytest
from hypothesis import given, settings, strategies as st

from eventgen.grammar import (
    ANY_KIND,
    EnumerationCapExceeded,
    GrammarError,
    desugar_wildcards,
    event_grammar,
    language_enumerate,
    parse_grammar,
    pcfg_from_rules,
    render,
)
from conftest import HIT_TEXT


def test_hit_grammar_parses_to_six_sure_rules():
    g = parse_grammar(HIT_TEXT)
    assert len(g.rules) == 6
    assert all(r.prob == 1.0 for r in g.rules)
    assert g.start == "S"
    assert g.has_wildcards


def test_single_rule_language():
    g = parse_grammar("S -> a")
    assert [r.prob for r in g.rules] == [1.0]
    assert language_enumerate(g, 5) == [("a", 1.0)]


def test_unannotated_alternatives_share_mass():
    g = parse_grammar("S -> a S | a")
    assert sorted(r.prob for r in g.rules) == [0.5, 0.5]


def test_partial_annotation_spreads_leftover():
    g = parse_grammar("S -> a (0.5) | b | c")
    probs = {r.rhs[0].name: r.prob for r in g.rules}
    assert probs == pytest.approx({"a": 0.5, "b": 0.25, "c": 0.25})


def test_comments_and_multiple_lines_per_lhs():
    g = parse_grammar("# header\nS -> a (0.3)  # trailing\nS -> b (0.7)\n")
    assert len(g.rules) == 2


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("S -> a (0.5)", "sum"),
        ("S -> a (0.5) | b (0.6)", "sum"),
        ("S ->", "empty"),
        ("S a", "->"),
        ("S -> A\nA -> a\nB -> b", "unreachable"),
        ("S -> A | a\nA -> A b", "productive"),
        (".+ -> a", "wildcard"),
        ("S -> a (1.5)", "probab"),
        ("S -> a | a", "duplicate"),
    ],
)
def test_rejected_grammars(text, fragment):
    with pytest.raises(GrammarError) as e:
        parse_grammar(text)
    assert fragment in str(e.value).lower()


def test_syntax_error_reports_line():
    with pytest.raises(GrammarError) as e:
        parse_grammar("S -> a\nS b")
    assert e.value.line == 2


def test_continuation_must_stay_below_one():
    with pytest.raises(GrammarError):
        parse_grammar("S -> .+", wildcard_continuation=1.0)


def test_render_round_trip_on_hit_grammar():
    g = parse_grammar(HIT_TEXT)
    assert parse_grammar(render(g)) == g


def test_desugar_single_token_probability():
    g = parse_grammar("S -> .+", wildcard_continuation=0.1)
    d = desugar_wildcards(g, ["w", "x", "y", "z"])
    lang = dict(language_enumerate(d, 1))
    assert lang == pytest.approx({t: 0.9 / 4 for t in "wxyz"}, abs=1e-15)


def test_desugar_two_token_expansions():
    g = parse_grammar("S -> .+", wildcard_continuation=0.5)
    lang = dict(language_enumerate(desugar_wildcards(g, ["p", "q"]), 2))
    two = {k: v for k, v in lang.items() if len(k.split()) == 2}
    assert len(two) == 4
    for v in two.values():
        assert v == pytest.approx(0.0625, abs=1e-15)
    assert sum(two.values()) == pytest.approx(0.25)


def test_desugar_with_integer_vocab_size():
    d = desugar_wildcards(parse_grammar("S -> .+"), 3)
    assert not d.has_wildcards
    assert sorted(d.wildcard_vocab) == ["<w0>", "<w1>", "<w2>"]


def test_desugar_without_wildcards_is_identity():
    g = parse_grammar("S -> a S (0.4) | a (0.6)")
    assert desugar_wildcards(g, 5) == g


def test_desugar_uses_any_token_symbol(hit_grammar):
    d = desugar_wildcards(hit_grammar, ["cat", "dog"])
    assert any(s.kind == ANY_KIND for r in d.rules for s in r.rhs)
    with pytest.raises(ValueError):
        render(d)


def test_enumerate_geometric_language():
    g = parse_grammar("S -> a S (0.4) | a (0.6)")
    out = language_enumerate(g, 3)
    assert [s for s, _ in out] == ["a", "a a", "a a a"]
    assert [p for _, p in out] == pytest.approx([0.6, 0.24, 0.096], abs=1e-15)


def test_enumerate_hit_grammar_sixteen_strings(hit_grammar):
    d = desugar_wildcards(hit_grammar, ["the", "hit", "cat", "dog"])
    out = language_enumerate(d, 5)
    assert len(out) == 16
    assert all(p == pytest.approx(1 / 16, abs=1e-15) for _, p in out)
    assert all(s.split()[0] == "the" and s.split()[2] == "hit" for s, _ in out)


def test_enumerate_refuses_long_max_len_and_caps():
    g = parse_grammar("S -> a S | b S | a | b")
    with pytest.raises(ValueError):
        language_enumerate(g, 13)
    with pytest.raises(EnumerationCapExceeded):
        language_enumerate(g, 12, cap=100)


def test_enumerate_finite_language_sums_to_one():
    g = parse_grammar("S -> A B | B (0.25)\nA -> a | b\nB -> c A | c")
    assert math.fsum(p for _, p in language_enumerate(g, 6)) == pytest.approx(1.0, abs=1e-12)


def test_event_grammar_forces_the_verb():
    g = event_grammar("smashed")
    assert "smashed" in g.terminals
    assert g.wildcard_continuation == 0.0


def test_pcfg_from_rules_matches_text():
    g = pcfg_from_rules([("S", ["a", "S"], 0.4), ("S", ["a"], 0.6)])
    assert g == parse_grammar("S -> a S (0.4) | a (0.6)")


# round trip over random small grammars
_names = st.sampled_from(["a", "b", "c", "d"])


@st.composite
def grammars(draw):
    n = draw(st.integers(1, 3))
    nts = [f"N{i}" for i in range(n)]
    lines = []
    for i, x in enumerate(nts):
        alts = []
        # the first alternative terminates or refers forward, so every symbol is productive
        first = draw(st.lists(st.sampled_from(["a", "b"] + nts[i + 1:]), min_size=1, max_size=3))
        if i == 0:
            first = first + nts[1:]  # and every symbol is reachable
        alts.append(" ".join(first))
        for _ in range(draw(st.integers(0, 2))):
            alt = " ".join(draw(st.lists(st.sampled_from(["a", "b", ".+"] + nts), min_size=1, max_size=3)))
            if alt != x and alt not in alts:
                alts.append(alt)
        weights = draw(st.lists(st.integers(1, 9), min_size=len(alts), max_size=len(alts)))
        z = sum(weights)
        lines.append(f"{x} -> " + " | ".join(f"{a} ({w / z!r})" for a, w in zip(alts, weights)))
    return "\n".join(lines)


@settings(max_examples=150, deadline=None)
@given(grammars())
def test_render_parse_is_a_fixed_point(text):
    try:
        g = parse_grammar(text)
    except GrammarError:
        return
    once = render(g)
    assert parse_grammar(once) == g
    assert render(parse_grammar(once)) == once


@settings(max_examples=100, deadline=None)
@given(grammars())
def test_rule_probabilities_sum_to_one(text):
    try:
        g = parse_grammar(text)
    except GrammarError:
        return
    for lhs in g.nonterminals:
        assert math.fsum(r.prob for r in g.rules_for(lhs)) == pytest.approx(1.0, abs=1e-9)
