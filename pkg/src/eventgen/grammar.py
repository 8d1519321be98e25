"""Probabilistic context-free grammars: text format, validation, wildcards.

Grammar files look like::

    # comments run to end of line
    %wildcard_continuation 0.0
    S  -> NP VP
    NP -> D N
    D  -> the (0.9) | a (0.1)
    N  -> .+

Alternatives without an explicit ``(p)`` share whatever probability mass the
explicit ones leave for their left-hand side.  Any right-hand-side token that
never appears on a left-hand side is a terminal; ``.+`` is the wildcard
terminal, which stands for any non-empty run of vocabulary tokens.
"""
from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import count
from typing import Iterable, NamedTuple, Sequence

import numpy as np

WILDCARD = ".+"
ANY_TOKEN = "<any>"
PROB_TOL = 1e-9
DEFAULT_CONTINUATION = 0.1

NONTERMINAL = "nonterminal"
TERMINAL = "terminal"
WILDCARD_KIND = "wildcard"
ANY_KIND = "any"


class GrammarError(ValueError):
    """Raised for malformed or inconsistent grammars."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class Symbol(NamedTuple):
    kind: str
    name: str

    @property
    def is_nonterminal(self) -> bool:
        return self.kind == NONTERMINAL

    def __str__(self) -> str:
        return self.name


def nt(name: str) -> Symbol:
    return Symbol(NONTERMINAL, name)


def t(name: str) -> Symbol:
    return Symbol(TERMINAL, name)


class Rule(NamedTuple):
    lhs: str
    rhs: tuple[Symbol, ...]
    prob: float

    @property
    def is_unit(self) -> bool:
        """True for ``X -> Y`` with a single nonterminal on the right."""
        return len(self.rhs) == 1 and self.rhs[0].is_nonterminal

    def __str__(self) -> str:
        return f"{self.lhs} -> {' '.join(s.name for s in self.rhs)} ({self.prob!r})"


@dataclass(frozen=True, eq=False)
class Pcfg:
    """A validated, immutable PCFG.

    ``wildcard_vocab`` is set only on desugared grammars; it lists the tokens
    the hidden any-token terminal can stand for, each with weight
    ``1 / len(wildcard_vocab)``.
    """

    start: str
    rules: tuple[Rule, ...]
    wildcard_continuation: float = DEFAULT_CONTINUATION
    wildcard_vocab: tuple[str, ...] | None = None
    hidden: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        _validate(self)

    def __eq__(self, other):
        if not isinstance(other, Pcfg):
            return NotImplemented
        return (
            self.start == other.start
            and sorted(self.rules) == sorted(other.rules)
            and self.wildcard_continuation == other.wildcard_continuation
            and self.wildcard_vocab == other.wildcard_vocab
        )

    __hash__ = object.__hash__

    @cached_property
    def nonterminals(self) -> tuple[str, ...]:
        seen = dict.fromkeys([self.start] + [r.lhs for r in self.rules])
        return tuple(seen)

    @cached_property
    def terminals(self) -> frozenset[str]:
        return frozenset(
            s.name for r in self.rules for s in r.rhs if s.kind == TERMINAL
        )

    @cached_property
    def by_lhs(self) -> dict[str, tuple[Rule, ...]]:
        out: dict[str, list[Rule]] = defaultdict(list)
        for r in self.rules:
            out[r.lhs].append(r)
        return {k: tuple(v) for k, v in out.items()}

    @property
    def has_wildcards(self) -> bool:
        return any(s.kind == WILDCARD_KIND for r in self.rules for s in r.rhs)

    @property
    def is_desugared(self) -> bool:
        return not self.has_wildcards

    def rules_for(self, lhs: str) -> tuple[Rule, ...]:
        return self.by_lhs.get(lhs, ())

    def __str__(self) -> str:
        return render(self)


def _validate(g: Pcfg) -> None:
    if not g.rules:
        raise GrammarError("grammar has no rules")
    if not 0.0 <= g.wildcard_continuation < 1.0:
        raise GrammarError(
            f"wildcard continuation must lie in [0, 1), got {g.wildcard_continuation}"
        )
    lhs_set = {r.lhs for r in g.rules}
    if g.start not in lhs_set:
        raise GrammarError(f"start symbol {g.start!r} has no rules")
    if WILDCARD in lhs_set:
        raise GrammarError("the wildcard '.+' cannot appear on a left-hand side")

    seen = set()
    for r in g.rules:
        if not r.rhs:
            raise GrammarError(f"epsilon rule for {r.lhs!r} is not allowed")
        if not (0.0 < r.prob <= 1.0 + PROB_TOL) or not math.isfinite(r.prob):
            raise GrammarError(f"rule {r} has probability outside (0, 1]")
        key = (r.lhs, r.rhs)
        if key in seen:
            raise GrammarError(f"duplicate rule {r.lhs} -> {' '.join(map(str, r.rhs))}")
        seen.add(key)
        for s in r.rhs:
            if s.kind == NONTERMINAL and s.name not in lhs_set:
                raise GrammarError(f"nonterminal {s.name!r} has no rules")
            if s.kind == TERMINAL and s.name in lhs_set:
                raise GrammarError(f"{s.name!r} is used both as terminal and nonterminal")
            if s.kind == ANY_KIND and not g.wildcard_vocab:
                raise GrammarError("any-token terminal requires a wildcard vocabulary")

    totals: dict[str, float] = defaultdict(float)
    for r in g.rules:
        totals[r.lhs] += r.prob
    for lhs, total in totals.items():
        if abs(total - 1.0) > PROB_TOL:
            raise GrammarError(f"probabilities for {lhs!r} sum to {total!r}, not 1")

    by_lhs = defaultdict(list)
    for r in g.rules:
        by_lhs[r.lhs].append(r)

    reachable = {g.start}
    stack = [g.start]
    while stack:
        x = stack.pop()
        for r in by_lhs[x]:
            for s in r.rhs:
                if s.kind == NONTERMINAL and s.name not in reachable:
                    reachable.add(s.name)
                    stack.append(s.name)
    unreachable = sorted(lhs_set - reachable)
    if unreachable:
        raise GrammarError(f"unreachable nonterminals: {', '.join(unreachable)}")

    productive: set[str] = set()
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            if r.lhs in productive:
                continue
            if all(s.kind != NONTERMINAL or s.name in productive for s in r.rhs):
                productive.add(r.lhs)
                changed = True
    unproductive = sorted(lhs_set - productive)
    if unproductive:
        raise GrammarError(f"unproductive nonterminals: {', '.join(unproductive)}")


_PROB_RE = re.compile(r"\(\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*\)\s*$")


def parse_grammar(text: str, wildcard_continuation: float | None = None) -> Pcfg:
    """Parse grammar source text into a validated :class:`Pcfg`.

    ``wildcard_continuation`` overrides a ``%wildcard_continuation`` directive
    in the text; if neither is given the default of 0.1 applies.
    """
    if not text or not text.strip():
        raise GrammarError("empty grammar text")

    groups: list[tuple[str, list[tuple[list[str], float | None, int, int]]]] = []
    start = None
    continuation = DEFAULT_CONTINUATION
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if line.lstrip().startswith("%"):
            start, continuation = _directive(line, lineno, start, continuation)
            continue
        if "->" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise GrammarError("expected '->'", lineno, col)
        lhs_part, rhs_part = line.split("->", 1)
        lhs = lhs_part.strip()
        if not lhs or len(lhs.split()) != 1:
            raise GrammarError("left-hand side must be a single symbol", lineno, 1)
        if lhs == WILDCARD:
            raise GrammarError("the wildcard '.+' cannot appear on a left-hand side", lineno, 1)
        alts = []
        col = len(lhs_part) + 3
        for piece in rhs_part.split("|"):
            m = _PROB_RE.search(piece)
            prob = None
            body = piece
            if m:
                prob = float(m.group(1))
                body = piece[: m.start()]
            tokens = body.split()
            if not tokens:
                raise GrammarError(f"empty alternative for {lhs!r} (epsilon rules are not allowed)", lineno, col)
            if any("(" in tok or ")" in tok for tok in tokens):
                raise GrammarError("malformed probability annotation", lineno, col)
            alts.append((tokens, prob, lineno, col))
            col += len(piece) + 1
        groups.append((lhs, alts))

    if not groups:
        raise GrammarError("grammar has no rules")
    if wildcard_continuation is not None:
        continuation = wildcard_continuation

    lhs_names = {lhs for lhs, _ in groups}
    pending: dict[str, list[tuple[tuple[Symbol, ...], float | None, int, int]]] = defaultdict(list)
    order: list[str] = []
    for lhs, alts in groups:
        if lhs not in pending:
            order.append(lhs)
        for tokens, prob, lineno, col in alts:
            rhs = tuple(_symbol(tok, lhs_names) for tok in tokens)
            pending[lhs].append((rhs, prob, lineno, col))

    rules: list[Rule] = []
    for lhs in order:
        alts = pending[lhs]
        explicit = sum(p for _, p, _, _ in alts if p is not None)
        missing = [a for a in alts if a[1] is None]
        if missing:
            rest = 1.0 - explicit
            if rest <= PROB_TOL:
                _, _, lineno, col = missing[0]
                raise GrammarError(
                    f"no probability mass left for unannotated alternatives of {lhs!r}",
                    lineno, col,
                )
            share = rest / len(missing)
        for rhs, prob, lineno, col in alts:
            rules.append(Rule(lhs, rhs, share if prob is None else prob))

    return Pcfg(start or order[0], tuple(rules), continuation)


def _directive(line: str, lineno: int, start, continuation):
    parts = line.strip()[1:].split()
    if len(parts) != 2:
        raise GrammarError("directives take exactly one argument", lineno, 1)
    name, value = parts
    if name == "start":
        return value, continuation
    if name == "wildcard_continuation":
        try:
            return start, float(value)
        except ValueError:
            raise GrammarError(f"bad number {value!r}", lineno, line.index(value) + 1) from None
    raise GrammarError(f"unknown directive %{name}", lineno, 1)


def _symbol(tok: str, lhs_names: set[str]) -> Symbol:
    if tok == WILDCARD:
        return Symbol(WILDCARD_KIND, WILDCARD)
    if tok in lhs_names:
        return nt(tok)
    return t(tok)


def render(g: Pcfg) -> str:
    """Render a grammar back to the text format (exact float round trip)."""
    if g.wildcard_vocab is not None:
        raise ValueError("desugared grammars have no text form; render the source grammar")
    lines = []
    if g.wildcard_continuation != DEFAULT_CONTINUATION:
        lines.append(f"%wildcard_continuation {g.wildcard_continuation!r}")
    if g.rules[0].lhs != g.start:
        lines.append(f"%start {g.start}")
    for lhs, rules in g.by_lhs.items():
        alts = " | ".join(
            f"{' '.join(s.name for s in r.rhs)} ({r.prob!r})" for r in rules
        )
        lines.append(f"{lhs} -> {alts}")
    return "\n".join(lines) + "\n"


def desugar_wildcards(g: Pcfg, vocab: int | Iterable[str]) -> Pcfg:
    """Replace every ``.+`` occurrence with a geometric-length token run.

    Each occurrence gets a fresh nonterminal ``W`` with hidden rules
    ``W -> TOK W`` (probability = continuation) and ``W -> TOK``; ``TOK``
    matches any token of ``vocab`` with probability ``1 / len(vocab)``.  With
    continuation 0 the recursive rule is dropped and ``W`` is a single token.

    ``vocab`` may be an integer, in which case placeholder tokens are used.
    """
    if isinstance(vocab, (int, np.integer)):
        if vocab < 1:
            raise ValueError("vocab_size must be >= 1")
        tokens = tuple(f"<w{i}>" for i in range(int(vocab)))
    else:
        tokens = tuple(dict.fromkeys(vocab))
        if not tokens:
            raise ValueError("wildcard vocabulary is empty")
    if not g.has_wildcards:
        if g.wildcard_vocab is not None:
            return g
        return replace(g, wildcard_vocab=tokens) if _uses_any(g) else g

    lam = g.wildcard_continuation
    names = set(g.nonterminals) | set(g.terminals)
    fresh = count()

    def new_name(base):
        while True:
            name = f"{base}{next(fresh)}"
            if name not in names:
                names.add(name)
                return name

    tok_nt = new_name("_TOK")
    rules: list[Rule] = []
    hidden = {tok_nt}
    extra: list[Rule] = []
    for r in g.rules:
        rhs = []
        for s in r.rhs:
            if s.kind != WILDCARD_KIND:
                rhs.append(s)
                continue
            w = new_name("_W")
            hidden.add(w)
            if lam > 0:
                extra.append(Rule(w, (nt(tok_nt), nt(w)), lam))
            extra.append(Rule(w, (nt(tok_nt),), 1.0 - lam))
            rhs.append(nt(w))
        rules.append(Rule(r.lhs, tuple(rhs), r.prob))
    extra.append(Rule(tok_nt, (Symbol(ANY_KIND, ANY_TOKEN),), 1.0))
    return Pcfg(
        g.start,
        tuple(rules + extra),
        lam,
        wildcard_vocab=tokens,
        hidden=frozenset(hidden),
    )


def _uses_any(g: Pcfg) -> bool:
    return any(s.kind == ANY_KIND for r in g.rules for s in r.rhs)


class EnumerationCapExceeded(RuntimeError):
    pass


def language_enumerate(
    g: Pcfg, max_len: int, cap: int = 2_000_000
) -> list[tuple[str, float]]:
    """Every string of at most ``max_len`` tokens with its exact probability.

    Works length by length: the strings of length ``n`` derivable from a
    symbol sequence are assembled from strings of the shorter pieces, so the
    result is exact for the truncated language.  ``cap`` bounds the total
    number of (symbol, string) table entries built along the way.

    Returns ``(space-joined string, probability)`` pairs ordered by length,
    then lexicographically.
    """
    if g.has_wildcards:
        raise ValueError("desugar wildcards before enumerating")
    if max_len > 12:
        raise ValueError("max_len must be <= 12")
    table = _length_tables(g, max_len, cap)
    out = []
    for n in range(1, max_len + 1):
        for s, p in sorted(table[g.start][n].items()):
            if p > 0:
                out.append((" ".join(s), p))
    return out


def _length_tables(g: Pcfg, max_len: int, cap: int):
    nts = list(g.nonterminals)
    idx = {x: i for i, x in enumerate(nts)}
    # Unit rules keep the length, so they are folded in via their closure.
    unit = np.zeros((len(nts), len(nts)))
    for r in g.rules:
        if r.is_unit:
            unit[idx[r.lhs], idx[r.rhs[0].name]] += r.prob
    closure = np.linalg.inv(np.eye(len(nts)) - unit)

    vocab = g.wildcard_vocab or ()
    table: dict[str, list[dict]] = {x: [dict() for _ in range(max_len + 1)] for x in nts}
    seq_memo: dict[tuple, dict] = {}
    budget = [cap]

    def charge(k):
        budget[0] -= k
        if budget[0] < 0:
            raise EnumerationCapExceeded(f"enumeration exceeded cap of {cap} entries")

    def sym_dist(s: Symbol, n: int) -> dict:
        if s.kind == NONTERMINAL:
            return table[s.name][n]
        if n != 1:
            return {}
        if s.kind == ANY_KIND:
            return {(v,): 1.0 / len(vocab) for v in vocab}
        return {(s.name,): 1.0}

    def seq_dist(rhs: tuple[Symbol, ...], n: int) -> dict:
        # callers only ask for lengths whose nonterminal tables are complete
        key = (rhs, n)
        if key in seq_memo:
            return seq_memo[key]
        if len(rhs) == 1:
            res = sym_dist(rhs[0], n)
        else:
            res: dict = defaultdict(float)
            first, rest = rhs[0], rhs[1:]
            for k in range(1, n - len(rest) + 1):
                left = sym_dist(first, k)
                if not left:
                    continue
                right = seq_dist(rest, n - k)
                if not right:
                    continue
                charge(len(left) * len(right))
                for a, pa in left.items():
                    for b, pb in right.items():
                        res[a + b] += pa * pb
            res = dict(res)
        seq_memo[key] = res
        return res

    for n in range(1, max_len + 1):
        direct: dict[str, dict] = {}
        for x in nts:
            acc: dict = defaultdict(float)
            for r in g.rules_for(x):
                if r.is_unit:
                    continue
                for s, p in seq_dist(r.rhs, n).items():
                    acc[s] += r.prob * p
            direct[x] = acc
        for x in nts:
            acc: dict = defaultdict(float)
            for y in nts:
                w = closure[idx[x], idx[y]]
                if w == 0.0:
                    continue
                for s, p in direct[y].items():
                    acc[s] += float(w) * p
            charge(len(acc))
            table[x][n] = dict(acc)
    return table


def event_grammar(verb_past: str) -> Pcfg:
    """The monoclausal transitive ``the N <verb> the N`` grammar.

    Nouns are single wildcard tokens (continuation 0), so every position other
    than the two nouns is forced.
    """
    return parse_grammar(
        "S -> NP VP\nNP -> D N\nVP -> V NP\n"
        f"V -> {verb_past}\nD -> the\nN -> .+\n",
        wildcard_continuation=0.0,
    )


def pcfg_from_rules(
    rules: Sequence[tuple[str, Sequence[str], float]],
    start: str | None = None,
    wildcard_continuation: float = DEFAULT_CONTINUATION,
) -> Pcfg:
    """Build a grammar from ``(lhs, rhs tokens, prob)`` triples."""
    lhs_names = {lhs for lhs, _, _ in rules}
    built = tuple(
        Rule(lhs, tuple(_symbol(tok, lhs_names) for tok in rhs), float(p))
        for lhs, rhs, p in rules
    )
    return Pcfg(start or built[0].lhs, built, wildcard_continuation)
