"""Incremental probabilistic Earley parsing with prefix probabilities.

Chart items carry a forward probability (mass of all partial derivations that
reach the item) and an inner probability (mass of the item's own span).
Left recursion and unit-production chains are summed in closed form through
the left-corner and unit closure matrices, so the chart stays finite for any
epsilon-free grammar.

Every column is rescaled by its prefix probability: the stored values are the
true forward/inner probabilities divided by ``P(prefix up to this column)``
(inner values by the ratio of the column and origin prefix probabilities).
That keeps long prefixes from underflowing, and the log prefix probability
is tracked separately.
"""
from __future__ import annotations

import heapq
import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from .dist import TokenDist
from .grammar import ANY_KIND, NONTERMINAL, GrammarError, Pcfg

_ANY = "\x00any"
_CLOSURE_TOL = 1e-9


class RejectedToken(ValueError):
    """The grammar gives the token zero probability after the current prefix."""

    def __init__(self, token: str, allowed: int, prefix=()):
        self.token = token
        self.allowed = allowed
        self.prefix = tuple(prefix)
        super().__init__(
            f"token {token!r} is not allowed after {' '.join(prefix)!r} "
            f"({allowed} tokens allowed)"
        )


class _Compiled:
    """Integer-indexed grammar tables shared by every state of one grammar."""

    def __init__(self, g: Pcfg):
        if g.has_wildcards:
            raise GrammarError("desugar wildcards before building a parser")
        self.nts = list(g.nonterminals)
        self.nt_index = {x: i for i, x in enumerate(self.nts)}
        n = len(self.nts)

        self.lhs: list[int] = []
        self.rhs: list[tuple] = []
        self.prob: list[float] = []
        self.is_unit: list[bool] = []
        self.by_lhs: list[list[int]] = [[] for _ in range(n)]
        for r in g.rules:
            enc = tuple(
                self.nt_index[s.name] if s.kind == NONTERMINAL
                else (_ANY if s.kind == ANY_KIND else s.name)
                for s in r.rhs
            )
            rid = len(self.rhs)
            self.lhs.append(self.nt_index[r.lhs])
            self.rhs.append(enc)
            self.prob.append(r.prob)
            self.is_unit.append(r.is_unit)
            self.by_lhs[self.nt_index[r.lhs]].append(rid)
        # the dummy rule "-> start" seeds column 0 and collects complete parses
        self.dummy = len(self.rhs)
        self.lhs.append(-1)
        self.rhs.append((self.nt_index[g.start],))
        self.prob.append(1.0)
        self.is_unit.append(True)

        self.vocab = tuple(g.wildcard_vocab or ())
        self.vocab_set = frozenset(self.vocab)
        self.any_weight = 1.0 / len(self.vocab) if self.vocab else 0.0

        left = np.zeros((n, n))
        unit = np.zeros((n, n))
        mean = np.zeros((n, n))
        for rid in range(self.dummy):
            x, rhs, p = self.lhs[rid], self.rhs[rid], self.prob[rid]
            if isinstance(rhs[0], int):
                left[x, rhs[0]] += p
            if self.is_unit[rid]:
                unit[x, rhs[0]] += p
            for s in rhs:
                if isinstance(s, int):
                    mean[x, s] += p
        if _spectral_radius(mean) > 1.0 + _CLOSURE_TOL:
            raise GrammarError(
                "grammar is inconsistent: expected number of child nonterminals exceeds 1"
            )
        self.left_closure = _closure(left, "left-corner")
        self.unit_closure = _closure(unit, "unit-production")
        # completing Y feeds every item waiting on Z with Z =>unit* Y
        self.unit_into = [
            [(z, float(self.unit_closure[z, y])) for z in range(n) if self.unit_closure[z, y] > 0]
            for y in range(n)
        ]
        self.n = n


def _spectral_radius(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def _closure(m: np.ndarray, what: str) -> np.ndarray:
    if _spectral_radius(m) >= 1.0 - _CLOSURE_TOL:
        raise GrammarError(f"{what} relation has cyclic mass >= 1; closure is singular")
    r = np.linalg.inv(np.eye(len(m)) - m)
    # closure entries are sums of probabilities of chains; clip round-off
    r[np.abs(r) < 1e-15] = 0.0
    if not np.all(np.isfinite(r)) or np.any(r < 0):
        raise GrammarError(f"{what} closure is not finite and non-negative")
    return r


_compiled_cache: "weakref.WeakKeyDictionary[Pcfg, _Compiled]" = weakref.WeakKeyDictionary()


def _compile(g: Pcfg) -> _Compiled:
    c = _compiled_cache.get(g)
    if c is None or c.nts != list(g.nonterminals):
        c = _Compiled(g)
        _compiled_cache[g] = c
    return c


@dataclass(frozen=True, eq=False)
class _Column:
    items: dict            # (rule, dot, origin) -> [forward, inner]
    waiting: dict          # nonterminal index -> item keys with that symbol after the dot
    scan: dict             # terminal (or _ANY) -> item keys with that terminal after the dot
    mass: dict             # terminal (or _ANY) -> summed forward probability
    eos: float             # forward probability of the complete parse
    log_prefix: float
    _dist: list = field(default_factory=list)


def _build_index(c: _Compiled, items: dict):
    waiting: dict = {}
    scan: dict = {}
    mass: dict = {}
    eos = 0.0
    for key, (alpha, _) in items.items():
        rid, dot, origin = key
        rhs = c.rhs[rid]
        if dot == len(rhs):
            if rid == c.dummy:
                eos += alpha
            continue
        sym = rhs[dot]
        if isinstance(sym, int):
            waiting.setdefault(sym, []).append(key)
        else:
            scan.setdefault(sym, []).append(key)
            mass[sym] = mass.get(sym, 0.0) + alpha
    return waiting, scan, mass, eos


def _predict(c: _Compiled, items: dict, pos: int) -> None:
    demand = np.zeros(c.n)
    for (rid, dot, origin), (alpha, _) in items.items():
        rhs = c.rhs[rid]
        if dot < len(rhs) and isinstance(rhs[dot], int):
            demand[rhs[dot]] += alpha
    if not demand.any():
        return
    predicted = demand @ c.left_closure
    for y in np.flatnonzero(predicted > 0):
        fy = float(predicted[y])
        for rid in c.by_lhs[y]:
            p = c.prob[rid]
            items[(rid, 0, pos)] = [fy * p, p]


def _complete(c: _Compiled, items: dict, columns) -> None:
    heap = []
    queued = set()
    for key in items:
        rid, dot, origin = key
        if dot == len(c.rhs[rid]) and not c.is_unit[rid]:
            heapq.heappush(heap, (-origin, key))
            queued.add(key)
    while heap:
        _, key = heapq.heappop(heap)
        rid, _, j = key
        inner = items[key][1]
        if inner == 0.0:
            continue
        source = columns[j]
        for z, ru in c.unit_into[c.lhs[rid]]:
            for wkey in source.waiting.get(z, ()):
                wf, wi = source.items[wkey]
                nkey = (wkey[0], wkey[1] + 1, wkey[2])
                cell = items.get(nkey)
                if cell is None:
                    cell = items[nkey] = [0.0, 0.0]
                cell[0] += wf * ru * inner
                cell[1] += wi * ru * inner
                if (
                    nkey not in queued
                    and nkey[1] == len(c.rhs[nkey[0]])
                    and not c.is_unit[nkey[0]]
                ):
                    heapq.heappush(heap, (-nkey[2], nkey))
                    queued.add(nkey)


def _freeze(c: _Compiled, items: dict, log_prefix: float) -> _Column:
    waiting, scan, mass, eos = _build_index(c, items)
    return _Column(items, waiting, scan, mass, eos, log_prefix)


@dataclass(frozen=True, eq=False)
class ParserState:
    """An immutable Earley chart over the tokens consumed so far."""

    grammar: Pcfg
    consumed: tuple[str, ...]
    columns: tuple[_Column, ...]

    @property
    def _c(self) -> _Compiled:
        return _compile(self.grammar)

    @property
    def left_corner_closure(self) -> np.ndarray:
        return self._c.left_closure

    @property
    def unit_closure(self) -> np.ndarray:
        return self._c.unit_closure

    def advance(self, token: str) -> "ParserState":
        return advance(self, token)

    def next_dist(self) -> TokenDist:
        return next_dist(self)

    def prefix_probability(self) -> float:
        return prefix_probability(self)

    def log_prefix_probability(self) -> float:
        return self.columns[-1].log_prefix

    def string_probability(self) -> float:
        return string_probability(self)

    def allows(self, token: str) -> bool:
        col = self.columns[-1]
        if col.mass.get(token, 0.0) > 0:
            return True
        return token in self._c.vocab_set and col.mass.get(_ANY, 0.0) > 0


def init(g: Pcfg) -> ParserState:
    """Parser state for the empty prefix of ``g`` (which must be desugared)."""
    c = _compile(g)
    items = {(c.dummy, 0, 0): [1.0, 1.0]}
    _predict(c, items, 0)
    return ParserState(g, (), (_freeze(c, items, 0.0),))


def advance(s: ParserState, token: str) -> ParserState:
    """Consume ``token``; the input state is left untouched."""
    c = s._c
    prev = s.columns[-1]
    pos = len(s.columns)
    items: dict = {}
    for sym, weight in ((token, 1.0), (_ANY, c.any_weight if token in c.vocab_set else 0.0)):
        if weight == 0.0:
            continue
        for key in prev.scan.get(sym, ()):
            alpha, inner = prev.items[key]
            nkey = (key[0], key[1] + 1, key[2])
            cell = items.get(nkey)
            if cell is None:
                cell = items[nkey] = [0.0, 0.0]
            cell[0] += alpha * weight
            cell[1] += inner * weight
    step = math.fsum(v[0] for v in items.values())
    if step <= 0.0:
        raise RejectedToken(token, len(next_dist(s).support()), s.consumed)
    for v in items.values():
        v[0] /= step
        v[1] /= step
    _complete(c, items, s.columns)
    _predict(c, items, pos)
    col = _freeze(c, items, prev.log_prefix + math.log(step))
    return ParserState(s.grammar, s.consumed + (token,), s.columns + (col,))


def next_dist(s: ParserState) -> TokenDist:
    """Conditional distribution of the next token (or end) given the prefix."""
    col = s.columns[-1]
    if col._dist:
        return col._dist[0]
    c = s._c
    entries: dict[str, float] = {}
    any_mass = col.mass.get(_ANY, 0.0)
    if any_mass > 0:
        share = any_mass * c.any_weight
        entries = dict.fromkeys(c.vocab, share)
    for sym, m in col.mass.items():
        if sym == _ANY or m <= 0:
            continue
        entries[sym] = entries.get(sym, 0.0) + m
    domain = len(c.vocab_set.union(col.mass.keys()) - {_ANY}) + 1
    d = TokenDist(entries, col.eos, domain)
    col._dist.append(d)
    return d


def prefix_probability(s: ParserState) -> float:
    """Total grammar probability of strings starting with ``s.consumed``."""
    return math.exp(s.columns[-1].log_prefix)


def string_probability(s: ParserState) -> float:
    """Grammar probability of ``s.consumed`` as a complete string."""
    col = s.columns[-1]
    if col.eos <= 0:
        return 0.0
    return col.eos * math.exp(col.log_prefix)


def parse(g: Pcfg, tokens) -> ParserState:
    """Advance a fresh parser over ``tokens``."""
    s = init(g)
    for tok in tokens:
        s = advance(s, tok)
    return s


def string_prob(g: Pcfg, tokens) -> float:
    """Probability of ``tokens`` under ``g``; 0 for strings outside the language."""
    try:
        return string_probability(parse(g, tokens))
    except RejectedToken:
        return 0.0
