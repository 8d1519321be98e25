"""Grammar-constrained sampling from a next-token language model.

At every step the LM's next-token distribution is multiplied pointwise by the
parser's continuation distribution (end-of-sentence included), renormalized,
passed through the sampler chain, and sampled.  Positions where the grammar
allows a single token are therefore forced, and free positions follow the LM.
"""
from __future__ import annotations

import json
import math
import re
from bisect import bisect_right
from dataclasses import asdict, dataclass, field, replace
from itertools import accumulate
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import earley
from .dist import EOS, TokenDist
from .grammar import EnumerationCapExceeded, Pcfg, desugar_wildcards, event_grammar, parse_grammar
from .lm import LanguageModel, SamplerConfig, apply_sampler_chain, detokenize, surprisal, token_prob, tokenize

PROMPT_TEMPLATE = 'An example of a sentence containing the verb "{{VERB}}" in the sense "{{SENSE_GLOSS}}":'

_SLOT_RE = re.compile(r"\{\{(VERB|SENSE_GLOSS)\}\}")


class DeadEnd(RuntimeError):
    """No token has mass under both the LM and the grammar."""

    def __init__(self, prefix):
        self.prefix = tuple(prefix)
        super().__init__(f"dead end after {' '.join(self.prefix)!r}: LM and grammar share no mass")


class RejectionExhausted(RuntimeError):
    pass


class Sample(NamedTuple):
    tokens: tuple[str, ...]
    finished: bool  # True if the sampler chose end-of-sentence


def render_prompt(template: str, verb: str, gloss: str) -> list[str]:
    """Fill ``{{VERB}}`` and ``{{SENSE_GLOSS}}`` in one pass and tokenize."""
    values = {"VERB": verb, "SENSE_GLOSS": gloss}
    return tokenize(_SLOT_RE.sub(lambda m: values[m.group(1)], template))


def wildcard_vocab(lm: LanguageModel) -> list[str]:
    """Tokens a grammar wildcard may produce: the LM's words minus UNK."""
    return [t for t in lm.vocab.words if t != lm.vocab.unk]


def prepare_grammar(g: Pcfg, lm: LanguageModel) -> Pcfg:
    """Desugar ``g`` against ``lm``'s vocabulary if it still has wildcards."""
    return desugar_wildcards(g, wildcard_vocab(lm)) if g.has_wildcards else g


class _States:
    """Memo of parser states by prefix, shared across samples of one grammar."""

    def __init__(self, g: Pcfg):
        self.states = {(): earley.init(g)}

    def get(self, prefix: tuple[str, ...]) -> earley.ParserState:
        s = self.states.get(prefix)
        if s is None:
            s = self.get(prefix[:-1]).advance(prefix[-1])
            self.states[prefix] = s
        return s


def constrained_dist(
    lm: LanguageModel, state: earley.ParserState, context: Sequence[str]
) -> TokenDist:
    """Renormalized product of the LM and grammar distributions (may raise DeadEnd)."""
    d_lm = lm.next_token_dist(list(context))
    d_c = state.next_dist()
    weights = {}
    for tok, c in d_c.entries.items():
        if c > 0:
            w = token_prob(lm, d_lm, tok) * c
            if w > 0:
                weights[tok] = w
    eos = d_lm.eos_prob * d_c.eos_prob
    total = math.fsum(weights.values()) + eos
    if total <= 0:
        raise DeadEnd(state.consumed)
    return TokenDist({t: w / total for t, w in weights.items()}, eos / total, d_c.domain_size)


def _draw(d: TokenDist, rng: np.random.Generator) -> str:
    toks = list(d.entries) + [EOS]
    cum = list(accumulate(d.entries.values()))
    cum.append((cum[-1] if cum else 0.0) + d.eos_prob)
    i = bisect_right(cum, rng.random() * cum[-1])
    return toks[min(i, len(toks) - 1)]


def sample_constrained(
    lm: LanguageModel,
    g: Pcfg,
    prompt: Sequence[str] = (),
    cfg: SamplerConfig = SamplerConfig(),
    rng: np.random.Generator | None = None,
    states: _States | None = None,
) -> Sample:
    """Draw one sentence whose every prefix stays inside the grammar.

    The returned tokens exclude the prompt.  ``rng`` defaults to a generator
    seeded with ``cfg.seed``.
    """
    g = prepare_grammar(g, lm)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    states = states or _States(g)
    prompt = list(prompt)
    out: list[str] = []
    while len(out) < cfg.max_tokens:
        state = states.get(tuple(out))
        q = constrained_dist(lm, state, prompt + out)
        tok = _draw(apply_sampler_chain(q, cfg, out), rng)
        if tok == EOS:
            return Sample(tuple(out), True)
        out.append(tok)
    return Sample(tuple(out), False)


def _sample_free(lm, prompt, cfg, rng, state):
    """One unconstrained draw; stops early once the grammar rules it out."""
    out: list[str] = []
    while len(out) < cfg.max_tokens:
        d = apply_sampler_chain(lm.next_token_dist(prompt + out), cfg, out)
        tok = _draw(d, rng)
        if tok == EOS:
            return tuple(out), state is not None and state.string_probability() > 0
        out.append(tok)
        if state is not None:
            if not state.allows(tok):
                # the rest of the draw cannot change the outcome
                return tuple(out), False
            state = state.advance(tok)
    return tuple(out), False


def rejection_trial(lm, g, prompt, cfg, rng) -> tuple[tuple[str, ...], bool]:
    """Sample once from the (chain-filtered) LM; report whether it is in L(G)."""
    g = prepare_grammar(g, lm)
    return _sample_free(lm, list(prompt), cfg, rng, earley.init(g))


@dataclass
class RejectionResult:
    tokens: tuple[str, ...]
    attempts: int


def sample_rejection(
    lm: LanguageModel,
    g: Pcfg,
    prompt: Sequence[str] = (),
    cfg: SamplerConfig = SamplerConfig(),
    max_attempts: int = 10_000,
    rng: np.random.Generator | None = None,
) -> RejectionResult:
    """Sample from the LM until a string in the grammar's language turns up."""
    g = prepare_grammar(g, lm)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    start = earley.init(g)
    prompt = list(prompt)
    for attempt in range(1, max_attempts + 1):
        toks, ok = _sample_free(lm, prompt, cfg, rng, start)
        if ok:
            return RejectionResult(toks, attempt)
    raise RejectionExhausted(f"no sample in the language after {max_attempts} attempts")


@dataclass
class DivergenceReport:
    tv: float
    local: dict[tuple[str, ...], float]     # constrained sampler, renormalized
    globl: dict[tuple[str, ...], float]     # LM conditioned on the language
    local_mass: float                        # constrained mass ending in EOS
    global_mass: float                       # LM mass of the language


def divergence_report(
    lm: LanguageModel,
    g: Pcfg,
    prompt: Sequence[str] = (),
    cfg: SamplerConfig = SamplerConfig(),
    cap: int = 200_000,
) -> DivergenceReport:
    """Exact total-variation distance between the constrained sampler's output
    distribution and the LM distribution conditioned on the language.

    Both sides use the sampler chain and the ``max_tokens`` limit; strings cut
    off by the limit, or dead ends, are dropped and the rest renormalized.
    """
    g = prepare_grammar(g, lm)
    states = _States(g)
    prompt = list(prompt)
    budget = [cap]

    def tick():
        budget[0] -= 1
        if budget[0] < 0:
            raise EnumerationCapExceeded(f"more than {cap} prefixes explored")

    local: dict[tuple[str, ...], float] = {}
    stack = [((), 1.0)]
    while stack:
        prefix, mass = stack.pop()
        tick()
        try:
            q = constrained_dist(lm, states.get(prefix), prompt + list(prefix))
        except DeadEnd:
            continue
        for tok, p in apply_sampler_chain(q, cfg, prefix).items():
            if p <= 0:
                continue
            if tok == EOS:
                local[prefix] = local.get(prefix, 0.0) + mass * p
            elif len(prefix) < cfg.max_tokens:
                stack.append((prefix + (tok,), mass * p))

    globl: dict[tuple[str, ...], float] = {}
    stack = [((), 1.0)]
    while stack:
        prefix, mass = stack.pop()
        tick()
        state = states.get(prefix)
        d = apply_sampler_chain(lm.next_token_dist(prompt + list(prefix)), cfg, prefix)
        for tok, p in d.items():
            if p <= 0:
                continue
            if tok == EOS:
                if state.string_probability() > 0:
                    globl[prefix] = globl.get(prefix, 0.0) + mass * p
            elif len(prefix) < cfg.max_tokens and state.allows(tok):
                stack.append((prefix + (tok,), mass * p))

    zl = math.fsum(local.values())
    zg = math.fsum(globl.values())
    if zl <= 0 or zg <= 0:
        raise ValueError("one of the distributions has no mass on the language")
    ln = {k: v / zl for k, v in local.items()}
    gn = {k: v / zg for k, v in globl.items()}
    keys = set(ln) | set(gn)
    tv = 0.5 * math.fsum(abs(ln.get(k, 0.0) - gn.get(k, 0.0)) for k in keys)
    return DivergenceReport(tv, ln, gn, zl, zg)


@dataclass
class GenRequest:
    verb: str
    verb_past: str
    sense_gloss: str
    grammar: Pcfg | None = None
    prompt_template: str = PROMPT_TEMPLATE
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    n_unique: int = 10
    n_keep: int = 4
    max_seeds: int = 100
    max_temps: int = 100
    temp_step: float = 0.1
    sense_id: str = ""

    def __post_init__(self):
        if self.grammar is None:
            self.grammar = event_grammar(self.verb_past)
        if self.n_keep > self.n_unique:
            raise ValueError("n_keep must not exceed n_unique")
        if self.temp_step <= 0:
            raise ValueError("temp_step must be positive")

    @classmethod
    def from_json(cls, d: Mapping, base_dir: Path | str = ".") -> "GenRequest":
        """Read one request line; the grammar may be inline text or a path."""
        d = dict(d)
        grammar = None
        if "grammar" in d:
            grammar = parse_grammar(d.pop("grammar"))
        elif "grammar_path" in d:
            grammar = parse_grammar(
                (Path(base_dir) / d.pop("grammar_path")).read_text(encoding="utf-8")
            )
        sampler = SamplerConfig.from_dict(d.pop("sampler", {}))
        return cls(grammar=grammar, sampler=sampler, **d)


@dataclass
class GenSentence:
    tokens: tuple[str, ...]
    text: str
    surprisal: float
    seed: int
    temperature: float


@dataclass
class GenResult:
    sentences: list[GenSentence]
    exhausted: bool
    attempts: int = 0
    n_unique_found: int = 0
    dead_ends: int = 0
    verb: str = ""
    sense_id: str = ""
    sense_gloss: str = ""

    def to_json(self) -> dict:
        d = asdict(self)
        for s in d["sentences"]:
            s["tokens"] = list(s["tokens"])
        return d


def generate_unique(req: GenRequest, lm: LanguageModel) -> GenResult:
    """Collect distinct constrained samples, then keep the least surprising.

    The seed goes up by one per sampler call.  After ``max_seeds`` calls at a
    temperature without enough distinct sentences the temperature rises by
    ``temp_step``; the loop gives up after ``max_temps`` temperatures.
    """
    g = prepare_grammar(req.grammar, lm)
    states = _States(g)
    prompt = render_prompt(req.prompt_template, req.verb, req.sense_gloss)
    base = req.sampler
    found: dict[tuple[str, ...], GenSentence] = {}
    attempts = dead = 0
    done = False
    for ti in range(req.max_temps):
        temperature = round(base.temperature + ti * req.temp_step, 10)
        for _ in range(req.max_seeds):
            seed = base.seed + attempts
            attempts += 1
            cfg = replace(base, temperature=temperature, seed=seed)
            try:
                s = sample_constrained(lm, g, prompt, cfg, states=states)
            except DeadEnd:
                dead += 1
                continue
            if not s.finished or not s.tokens:
                continue
            key = tuple(t.casefold() for t in s.tokens)
            if key not in found:
                found[key] = GenSentence(s.tokens, detokenize(s.tokens), 0.0, seed, temperature)
                if len(found) >= req.n_unique:
                    done = True
                    break
        if done:
            break

    scored = [
        replace(gs, surprisal=surprisal(lm, gs.tokens, prompt)) for gs in found.values()
    ]
    scored.sort(key=lambda gs: (gs.surprisal, gs.seed))
    return GenResult(
        scored[: req.n_keep],
        exhausted=len(found) < req.n_unique,
        attempts=attempts,
        n_unique_found=len(found),
        dead_ends=dead,
        verb=req.verb,
        sense_id=req.sense_id,
        sense_gloss=req.sense_gloss,
    )


def write_results(results, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")
