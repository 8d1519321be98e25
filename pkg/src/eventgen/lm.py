"""Next-token language models, surprisal, and the sampler transform chain."""
from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .dist import EOS, UNK, TokenDist

BOS = "<s>"
NGRAM_FORMAT = "eventgen-ngram"
TABLE_FORMAT = "eventgen-table"
FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]")
_TERMINAL_PUNCT = {".", "!", "?"}


def tokenize(text: str, lower: bool = True) -> list[str]:
    """Word tokens; punctuation marks are separate tokens and sentence-final
    ``. ! ?`` are dropped.  ``lower=False`` keeps case, for prompts whose
    wording differs only in emphasis."""
    toks = _TOKEN_RE.findall(text.lower() if lower else text)
    while toks and toks[-1] in _TERMINAL_PUNCT:
        toks.pop()
    return toks


def detokenize(tokens: Sequence[str]) -> str:
    """Display form: first word capitalized, final period."""
    if not tokens:
        return ""
    words = list(tokens)
    words[0] = words[0][:1].upper() + words[0][1:]
    return " ".join(words) + "."


class Vocab:
    """Ordered token inventory; always contains ``UNK`` and ``EOS``."""

    def __init__(self, tokens: Iterable[str], unk: str = UNK, eos: str = EOS):
        ordered = list(dict.fromkeys(t for t in tokens if t not in (unk, eos)))
        self.unk = unk
        self.eos = eos
        self.tokens: tuple[str, ...] = tuple(ordered) + (unk, eos)
        self.ids = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self.ids

    def __iter__(self):
        return iter(self.tokens)

    @property
    def words(self) -> tuple[str, ...]:
        """Every token except ``EOS``."""
        return self.tokens[:-1]

    def map(self, tok: str) -> str:
        return tok if tok in self.ids else self.unk


@runtime_checkable
class LanguageModel(Protocol):
    vocab: Vocab

    def next_token_dist(self, prefix: Sequence[str]) -> TokenDist: ...


class NGramModel:
    """Add-k smoothed word n-gram model over ``vocab``."""

    def __init__(self, order: int, counts: Mapping, vocab: Vocab, smoothing_k: float = 0.1):
        if order < 1:
            raise ValueError("order must be >= 1")
        if smoothing_k <= 0:
            raise ValueError("smoothing_k must be positive")
        self.order = order
        self.vocab = vocab
        self.smoothing_k = float(smoothing_k)
        self.counts: dict[tuple[str, ...], dict[str, int]] = {
            tuple(ctx): dict(row) for ctx, row in counts.items()
        }
        self._totals = {ctx: sum(row.values()) for ctx, row in self.counts.items()}
        self._dists: dict[tuple[str, ...], TokenDist] = {}

    def _context(self, prefix: Sequence[str]) -> tuple[str, ...]:
        n = self.order - 1
        if n == 0:
            return ()
        # the vocabulary is lowercase, so case-preserved prompts are folded here
        mapped = [self.vocab.map(t.lower()) for t in prefix[-n:]]
        return (BOS,) * (n - len(mapped)) + tuple(mapped)

    def prob(self, token: str, prefix: Sequence[str]) -> float:
        ctx = self._context(prefix)
        row = self.counts.get(ctx, {})
        denom = self._totals.get(ctx, 0) + self.smoothing_k * len(self.vocab)
        tok = token if token == EOS else self.vocab.map(token)
        return (row.get(tok, 0) + self.smoothing_k) / denom

    def next_token_dist(self, prefix: Sequence[str]) -> TokenDist:
        ctx = self._context(prefix)
        d = self._dists.get(ctx)
        if d is None:
            row = self.counts.get(ctx, {})
            k = self.smoothing_k
            denom = self._totals.get(ctx, 0) + k * len(self.vocab)
            probs = {t: (row.get(t, 0) + k) / denom for t in self.vocab.tokens}
            d = self._dists[ctx] = TokenDist.from_dict(probs, len(self.vocab))
        return d

    def to_json(self) -> dict:
        return {
            "format": NGRAM_FORMAT,
            "version": FORMAT_VERSION,
            "order": self.order,
            "smoothing_k": self.smoothing_k,
            "vocab": list(self.vocab.tokens[:-2]),
            "counts": [
                [list(ctx), dict(sorted(row.items()))]
                for ctx, row in sorted(self.counts.items())
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "NGramModel":
        if data.get("format") != NGRAM_FORMAT or data.get("version") != FORMAT_VERSION:
            raise ValueError("not an n-gram model file of a supported version")
        counts = {tuple(ctx): row for ctx, row in data["counts"]}
        return cls(data["order"], counts, Vocab(data["vocab"]), data["smoothing_k"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False), encoding="utf-8")


def train_ngram(
    corpus: Iterable[Sequence[str] | str], order: int = 3, smoothing_k: float = 0.1
) -> NGramModel:
    """Count n-grams over sentences (token lists, or strings to tokenize)."""
    sents = [tokenize(s) if isinstance(s, str) else list(s) for s in corpus]
    sents = [s for s in sents if s]
    if not sents:
        raise ValueError("corpus is empty")
    vocab = Vocab(sorted({t for s in sents for t in s}))
    counts: dict[tuple[str, ...], Counter] = defaultdict(Counter)
    n = order - 1
    for s in sents:
        padded = [BOS] * n + s + [EOS]
        for i in range(n, len(padded)):
            counts[tuple(padded[i - n:i])][padded[i]] += 1
    return NGramModel(order, counts, vocab, smoothing_k)


def read_corpus(path) -> list[list[str]]:
    """One sentence per line, UTF-8; blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        return [toks for toks in (tokenize(line) for line in fh) if toks]


class TableLM:
    """A lookup-table model for deterministic tests.

    ``table`` maps a context (space-joined tokens) to a ``token -> prob`` row;
    ``EOS`` is spelled ``</s>``.  Lookup uses the longest suffix of the prefix
    present in the table, down to the empty context ``""``.  Rows are
    renormalized on load.
    """

    def __init__(self, table: Mapping[str, Mapping[str, float]]):
        self.table: dict[tuple[str, ...], dict[str, float]] = {}
        tokens = []
        for ctx, row in table.items():
            z = math.fsum(row.values())
            if z <= 0 or any(p < 0 for p in row.values()):
                raise ValueError(f"row for context {ctx!r} has no mass")
            key = tuple(ctx.split())
            self.table[key] = {t: p / z for t, p in row.items()}
            tokens.extend(t for t in row if t != EOS)
            tokens.extend(key)
        self.vocab = Vocab(tokens)
        self._longest = max((len(k) for k in self.table), default=0)

    def row(self, prefix: Sequence[str]) -> dict[str, float]:
        prefix = tuple(prefix)
        for n in range(min(len(prefix), self._longest), -1, -1):
            key = prefix[len(prefix) - n:] if n else ()
            if key in self.table:
                return self.table[key]
        raise KeyError(f"no table row matches context {' '.join(prefix)!r}")

    def next_token_dist(self, prefix: Sequence[str]) -> TokenDist:
        return TokenDist.from_dict(self.row(prefix), len(self.vocab))

    def to_json(self) -> dict:
        return {
            "format": TABLE_FORMAT,
            "version": FORMAT_VERSION,
            "table": {" ".join(k): v for k, v in self.table.items()},
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "TableLM":
        if "table" in data:
            return cls(data["table"])
        return cls(data)


class UniformLM:
    """Every token and ``EOS`` equally likely, regardless of context."""

    def __init__(self, tokens: Iterable[str]):
        self.vocab = Vocab(tokens)
        n = len(self.vocab)
        self._dist = TokenDist.from_dict({t: 1.0 / n for t in self.vocab.tokens}, n)

    def next_token_dist(self, prefix: Sequence[str]) -> TokenDist:
        return self._dist


def load_lm(path):
    """Load an n-gram model or a table model from its JSON file."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and data.get("format") == NGRAM_FORMAT:
        return NGramModel.from_json(data)
    return TableLM.from_json(data)


def next_token_dist(model: LanguageModel, prefix: Sequence[str]) -> TokenDist:
    return model.next_token_dist(list(prefix))


def token_prob(model: LanguageModel, dist: TokenDist, token: str) -> float:
    """Probability of ``token`` in ``dist``, charging out-of-vocabulary words to UNK."""
    if token == EOS:
        return dist.eos_prob
    p = dist.entries.get(token)
    if p is None:
        p = 0.0 if token in model.vocab else dist.entries.get(model.vocab.unk, 0.0)
    return p


def step_logprobs(
    model: LanguageModel, sentence: Sequence[str], context: Sequence[str] = ()
) -> list[float]:
    """Natural-log probability of each token of ``sentence`` and then of EOS."""
    out = []
    prefix = list(context)
    for tok in list(sentence) + [EOS]:
        p = token_prob(model, model.next_token_dist(prefix), tok)
        out.append(math.log(p) if p > 0 else -math.inf)
        prefix.append(tok)
    return out


def surprisal(model: LanguageModel, sentence: Sequence[str], context: Sequence[str] = ()) -> float:
    """Negative log-likelihood (nats) of ``sentence`` followed by EOS."""
    if not sentence:
        raise ValueError("sentence is empty")
    lps = step_logprobs(model, sentence, context)
    if any(lp == -math.inf for lp in lps):
        return math.inf
    return -math.fsum(lps)


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling knobs.  ``typical_p``, ``tfs_z``, ``mirostat_tau`` and
    ``mirostat_eta`` are recorded but have no effect."""

    top_k: int = 40
    top_p: float = 0.95
    min_p: float = 0.05
    temperature: float = 0.8
    repeat_penalty: float = 1.1
    max_tokens: int = 32
    seed: int = 0
    typical_p: float = 1.0
    tfs_z: float = 1.0
    mirostat_tau: float = 5.0
    mirostat_eta: float = 0.1

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.repeat_penalty < 1:
            raise ValueError("repeat_penalty must be >= 1")
        if not 0 < self.top_p <= 1 or not 0 <= self.min_p <= 1:
            raise ValueError("top_p must be in (0, 1] and min_p in [0, 1]")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    def is_identity(self, n_candidates: int) -> bool:
        """True if the chain only renormalizes ``n_candidates`` tokens.  The
        repeat penalty counts as active whatever the history."""
        return (
            self.repeat_penalty == 1.0
            and (self.top_k is None or self.top_k >= n_candidates)
            and self.top_p >= 1.0
            and self.min_p <= 0.0
            and self.temperature == 1.0
        )

    @classmethod
    def neutral(cls, **kw) -> "SamplerConfig":
        """A chain that leaves distributions unchanged."""
        base = dict(top_k=None, top_p=1.0, min_p=0.0, temperature=1.0, repeat_penalty=1.0)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SamplerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sampler settings: {sorted(unknown)}")
        return cls(**d)


def apply_sampler_chain(
    d: TokenDist | Mapping[str, float], cfg: SamplerConfig, history: Iterable[str] = ()
) -> TokenDist:
    """Repeat penalty, top-k, top-p, min-p, then temperature, renormalizing
    after each stage.  EOS is an ordinary candidate throughout."""
    probs = d.as_dict() if isinstance(d, TokenDist) else dict(d)
    domain = d.domain_size if isinstance(d, TokenDist) else len(probs)
    toks = [t for t, p in probs.items() if p > 0]
    if not toks:
        raise ValueError("distribution has no mass")
    if cfg.is_identity(len(toks)):
        z = math.fsum(probs[t] for t in toks)
        return TokenDist.from_dict({t: probs[t] / z for t in toks}, domain)
    p = np.array([probs[t] for t in toks], dtype=float)
    p /= p.sum()

    if cfg.repeat_penalty != 1.0:
        seen = set(history)
        hit = np.array([t in seen for t in toks])
        if hit.any():
            p[hit] = np.exp(np.log(p[hit]) * cfg.repeat_penalty)
            p /= p.sum()

    # stable descending order; ties keep first-seen order
    order = np.argsort(-p, kind="stable")
    toks = [toks[i] for i in order]
    p = p[order]

    if cfg.top_k is not None and cfg.top_k < len(p):
        toks, p = toks[: cfg.top_k], p[: cfg.top_k] / p[: cfg.top_k].sum()

    if cfg.top_p < 1.0:
        cum = np.cumsum(p)
        keep = int(np.searchsorted(cum, cfg.top_p - 1e-12)) + 1
        toks, p = toks[:keep], p[:keep] / p[:keep].sum()

    if cfg.min_p > 0.0:
        mask = p >= cfg.min_p * p[0]
        toks = [t for t, m in zip(toks, mask) if m]
        p = p[mask] / p[mask].sum()

    if cfg.temperature != 1.0:
        logp = np.log(p) / cfg.temperature
        p = np.exp(logp - logp.max())
        p /= p.sum()

    return TokenDist.from_dict(dict(zip(toks, p.tolist())), domain)
