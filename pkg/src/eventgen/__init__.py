"""Grammar-constrained sentence generation and stimulus curation for verb-sense experiments."""

__version__ = "0.1.0"

from .dist import EOS, UNK, TokenDist
from .grammar import (
    GrammarError,
    Pcfg,
    Rule,
    Symbol,
    desugar_wildcards,
    event_grammar,
    language_enumerate,
    parse_grammar,
    render,
)
from .earley import ParserState, RejectedToken, init, advance, next_dist, parse, string_prob
from .lm import NGramModel, SamplerConfig, TableLM, UniformLM, apply_sampler_chain, surprisal, tokenize, train_ngram
from .sampler import (
    GenRequest,
    GenResult,
    divergence_report,
    generate_unique,
    sample_constrained,
    sample_rejection,
)

__all__ = [
    "EOS", "UNK", "TokenDist",
    "GrammarError", "Pcfg", "Rule", "Symbol", "desugar_wildcards", "event_grammar",
    "language_enumerate", "parse_grammar", "render",
    "ParserState", "RejectedToken", "init", "advance", "next_dist", "parse", "string_prob",
    "NGramModel", "SamplerConfig", "TableLM", "UniformLM", "apply_sampler_chain", "surprisal",
    "tokenize", "train_ngram",
    "GenRequest", "GenResult", "divergence_report", "generate_unique", "sample_constrained",
    "sample_rejection",
]
