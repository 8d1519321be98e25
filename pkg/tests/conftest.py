import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eventgen.grammar import parse_grammar, event_grammar, desugar_wildcards  # noqa: E402
from eventgen.lm import TableLM, UniformLM, train_ngram, tokenize  # noqa: E402

HIT_TEXT = "S -> NP VP\nNP -> D N\nVP -> V NP\nV -> hit\nD -> the\nN -> .+"
NOUNS = ("cat", "dog", "mat", "floor")
CORPUS = [
    "the cat hit the mat",
    "the dog hit the cat",
    "the cat hit the floor",
    "a dog saw the cat",
    "the dog hit the floor",
]


@pytest.fixture
def hit_grammar():
    return event_grammar("hit")


@pytest.fixture
def small_vocab():
    return ["the", "hit"] + list(NOUNS)


@pytest.fixture
def uniform_lm(small_vocab):
    return UniformLM(small_vocab)


@pytest.fixture
def ngram_lm():
    return train_ngram([tokenize(s) for s in CORPUS], order=3, smoothing_k=0.1)
