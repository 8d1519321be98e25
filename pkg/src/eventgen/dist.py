"""Next-token distributions over a vocabulary plus end-of-sentence."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping

EOS = "</s>"
UNK = "<unk>"


@dataclass(frozen=True)
class TokenDist:
    """Probabilities for word tokens (``entries``) and for stopping (``eos_prob``).

    ``normalized=False`` marks raw constraint weights that have not been
    renormalized yet.  ``domain_size`` is the number of outcomes the
    distribution is defined over, counting end-of-sentence.
    """

    entries: Mapping[str, float]
    eos_prob: float = 0.0
    domain_size: int = 0
    normalized: bool = True

    def __post_init__(self):
        if self.eos_prob < 0 or any(p < 0 or math.isnan(p) for p in self.entries.values()):
            raise ValueError("probabilities must be non-negative")

    @classmethod
    def from_dict(cls, probs: Mapping[str, float], domain_size: int = 0, normalized=True):
        """Build from a mapping in which the key ``EOS`` holds the stop mass."""
        entries = {k: float(v) for k, v in probs.items() if k != EOS}
        return cls(entries, float(probs.get(EOS, 0.0)), domain_size or len(probs), normalized)

    def prob(self, token: str) -> float:
        if token == EOS:
            return self.eos_prob
        return self.entries.get(token, 0.0)

    def total(self) -> float:
        return math.fsum(self.entries.values()) + self.eos_prob

    def items(self) -> Iterator[tuple[str, float]]:
        """``(token, p)`` pairs with ``EOS`` last."""
        yield from self.entries.items()
        yield EOS, self.eos_prob

    def as_dict(self) -> dict[str, float]:
        d = dict(self.entries)
        d[EOS] = self.eos_prob
        return d

    def support(self) -> set[str]:
        s = {k for k, p in self.entries.items() if p > 0}
        if self.eos_prob > 0:
            s.add(EOS)
        return s

    def renormalized(self) -> "TokenDist":
        z = self.total()
        if z <= 0:
            raise ZeroDivisionError("distribution has no mass")
        return TokenDist(
            {k: p / z for k, p in self.entries.items()},
            self.eos_prob / z,
            self.domain_size,
            True,
        )

    def __len__(self):
        return len(self.entries) + 1
