"""Random epsilon-free PCFGs for oracle comparisons."""
from __future__ import annotations

import numpy as np

from eventgen.grammar import GrammarError, Pcfg, language_enumerate, pcfg_from_rules, EnumerationCapExceeded
from eventgen import earley

TERMINALS = ("a", "b", "c")


def random_pcfg(rng: np.random.Generator, left_recursive: bool = False) -> Pcfg | None:
    """Draw one grammar, or None if the draw is invalid.

    Nonterminal X_i may only use X_j with j > i in its first (terminating)
    rule, which guarantees productivity; later rules are unconstrained apart
    from avoiding unit self-loops.
    """
    n_nt = int(rng.integers(1, 5))
    n_t = int(rng.integers(1, 4))
    nts = [f"X{i}" for i in range(n_nt)]
    terms = TERMINALS[:n_t]
    rules = []
    for i, x in enumerate(nts):
        n_rules = int(rng.integers(1, 4))
        rhs_list = []
        for k in range(n_rules):
            length = int(rng.integers(1, 4))
            rhs = []
            for pos in range(length):
                pool = list(terms)
                if k == 0:
                    pool += nts[i + 1:]
                else:
                    pool += nts
                rhs.append(pool[int(rng.integers(len(pool)))])
            if rhs == [x]:
                continue
            if tuple(rhs) not in rhs_list:
                rhs_list.append(tuple(rhs))
        if left_recursive and i == 0:
            rec = (x, terms[int(rng.integers(len(terms)))])
            if rec not in rhs_list:
                rhs_list.append(rec)
        weights = rng.dirichlet(np.ones(len(rhs_list)))
        # keep the terminating rule likely so languages thin out quickly
        weights[0] += 1.0
        weights /= weights.sum()
        for rhs, w in zip(rhs_list, weights):
            rules.append((x, rhs, float(w)))
    total = {}
    for lhs, _, p in rules:
        total[lhs] = total.get(lhs, 0.0) + p
    rules = [(lhs, rhs, p / total[lhs]) for lhs, rhs, p in rules]
    try:
        g = pcfg_from_rules(rules, start="X0")
        earley.init(g)
    except GrammarError:
        return None
    if left_recursive and not any(r.rhs[0].name == r.lhs for r in g.rules):
        return None
    return g


def oracle_grammars(seed: int, count: int, max_len: int = 12, residual_tol: float = 1e-7,
                    cap: int = 300_000, lr_fraction: float = 0.25):
    """``count`` grammars with enumerated languages whose truncated mass is known.

    Yields ``(grammar, language dict, residual, left_recursive)``.
    """
    rng = np.random.default_rng(seed)
    made = 0
    while made < count:
        lr = made < int(round(count * lr_fraction))
        g = random_pcfg(rng, left_recursive=lr)
        if g is None:
            continue
        try:
            lang = dict(language_enumerate(g, max_len, cap=cap))
        except EnumerationCapExceeded:
            continue
        residual = 1.0 - sum(lang.values())
        if residual > residual_tol:
            continue
        made += 1
        yield g, lang, max(residual, 0.0), lr
