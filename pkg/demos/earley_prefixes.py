"""
Prefix probabilities from the Earley chart
==========================================

For a left-recursive grammar the parser's prefix probabilities agree with
brute-force enumeration of the language.  Enumeration stops at length 12,
so its prefix sums fall short by at most the unlisted mass.
"""

import math

from eventgen import earley
from eventgen.grammar import language_enumerate, parse_grammar

g = parse_grammar("""
S -> S a (0.3) | B (0.7)
B -> b (0.6) | c S (0.4)
""")

lang = {tuple(s.split()): p for s, p in language_enumerate(g, 12)}
missing = 1 - math.fsum(lang.values())
print("strings up to length 12:", len(lang), "unlisted mass", f"{missing:.2e}")


def enumerated_prefix(u):
    return math.fsum(p for s, p in lang.items() if s[: len(u)] == u)


print("prefix      parser       enumeration")
frontier = [((), earley.init(g))]
while frontier:
    u, state = frontier.pop(0)
    print(f"{' '.join(u) or '(empty)':10s} {state.prefix_probability():.9f}  {enumerated_prefix(u):.9f}")
    if len(u) < 3:
        # only tokens the chart allows lead to a viable prefix
        frontier += [(u + (t,), state.advance(t)) for t in "abc" if state.allows(t)]

# the next-token distribution is the ratio of successive prefix probabilities
s = earley.parse(g, ["c"])
print(dict(s.next_dist().items()))
