"""Slow, obviously-correct reference computations used by the tests.

Nothing here imports kvfunnel; every oracle is plain Python loops or exact
rational arithmetic.
"""

import itertools
from fractions import Fraction


def window_scores_loop(attn, alpha):
    """s[i] = sum over the last alpha query rows of attn[q][i], pure loops."""
    n = len(attn)
    out = []
    for i in range(n):
        total = 0.0
        for q in range(n - alpha, n):
            total += float(attn[q][i])
        out.append(total)
    return out


def all_query_scores_loop(attn):
    n = len(attn)
    out = []
    for i in range(n):
        total = 0.0
        for q in range(n):
            total += float(attn[q][i])
        out.append(total / n)
    return out


def causal_uniform_h2o(n):
    """Exact H2O scores for rows uniform over their causal support."""
    return [Fraction(1, n) * sum(Fraction(1, q + 1) for q in range(i, n)) for i in range(n)]


def best_subset(scores, k, forced):
    """Exhaustive top-k: max exact score sum, ties -> lexicographically most recent."""
    forced = set(forced)
    free = [i for i in range(len(scores)) if i not in forced]
    exact = [Fraction(s) for s in scores]
    best_key, best = None, None
    for combo in itertools.combinations(free, k - len(forced)):
        chosen = sorted(forced | set(combo))
        key = (sum(exact[i] for i in combo), sorted(combo, reverse=True))
        if best_key is None or key > best_key:
            best_key, best = key, chosen
    return best


def pool_loop(v, kernel, mode):
    n, half = len(v), kernel // 2
    out = []
    for i in range(n):
        win = [v[j] for j in range(max(0, i - half), min(n, i + half + 1))]
        out.append(max(win) if mode == "max" else sum(win) / len(win))
    return out
