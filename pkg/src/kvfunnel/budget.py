"""Per-layer KV budgets: uniform and pyramidal (arithmetic sequence).

A schedule's ``per_layer`` entry is the number of positions a layer retains,
*including* the ``alpha`` always-kept trailing tokens. The pyramid shape is
computed on the remaining budget ``k_total = m * (average_budget - alpha)``:

    bottom = 2 * k_total / m
    top    = k_total / (beta * m)
    k[l]   = bottom - (bottom - top) * l / (m - 1)

so ``k[0] / k[m-1] == 2 * beta``. These reals sum to
``k_total * (1 + 1 / (2 * beta))``, which overshoots ``k_total``. With
``renormalize=True`` the reals are rescaled onto ``k_total`` and rounded by
largest remainder (ties to the lower layer). The total then matches the
uniform baseline exactly and the sequence stays non-increasing.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import ParameterError


@dataclass(frozen=True)
class BudgetSchedule:
    per_layer: tuple  # retained positions per layer, alpha included
    alpha: int
    beta: float
    k_total: int
    mode: str  # "uniform" | "pyramid"
    average_budget: int
    raw: tuple = ()  # pre-rounding k[l] (alpha excluded), pyramid only

    @property
    def num_layers(self):
        return len(self.per_layer)

    @property
    def total(self):
        return sum(self.per_layer)

    @property
    def selectable(self):
        """Per-layer budget beyond the alpha forced tokens."""
        return tuple(b - self.alpha for b in self.per_layer)

    @property
    def raw_ratio(self):
        if not self.raw:
            return 1.0
        return self.raw[0] / self.raw[-1]

    @property
    def rounded_ratio(self):
        sel = self.selectable
        return sel[0] / sel[-1] if sel[-1] else math.inf

    def summary(self):
        return {
            "mode": self.mode,
            "layers": self.num_layers,
            "alpha": self.alpha,
            "beta": self.beta,
            "average_budget": self.average_budget,
            "sum": self.total,
            "mean": self.total / self.num_layers,
            "raw_ratio": self.raw_ratio,
            "ratio": self.rounded_ratio,
        }


def _check_common(m, average_budget, alpha):
    if isinstance(m, bool) or int(m) != m or m < 2:
        raise ParameterError(f"number of layers must be an integer >= 2, got {m}")
    if int(average_budget) != average_budget or average_budget < 1:
        raise ParameterError(f"average_budget must be a positive integer, got {average_budget}")
    if int(alpha) != alpha or alpha < 0:
        raise ParameterError(f"alpha must be a non-negative integer, got {alpha}")


def allocate_uniform(m, average_budget, alpha):
    _check_common(m, average_budget, alpha)
    if average_budget < alpha:
        raise ParameterError(f"average_budget ({average_budget}) must be >= alpha ({alpha})")
    return BudgetSchedule(
        per_layer=(int(average_budget),) * int(m),
        alpha=int(alpha),
        beta=math.inf,
        k_total=int(m) * (int(average_budget) - int(alpha)),
        mode="uniform",
        average_budget=int(average_budget),
    )


def pyramid_reals(m, k_total, beta):
    """Exact pre-rounding budgets k[0..m-1] as Fractions."""
    beta = Fraction(beta)
    bottom = Fraction(2 * k_total, m)
    top = Fraction(k_total) / (beta * m)
    step = (bottom - top) / (m - 1)
    return [bottom - step * layer for layer in range(m)]


def _largest_remainder(reals, target):
    floors = [math.floor(x) for x in reals]
    deficit = target - sum(floors)
    order = sorted(range(len(reals)), key=lambda i: (-(reals[i] - floors[i]), i))
    for i in order[:deficit]:
        floors[i] += 1
    return floors


def allocate_pyramid(m, average_budget, alpha, beta, renormalize=True):
    _check_common(m, average_budget, alpha)
    if average_budget <= alpha:
        raise ParameterError(f"average_budget ({average_budget}) must exceed alpha ({alpha})")
    try:
        beta_q = Fraction(beta)
    except (TypeError, ValueError):
        raise ParameterError(f"beta must be a finite real, got {beta!r}") from None
    if beta_q < 1:
        raise ParameterError(f"beta must be >= 1, got {beta}")
    m, average_budget, alpha = int(m), int(average_budget), int(alpha)

    k_total = m * (average_budget - alpha)
    reals = pyramid_reals(m, k_total, beta_q)
    if renormalize:
        scale = Fraction(k_total) / sum(reals)
        ks = _largest_remainder([x * scale for x in reals], k_total)
    else:
        ks = [max(0, math.floor(x)) for x in reals]

    return BudgetSchedule(
        per_layer=tuple(alpha + k for k in ks),
        alpha=alpha,
        beta=float(beta),
        k_total=k_total,
        mode="pyramid",
        average_budget=average_budget,
        raw=tuple(float(x) for x in reals),
    )
