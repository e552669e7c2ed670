"""Cache policies: full, streaming, h2o, snapkv and pyramid.

Every policy reduces a prefill's K/V to a :class:`~kvfunnel.model.CompressedKV`
with ``min(schedule.per_layer[l], n)`` positions per head. The last ``alpha``
positions are always kept. Attention maps are indexed ``A[query, key]``; a
key's score sums its column over the chosen query rows.
"""

from dataclasses import dataclass

import numpy as np

from .budget import allocate_pyramid, allocate_uniform
from .core_math import pool_1d
from .errors import ParameterError, StateError
from .model import CompressedKV, LayerCache

KINDS = ("full", "streaming", "h2o", "snapkv", "pyramid")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "pyramid"
    alpha: int = 8
    beta: float = 20.0
    pool_kernel: int = 7
    pool_mode: str = "avg"
    tie_break: str = "prefer_recent"
    group_heads: bool = False
    group_size: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise ParameterError(f"alpha must be an integer >= 1, got {self.alpha}")
        if self.pool_kernel < 1 or self.pool_kernel % 2 == 0:
            raise ParameterError(f"pool_kernel must be odd and >= 1, got {self.pool_kernel}")
        if self.pool_mode not in ("avg", "max"):
            raise ParameterError(f"pool_mode must be 'avg' or 'max', got {self.pool_mode!r}")
        if self.tie_break != "prefer_recent":
            raise ParameterError(f"unsupported tie_break {self.tie_break!r}")
        if self.beta < 1:
            raise ParameterError(f"beta must be >= 1, got {self.beta}")
        if self.group_size < 1:
            raise ParameterError(f"group_size must be >= 1, got {self.group_size}")


def schedule_for(policy, num_layers, average_budget, renormalize=True):
    """Budget schedule a policy runs with: pyramid for ``pyramid``, uniform otherwise."""
    if policy.kind == "pyramid":
        return allocate_pyramid(num_layers, average_budget, policy.alpha, policy.beta, renormalize)
    return allocate_uniform(num_layers, average_budget, policy.alpha)


def covering_budget(policy, num_layers, n, renormalize=True):
    """Smallest average budget whose schedule gives every layer at least ``n`` positions."""
    budget = max(n, policy.alpha + 1)
    while min(schedule_for(policy, num_layers, budget, renormalize).per_layer) < n:
        budget += max(1, budget // 8)
    return budget


def _effective_kernel(kernel, n):
    # shrink to the largest odd window that fits a short sequence
    if kernel <= n:
        return kernel
    return n if n % 2 else n - 1


def score_instruction_window(attn, alpha, pool_kernel=1, pool_mode="avg"):
    """Attention each key receives from the last ``alpha`` query rows, then pooled.

    ``attn`` is one head's (n, n) map. The kernel is shrunk to fit when it is
    longer than the sequence.
    """
    a = np.asarray(attn)
    n = a.shape[-1]
    if alpha > n:
        raise ParameterError(f"alpha ({alpha}) exceeds sequence length ({n})")
    if alpha < 1:
        raise ParameterError(f"alpha must be >= 1, got {alpha}")
    window = a[n - alpha:].astype(np.float64)
    s = np.add.accumulate(window, axis=0)[-1]
    return pool_1d(s, _effective_kernel(pool_kernel, n), pool_mode)


def score_all_queries(attn):
    """Mean attention each key receives over every query row."""
    a = np.asarray(attn, dtype=np.float64)
    n = a.shape[0]
    return np.add.accumulate(a, axis=0)[-1] / n


def select_topk(scores, k, forced=(), tie_break="prefer_recent"):
    """``forced`` plus the ``k - |forced|`` best other positions, sorted ascending.

    Among equal scores the larger (more recent) position wins.
    """
    if tie_break != "prefer_recent":
        raise ParameterError(f"unsupported tie_break {tie_break!r}")
    s = np.asarray(scores, dtype=np.float64)
    n = len(s)
    forced = np.unique(np.asarray(forced, dtype=np.int64))
    if len(forced) and (forced[0] < 0 or forced[-1] >= n):
        raise ParameterError("forced positions out of range")
    if k < len(forced):
        raise ParameterError(f"k ({k}) is smaller than the forced set ({len(forced)})")
    if k > n:
        raise ParameterError(f"k ({k}) exceeds the number of positions ({n})")

    free = np.setdiff1d(np.arange(n, dtype=np.int64), forced, assume_unique=True)
    # primary key: score descending; secondary: position descending
    order = np.lexsort((-free, -s[free]))
    picked = free[order[: k - len(forced)]]
    return np.sort(np.concatenate([forced, picked]))


def _group_scores(scores, group_size):
    if group_size <= 1:
        return scores
    heads = scores.shape[0]
    if heads % group_size:
        raise ParameterError(f"group_size {group_size} does not divide {heads} heads")
    grouped = scores.reshape(heads // group_size, group_size, -1).mean(axis=1)
    return np.repeat(grouped, group_size, axis=0)


def head_scores(policy, maps):
    """Per-head score vectors (H, n) for the score-based policies."""
    if policy.kind == "h2o":
        s = np.stack([score_all_queries(m) for m in maps])
    elif policy.kind in ("snapkv", "pyramid"):
        alpha = min(policy.alpha, maps.shape[-1])
        s = np.stack([
            score_instruction_window(m, alpha, policy.pool_kernel, policy.pool_mode) for m in maps
        ])
    else:
        raise ParameterError(f"policy {policy.kind!r} is not score-based")
    if policy.group_heads:
        s = _group_scores(s, policy.group_size)
    return s


def retained_positions(policy, maps, budget):
    """Retained position set per head for one layer.

    ``maps`` is the layer's (H, n, n) attention and ``budget`` its
    alpha-inclusive schedule entry.
    """
    heads, n = maps.shape[0], maps.shape[-1]
    everything = np.arange(n, dtype=np.int64)
    if policy.kind == "full" or budget >= n:
        return [everything.copy() for _ in range(heads)]
    alpha = min(policy.alpha, n)
    if budget < alpha:
        raise ParameterError(f"layer budget {budget} is smaller than alpha {alpha}")
    recent = everything[n - alpha:]
    if policy.kind == "streaming":
        keep = np.concatenate([everything[: budget - alpha], recent])
        return [keep.copy() for _ in range(heads)]
    scores = head_scores(policy, maps)
    return [select_topk(scores[h], budget, recent, policy.tie_break) for h in range(heads)]


def compress(policy, schedule, trace, full_kv):
    """Compress a prefill's K/V under ``policy`` with per-layer ``schedule``."""
    m = trace.num_layers
    if schedule.num_layers != m or len(full_kv) != m:
        raise StateError(
            f"schedule has {schedule.num_layers} layers, trace {m}, kv {len(full_kv)}"
        )
    if policy.kind != "full" and schedule.alpha != policy.alpha:
        raise StateError(f"schedule alpha {schedule.alpha} != policy alpha {policy.alpha}")

    n = trace.seq_len
    layers = []
    for layer in range(m):
        maps = trace.attention[layer]
        heads = maps.shape[0]
        dk = full_kv[layer].keys.shape[1] // heads
        budget = schedule.per_layer[layer]
        kept = retained_positions(policy, maps, budget)
        keys, values = [], []
        for h, pos in enumerate(kept):
            cols = slice(h * dk, (h + 1) * dk)
            keys.append(full_kv[layer].keys[pos, cols].copy())
            values.append(full_kv[layer].values[pos, cols].copy())
        recorded = n if policy.kind == "full" else int(budget)
        layers.append(LayerCache(positions=kept, keys=keys, values=values, budget=recorded))
    return CompressedKV(layers=layers, next_position=n)
