"""Attention statistics, policy-vs-FullKV divergence and KV memory accounting."""

from dataclasses import asdict, dataclass, field

import numpy as np

from .model import decode_step, full_cache, greedy, prefill
from .policies import compress
from .errors import ParameterError


@dataclass
class LayerStats:
    layer: int
    entropy: float  # mean row entropy, nats
    locality_mass: float
    top1_mass: float
    sink_mass: float


@dataclass
class RunReport:
    policy: str
    schedule: dict
    seq_len: int
    max_abs_diff: list = field(default_factory=list)  # per decode step
    argmax_agree: list = field(default_factory=list)  # per decode step
    layer_budgets: list = field(default_factory=list)
    retained_mass: list = field(default_factory=list)  # per layer
    retained_bytes: int = 0
    full_bytes: int = 0

    @property
    def ratio(self):
        return self.retained_bytes / self.full_bytes

    def summary(self):
        diffs = np.asarray(self.max_abs_diff, dtype=np.float64)
        return {
            "policy": self.policy,
            "seq_len": self.seq_len,
            "decode_steps": len(self.max_abs_diff),
            "max_abs_diff_max": float(diffs.max()) if len(diffs) else 0.0,
            "max_abs_diff_mean": float(diffs.mean()) if len(diffs) else 0.0,
            "agreement_rate": float(np.mean(self.argmax_agree)) if self.argmax_agree else 1.0,
            "retained_mass_mean": float(np.mean(self.retained_mass)),
            "retained_bytes": self.retained_bytes,
            "full_bytes": self.full_bytes,
            "ratio": self.ratio,
        }

    def to_dict(self):
        out = asdict(self)
        out["ratio"] = self.ratio
        return out


def _row_entropy(rows):
    p = rows.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


def attention_stats(maps, window):
    """Head- and row-averaged statistics of one layer's (H, n, n) attention.

    Returns ``(entropy, locality_mass, top1_mass, sink_mass)``. Locality mass
    is the attention a query puts on keys at most ``window`` positions behind
    it (self included).
    """
    if window < 0:
        raise ParameterError(f"locality window must be >= 0, got {window}")
    a = np.asarray(maps, dtype=np.float64)
    n = a.shape[-1]
    q = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    near = (q - k >= 0) & (q - k <= window)
    entropy = _row_entropy(a).mean()
    locality = (a * near).sum(axis=-1).mean()
    top1 = a.max(axis=-1).mean()
    sink = a[..., 0].mean()
    return float(entropy), float(locality), float(top1), float(sink)


def layer_stats(trace, window=8):
    return [
        LayerStats(layer, *attention_stats(maps, window))
        for layer, maps in enumerate(trace.attention)
    ]


def memory_account(config, n, schedule, bytes_per_scalar=2):
    """KV bytes for a full cache and for ``schedule`` at context length ``n``.

    Returns ``(retained_bytes, full_bytes, ratio)``. Layers whose budget is at
    least ``n`` count as full.
    """
    if n < 1:
        raise ParameterError("context length must be >= 1")
    per_pos = config.num_heads * config.head_dim * bytes_per_scalar
    full = 2 * config.num_layers * per_pos * n
    retained = 2 * sum(min(b, n) for b in schedule.per_layer) * per_pos
    return retained, full, retained / full


def cache_bytes(cache, head_dim, bytes_per_scalar=2):
    return 2 * sum(sum(layer.sizes()) for layer in cache.layers) * head_dim * bytes_per_scalar


def retained_window_mass(maps, positions, alpha):
    """Fraction of the last ``alpha`` query rows' attention landing on kept keys, head-averaged."""
    n = maps.shape[-1]
    alpha = min(alpha, n)
    masses = []
    for h, pos in enumerate(positions):
        window = maps[h, n - alpha:].astype(np.float64)
        masses.append(window[:, pos].sum() / alpha)
    return float(np.mean(masses))


def compare_vs_full(weights, tokens, policy, schedule, decode_steps, teacher_forcing=True,
                    bytes_per_scalar=2):
    """Decode with FullKV and with ``policy`` from the same prefill.

    With teacher forcing both runs consume FullKV's greedy token at every
    step. Without it each run follows its own greedy tokens.
    """
    if decode_steps < 1:
        raise ParameterError("decode_steps must be >= 1")
    cfg = weights.config
    trace, kv = prefill(weights, tokens)
    full = full_cache(kv, cfg.num_heads)
    comp = compress(policy, schedule, trace, kv)

    report = RunReport(
        policy=policy.kind,
        schedule=schedule.summary(),
        seq_len=trace.seq_len,
        layer_budgets=[lc.budget for lc in comp.layers],
        retained_mass=[
            retained_window_mass(trace.attention[l], comp.layers[l].positions, policy.alpha)
            for l in range(cfg.num_layers)
        ],
        retained_bytes=cache_bytes(comp, cfg.head_dim, bytes_per_scalar),
        full_bytes=cache_bytes(full, cfg.head_dim, bytes_per_scalar),
    )

    tok_full = tok_comp = greedy(trace.logits[-1])
    for _ in range(decode_steps):
        logits_full, full = decode_step(weights, full, tok_full)
        logits_comp, comp = decode_step(weights, comp, tok_comp)
        diff = np.abs(logits_full.astype(np.float64) - logits_comp.astype(np.float64)).max()
        report.max_abs_diff.append(float(diff))
        report.argmax_agree.append(greedy(logits_full) == greedy(logits_comp))
        tok_full = greedy(logits_full)
        tok_comp = tok_full if teacher_forcing else greedy(logits_comp)
    return report
