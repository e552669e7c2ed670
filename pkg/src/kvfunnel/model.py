"""Deterministic attention-only transformer used as the cache-policy substrate.

Each block is ``h <- h + MHA(h) @ W_o`` with rotary position embeddings on
queries and keys. There are no MLPs and no normalisation layers. The cache
policies only read attention maps and K/V rows, so nothing else is needed.

Weights come from a SplitMix64 stream (see :func:`splitmix64`), so a
``(config, seed)`` pair always produces the same bytes.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .core_math import matmul, softmax_rows
from .errors import InputError, ParameterError, StateError

ROPE_BASE = 10000.0

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 4
    num_heads: int = 4
    head_dim: int = 16
    model_dim: int = 64
    vocab_size: int = 256
    seed: int = 0
    max_context: int = 4096

    def __post_init__(self):
        for name in ("num_layers", "num_heads", "head_dim", "model_dim", "vocab_size", "max_context"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if self.num_layers < 2:
            raise ParameterError("num_layers must be >= 2")
        if self.model_dim != self.num_heads * self.head_dim:
            raise ParameterError(
                f"model_dim ({self.model_dim}) != num_heads * head_dim "
                f"({self.num_heads} * {self.head_dim})"
            )
        if self.head_dim % 2:
            raise ParameterError("head_dim must be even for rotary embeddings")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ParameterError(f"seed must fit in 64 bits, got {self.seed}")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


@dataclass(frozen=True, eq=False)
class ModelWeights:
    """Projection matrices for one model. Treat as read-only."""

    config: ModelConfig
    embedding: np.ndarray  # (vocab, d)
    wq: tuple  # per layer (d, d)
    wk: tuple
    wv: tuple
    wo: tuple
    unembedding: np.ndarray  # (d, vocab)

    def matrices(self):
        """All matrices in serialisation order."""
        yield self.embedding
        for layer in range(self.config.num_layers):
            yield self.wq[layer]
            yield self.wk[layer]
            yield self.wv[layer]
            yield self.wo[layer]
        yield self.unembedding

    def __eq__(self, other):
        if not isinstance(other, ModelWeights):
            return NotImplemented
        return self.config == other.config and all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.matrices(), other.matrices())
        )


@dataclass
class LayerKV:
    keys: np.ndarray  # (n, d), rotary already applied
    values: np.ndarray  # (n, d)


@dataclass
class ForwardTrace:
    attention: list  # per layer, float32 (H, n, n)
    logits: np.ndarray  # (n, vocab)
    hidden: list = None  # per layer input hidden states, when requested

    @property
    def num_layers(self):
        return len(self.attention)

    @property
    def seq_len(self):
        return self.attention[0].shape[-1]


@dataclass
class LayerCache:
    """Retained cache entries for one layer, one entry per head."""

    positions: list  # per head: int64 ascending
    keys: list  # per head: (r, d_k) float32
    values: list
    budget: int

    def sizes(self):
        return [len(p) for p in self.positions]


@dataclass
class CompressedKV:
    layers: list = field(default_factory=list)
    next_position: int = 0

    @property
    def num_layers(self):
        return len(self.layers)


def splitmix64(seed, count, offset=0):
    """``count`` outputs of the SplitMix64 generator seeded with ``seed``.

    Output ``i`` is ``mix(seed + (offset + i + 1) * 0x9E3779B97F4A7C15)``
    modulo 2**64, with the standard mixer
    ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
    z *= 0x94D049BB133111EB; z ^= z >> 31``.
    """
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(int(seed) & _MASK64) + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def _uniform_signed(seed, count, offset):
    """Uniform float64 values in [-1, 1) from the top 53 bits of each draw."""
    bits = splitmix64(seed, count, offset) >> np.uint64(11)
    return bits.astype(np.float64) * (2.0 / (1 << 53)) - 1.0


def generate_weights(config):
    """Draw all weights from one SplitMix64 stream seeded with ``config.seed``.

    Matrices are filled row-major in order: embedding, then for each layer
    W_q, W_k, W_v, W_o, then the unembedding. Entries are uniform with unit
    variance (``sqrt(3) * U[-1, 1)``); every matrix except the embedding is
    then scaled by ``1/sqrt(d)``. The embedding keeps unit variance so that
    query/key products are O(1) and attention is not trivially uniform.
    """
    d = config.model_dim
    shapes = [(config.vocab_size, d)]
    shapes += [(d, d)] * (4 * config.num_layers)
    shapes += [(d, config.vocab_size)]

    mats = []
    offset = 0
    for i, shape in enumerate(shapes):
        count = shape[0] * shape[1]
        raw = _uniform_signed(config.seed, count, offset) * np.sqrt(3.0)
        offset += count
        if i > 0:
            raw = raw / np.sqrt(d)
        mats.append(raw.astype(np.float32).reshape(shape))

    layers = mats[1:-1]
    return ModelWeights(
        config=config,
        embedding=mats[0],
        wq=tuple(layers[0::4]),
        wk=tuple(layers[1::4]),
        wv=tuple(layers[2::4]),
        wo=tuple(layers[3::4]),
        unembedding=mats[-1],
    )


def random_tokens(seed, length, vocab_size):
    """Token ids drawn from the SplitMix64 stream (distinct from weight draws)."""
    if length < 1:
        raise InputError("token sequence length must be >= 1")
    # high stream offset keeps token draws disjoint from weight draws of any realistic model
    draws = splitmix64(seed, length, offset=1 << 48)
    return (draws % np.uint64(vocab_size)).astype(np.int64)


@lru_cache(maxsize=8)
def _rope_table(head_dim, max_context):
    inv_freq = ROPE_BASE ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    angles = np.arange(max_context, dtype=np.float64)[:, None] * inv_freq[None, :]
    cos, sin = np.cos(angles), np.sin(angles)
    cos.flags.writeable = False
    sin.flags.writeable = False
    return cos, sin


def apply_rope(x, positions, max_context):
    """Rotate consecutive pairs of ``x`` (rows, d_k) by their positions' angles."""
    cos, sin = _rope_table(x.shape[1], max_context)
    c = cos[positions]
    s = sin[positions]
    x64 = x.astype(np.float64)
    even, odd = x64[:, 0::2], x64[:, 1::2]
    out = np.empty_like(x64)
    out[:, 0::2] = even * c - odd * s
    out[:, 1::2] = even * s + odd * c
    return out.astype(np.float32)


def _head_slice(h, head_dim):
    return slice(h * head_dim, (h + 1) * head_dim)


def _attend(q, q_pos, k, k_pos, v, head_dim):
    """Causal attention for one head. Returns (probabilities, output)."""
    scores = matmul(q, k.T) * np.float32(1.0 / np.sqrt(head_dim))
    mask = k_pos[None, :] <= q_pos[:, None]
    probs = softmax_rows(scores, mask)
    return probs, matmul(probs, v)


def _check_tokens(config, tokens):
    toks = np.asarray(tokens)
    if toks.ndim != 1 or len(toks) == 0:
        raise InputError("tokens must be a non-empty 1-D sequence")
    if not np.issubdtype(toks.dtype, np.integer):
        raise InputError(f"token ids must be integers, got dtype {toks.dtype}")
    if toks.min() < 0 or toks.max() >= config.vocab_size:
        raise InputError(f"token id out of range [0, {config.vocab_size})")
    if len(toks) > config.max_context:
        raise InputError(f"sequence length {len(toks)} exceeds max_context {config.max_context}")
    return toks.astype(np.int64)


def prefill(weights, tokens, keep_hidden=False):
    """Full causal forward pass.

    Returns ``(trace, kv)`` where ``kv`` is a list of :class:`LayerKV`, one
    per layer, holding every position's rotated keys and values.
    """
    cfg = weights.config
    toks = _check_tokens(cfg, tokens)
    n = len(toks)
    pos = np.arange(n, dtype=np.int64)
    dk = cfg.head_dim

    h = weights.embedding[toks]
    attention, kv, hidden = [], [], []
    for layer in range(cfg.num_layers):
        if keep_hidden:
            hidden.append(h.copy())
        q_all = matmul(h, weights.wq[layer])
        k_all = matmul(h, weights.wk[layer])
        v_all = matmul(h, weights.wv[layer])
        maps = np.empty((cfg.num_heads, n, n), dtype=np.float32)
        heads_out = np.empty((n, cfg.model_dim), dtype=np.float32)
        for head in range(cfg.num_heads):
            sl = _head_slice(head, dk)
            q = apply_rope(q_all[:, sl], pos, cfg.max_context)
            k = apply_rope(k_all[:, sl], pos, cfg.max_context)
            k_all[:, sl] = k
            maps[head], heads_out[:, sl] = _attend(q, pos, k, pos, v_all[:, sl], dk)
        attention.append(maps)
        kv.append(LayerKV(keys=k_all, values=v_all))
        h = h + matmul(heads_out, weights.wo[layer])

    logits = matmul(h, weights.unembedding)
    trace = ForwardTrace(attention=attention, logits=logits, hidden=hidden if keep_hidden else None)
    return trace, kv


def full_cache(kv, num_heads):
    """Wrap a complete prefill KV as a :class:`CompressedKV` retaining everything."""
    n = kv[0].keys.shape[0]
    dk = kv[0].keys.shape[1] // num_heads
    pos = np.arange(n, dtype=np.int64)
    layers = []
    for lkv in kv:
        layers.append(LayerCache(
            positions=[pos.copy() for _ in range(num_heads)],
            keys=[lkv.keys[:, _head_slice(h, dk)].copy() for h in range(num_heads)],
            values=[lkv.values[:, _head_slice(h, dk)].copy() for h in range(num_heads)],
            budget=n,
        ))
    return CompressedKV(layers=layers, next_position=n)


def decode_step(weights, cache, token):
    """Run one new token against ``cache``.

    Returns ``(logits, new_cache)``. The new token's K/V is appended to every
    head of every layer; the input cache is left untouched.
    """
    cfg = weights.config
    if cache.num_layers != cfg.num_layers:
        raise StateError(f"cache has {cache.num_layers} layers, model has {cfg.num_layers}")
    for i, lc in enumerate(cache.layers):
        if any(len(p) == 0 for p in lc.positions):
            raise StateError(f"cache layer {i} has an empty head")
    toks = _check_tokens(cfg, [int(token)])
    position = cache.next_position
    if position >= cfg.max_context:
        raise InputError(f"position {position} exceeds max_context {cfg.max_context}")
    pos = np.array([position], dtype=np.int64)
    dk = cfg.head_dim

    h = weights.embedding[toks]
    new_layers = []
    for layer, lc in enumerate(cache.layers):
        q_all = matmul(h, weights.wq[layer])
        k_all = matmul(h, weights.wk[layer])
        v_all = matmul(h, weights.wv[layer])
        heads_out = np.empty((1, cfg.model_dim), dtype=np.float32)
        positions, keys, values = [], [], []
        for head in range(cfg.num_heads):
            sl = _head_slice(head, dk)
            q = apply_rope(q_all[:, sl], pos, cfg.max_context)
            k_new = apply_rope(k_all[:, sl], pos, cfg.max_context)
            k = np.concatenate([lc.keys[head], k_new])
            v = np.concatenate([lc.values[head], v_all[:, sl]])
            p = np.concatenate([lc.positions[head], pos])
            _, heads_out[:, sl] = _attend(q, pos, k, p, v, dk)
            positions.append(p)
            keys.append(k)
            values.append(v)
        new_layers.append(LayerCache(positions=positions, keys=keys, values=values, budget=lc.budget))
        h = h + matmul(heads_out, weights.wo[layer])

    logits = matmul(h, weights.unembedding)[0]
    return logits, CompressedKV(layers=new_layers, next_position=position + 1)


def greedy(logits):
    """Index of the largest logit (lowest index on ties)."""
    return int(np.argmax(logits))
