"""Binary weight files (``TKVW``) and attention dumps (``ATTN``).

Both formats are little-endian throughout; docs/FORMATS.md has the layout.
"""

import struct

import numpy as np

from .errors import InputError
from .model import ModelConfig, ModelWeights

WEIGHTS_MAGIC = b"TKVW"
WEIGHTS_VERSION = 1
ATTN_MAGIC = b"ATTN"
ATTN_VERSION = 1

_F32 = np.dtype("<f4")


def save_weights(weights, path):
    cfg = weights.config
    header = struct.pack(
        "<4sI8I",
        WEIGHTS_MAGIC,
        WEIGHTS_VERSION,
        cfg.num_layers,
        cfg.num_heads,
        cfg.head_dim,
        cfg.model_dim,
        cfg.vocab_size,
        cfg.max_context,
        cfg.seed & 0xFFFFFFFF,
        cfg.seed >> 32,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for mat in weights.matrices():
            fh.write(np.ascontiguousarray(mat, dtype=_F32).tobytes())


def load_weights(path):
    with open(path, "rb") as fh:
        data = fh.read()
    head_size = struct.calcsize("<4sI8I")
    if len(data) < head_size or data[:4] != WEIGHTS_MAGIC:
        raise InputError(f"{path}: not a TKVW weight file")
    magic, version, m, h, dk, d, vocab, ctx, seed_lo, seed_hi = struct.unpack_from("<4sI8I", data)
    if version != WEIGHTS_VERSION:
        raise InputError(f"{path}: unsupported weight file version {version}")
    cfg = ModelConfig(num_layers=m, num_heads=h, head_dim=dk, model_dim=d, vocab_size=vocab,
                      seed=seed_lo | (seed_hi << 32), max_context=ctx)

    shapes = [(vocab, d)] + [(d, d)] * (4 * m) + [(d, vocab)]
    expected = head_size + sum(r * c for r, c in shapes) * 4
    if len(data) != expected:
        raise InputError(f"{path}: expected {expected} bytes, found {len(data)}")
    mats = []
    offset = head_size
    for rows, cols in shapes:
        arr = np.frombuffer(data, dtype=_F32, count=rows * cols, offset=offset)
        mats.append(arr.astype(np.float32).reshape(rows, cols))
        offset += rows * cols * 4
    layers = mats[1:-1]
    return ModelWeights(cfg, mats[0], tuple(layers[0::4]), tuple(layers[1::4]),
                        tuple(layers[2::4]), tuple(layers[3::4]), mats[-1])


def dump_attention(trace, path):
    """Write all layers' maps as one (layers, heads, n, n) float32 tensor."""
    tensor = np.stack(trace.attention).astype(_F32)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", ATTN_MAGIC, ATTN_VERSION, tensor.ndim))
        fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        fh.write(tensor.tobytes())


def load_attention(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != ATTN_MAGIC:
        raise InputError(f"{path}: not an ATTN dump")
    _, version, ndim = struct.unpack_from("<4sII", data)
    if version != ATTN_VERSION:
        raise InputError(f"{path}: unsupported ATTN version {version}")
    dims = struct.unpack_from(f"<{ndim}I", data, 12)
    offset = 12 + 4 * ndim
    count = int(np.prod(dims))
    if len(data) != offset + 4 * count:
        raise InputError(f"{path}: truncated or oversized ATTN payload")
    return np.frombuffer(data, dtype=_F32, count=count, offset=offset).astype(np.float32).reshape(dims)


def read_token_file(path):
    """Whitespace-separated non-negative integer token ids; ``#`` starts a comment."""
    ids = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            for word in line.split("#", 1)[0].split():
                try:
                    ids.append(int(word))
                except ValueError:
                    raise InputError(f"{path}:{lineno}: bad token id {word!r}") from None
    if not ids:
        raise InputError(f"{path}: no tokens")
    return np.asarray(ids, dtype=np.int64)
