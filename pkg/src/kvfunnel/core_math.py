"""Dense numeric kernels used by the toy model and the cache policies.

Storage is float32 throughout. Reductions accumulate in float64 with a strict
left-to-right order (``np.add.accumulate``), so each output element is a pure
function of its own row and column regardless of how many rows are processed
together. That is what makes a single decode step bit-identical to the
matching row of a full prefill.
"""

import numpy as np

from .errors import ParameterError, ShapeError

# rows * inner * cols elements per float64 scratch block
_BLOCK_ELEMS = 1 << 22


def as_matrix(x):
    """Coerce to a 2-D C-contiguous float32 array."""
    m = np.ascontiguousarray(x, dtype=np.float32)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def _ordered_sum(x, axis):
    """Sequential float64 sum along ``axis`` (no pairwise reordering)."""
    if x.shape[axis] == 0:
        return np.zeros(np.delete(x.shape, axis), dtype=np.float64)
    acc = np.add.accumulate(x, axis=axis, dtype=np.float64)
    return np.take(acc, -1, axis=axis)


def matmul(a, b):
    """Matrix product ``a @ b`` with float64 accumulation in fixed k-order.

    Raises :class:`ShapeError` naming both shapes on an inner-dimension
    mismatch.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.empty((rows, cols), dtype=np.float32)
    if rows == 0 or cols == 0:
        return out
    if inner == 0:
        out[:] = 0.0
        return out
    b64 = b.astype(np.float64)
    step = max(1, _BLOCK_ELEMS // max(1, inner * cols))
    for start in range(0, rows, step):
        blk = a[start:start + step].astype(np.float64)
        # float32 x float32 products are exact in float64
        prod = blk[:, :, None] * b64[None, :, :]
        out[start:start + step] = _ordered_sum(prod, axis=1)
    return out


def softmax_rows(m, mask=None):
    """Row-wise softmax with max subtraction.

    ``mask`` is an optional boolean array of the same shape; ``False`` entries
    receive probability exactly 0. Every row must keep at least one entry.
    """
    x = np.asarray(m, dtype=np.float32)
    if x.ndim == 1:
        return softmax_rows(x[None, :], None if mask is None else np.asarray(mask)[None, :])[0]
    x64 = x.astype(np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match {x.shape}")
        if x.shape[1] and not mask.any(axis=1).all():
            raise ParameterError("softmax mask leaves a row empty")
        x64 = np.where(mask, x64, -np.inf)
    if x.shape[1] == 0:
        return x.copy()
    peak = np.max(x64, axis=1, keepdims=True)
    e = np.exp(x64 - peak)
    total = _ordered_sum(e, axis=1)[:, None]
    return (e / total).astype(np.float32)


def pool_1d(scores, kernel, mode="avg"):
    """Same-length 1-D pooling with truncated edge windows.

    ``avg`` divides each window by its actual (possibly truncated) length, so
    constant vectors are fixed points. ``kernel=1`` is the identity.
    """
    v = np.asarray(scores, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"pool_1d expects a vector, got shape {v.shape}")
    if isinstance(kernel, bool) or int(kernel) != kernel:
        raise ParameterError(f"pooling kernel must be an integer, got {kernel!r}")
    kernel = int(kernel)
    if kernel < 1 or kernel % 2 == 0:
        raise ParameterError(f"pooling kernel must be odd and >= 1, got {kernel}")
    if kernel > len(v):
        raise ParameterError(f"pooling kernel {kernel} exceeds vector length {len(v)}")
    if mode not in ("avg", "max"):
        raise ParameterError(f"unknown pooling mode {mode!r}")
    if kernel == 1:
        return v.copy()

    n = len(v)
    half = kernel // 2
    if mode == "max":
        out = v.copy()
        for off in range(1, half + 1):
            np.maximum(out[off:], v[:-off], out=out[off:])
            np.maximum(out[:-off], v[off:], out=out[:-off])
        return out

    total = np.zeros(n, dtype=np.float64)
    count = np.zeros(n, dtype=np.float64)
    # fixed offset order: -half .. +half
    for off in range(-half, half + 1):
        if off < 0:
            total[-off:] += v[:off]
            count[-off:] += 1
        elif off == 0:
            total += v
            count += 1
        else:
            total[:-off] += v[off:]
            count[:-off] += 1
    return total / count
