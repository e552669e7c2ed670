import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kvfunnel import ParameterError, ShapeError, matmul, pool_1d, softmax_rows
from oracles import pool_loop


def test_matmul_identity():
    m = np.array([[1.5, -2.0], [0.25, 7.0]], dtype=np.float32)
    assert np.array_equal(matmul(np.eye(2), m), m)


def test_matmul_hand_case():
    out = matmul([[1, 2], [3, 4]], [[5, 6], [7, 8]])
    assert out.tolist() == [[19, 22], [43, 50]]
    assert out.dtype == np.float32


def test_matmul_zero_row():
    assert matmul(np.zeros((1, 3)), [[4.0], [-1.0], [9.0]]).tolist() == [[0.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_rows_independent_of_batch():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(37, 19)).astype(np.float32)
    b = rng.normal(size=(19, 11)).astype(np.float32)
    full = matmul(a, b)
    for i in (0, 5, 36):
        assert np.array_equal(matmul(a[i:i + 1], b)[0], full[i])


def test_matmul_associativity_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a, b, c = (rng.uniform(-1, 1, size=(4, 4)).astype(np.float32) for _ in range(3))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.abs(left - right).max() <= 1e-4


def test_softmax_uniform_row():
    assert np.allclose(softmax_rows([[0.0, 0.0, 0.0, 0.0]]), 0.25, atol=0)


def test_softmax_large_logits_no_overflow():
    out = softmax_rows([[1000.0, 0.0]])
    assert np.isfinite(out).all()
    assert out[0, 0] == 1.0 and out[0, 1] < 1e-30


def test_softmax_log_closed_form():
    out = softmax_rows([[math.log(1), math.log(2), math.log(3)]])
    assert np.allclose(out, [[1 / 6, 2 / 6, 3 / 6]], atol=1e-7)


def test_softmax_mask_zeroes_entries():
    mask = np.tril(np.ones((3, 3), dtype=bool))
    out = softmax_rows(np.zeros((3, 3)), mask)
    assert out[0].tolist() == [1.0, 0.0, 0.0]
    assert np.allclose(out[2], 1 / 3)


def test_softmax_row_sums_many_random():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        rows, cols = rng.integers(1, 9, size=2)
        m = rng.normal(scale=rng.uniform(0.1, 50), size=(rows, cols))
        out = softmax_rows(m)
        assert np.abs(out.astype(np.float64).sum(axis=1) - 1).max() <= 1e-5


@settings(max_examples=100, deadline=None)
@given(arrays(np.float32, st.integers(2, 12), elements=st.floats(-30, 30, width=32)))
def test_softmax_monotone_within_row(row):
    out = softmax_rows(row[None, :])[0]
    order = np.argsort(row, kind="stable")
    assert np.all(np.diff(out[order]) >= 0)


def test_pool_identity_kernel_one():
    v = np.array([0.3, -1.0, 4.0, 2.5])
    assert np.array_equal(pool_1d(v, 1, "avg"), v)
    assert np.array_equal(pool_1d(v, 1, "max"), v)


def test_pool_avg_hand_case():
    assert pool_1d([0, 3, 0, 3, 0], 3, "avg").tolist() == [1.5, 1.0, 2.0, 1.0, 1.5]


def test_pool_max_hand_case():
    assert pool_1d([1, 5, 2], 3, "max").tolist() == [5, 5, 5]


@pytest.mark.parametrize("kernel", [0, 2, 4, -1])
def test_pool_rejects_bad_kernel(kernel):
    with pytest.raises(ParameterError):
        pool_1d([1.0, 2.0, 3.0, 4.0, 5.0], kernel)


def test_pool_rejects_oversized_kernel():
    with pytest.raises(ParameterError):
        pool_1d([1.0, 2.0], 3)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=20),
    st.integers(0, 5),
    st.sampled_from(["avg", "max"]),
)
def test_pool_matches_window_loop(values, half, mode):
    kernel = min(2 * half + 1, len(values) if len(values) % 2 else len(values) - 1)
    got = pool_1d(values, kernel, mode)
    assert np.allclose(got, pool_loop(values, kernel, mode), rtol=1e-12, atol=1e-9)
    assert len(got) == len(values)


def test_pool_avg_constant_vector_is_fixed_point():
    assert np.array_equal(pool_1d(np.full(9, 2.5), 7, "avg"), np.full(9, 2.5))
