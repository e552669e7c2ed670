from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvfunnel import ParameterError, allocate_pyramid, allocate_uniform
from kvfunnel.budget import pyramid_reals


def test_reference_setting_endpoints():
    # m=32, avg=128, alpha=8 -> k_total = 32 * 120 = 3840
    reals = pyramid_reals(32, 3840, 20)
    assert reals[0] == 240 and reals[-1] == 6
    assert reals[0] / reals[-1] == 40


def test_reference_setting_schedule():
    s = allocate_pyramid(32, 128, 8, 20)
    assert s.raw[0] == 240.0 and s.raw[-1] == 6.0
    assert s.total == 4096
    assert all(a >= b for a, b in zip(s.per_layer, s.per_layer[1:]))
    assert min(s.per_layer) >= 8
    assert 36 <= s.rounded_ratio <= 44


def test_two_layer_closed_form():
    # k_total = 2b, raw (2b, b) overshoots by 3/2 and rescales onto (4b/3, 2b/3)
    for b in (3, 10, 64, 100):
        s = allocate_pyramid(2, b, 0, 1)
        assert s.raw == (2.0 * b, float(b))
        assert s.total == 2 * b
        lo, hi = Fraction(4 * b, 3), Fraction(2 * b, 3)
        assert s.per_layer[0] in (int(lo), int(lo) + 1)
        assert s.per_layer[1] in (int(hi), int(hi) + 1)


def test_uniform_definition():
    s = allocate_uniform(4, 128, 8)
    assert s.per_layer == (128, 128, 128, 128)
    assert s.total == 4 * 128
    assert s.mode == "uniform"


@pytest.mark.parametrize("m", [0, 1])
def test_layers_must_be_at_least_two(m):
    with pytest.raises(ParameterError):
        allocate_uniform(m, 128, 8)
    with pytest.raises(ParameterError):
        allocate_pyramid(m, 128, 8, 20)


def test_pyramid_parameter_errors():
    with pytest.raises(ParameterError, match="alpha"):
        allocate_pyramid(8, 8, 8, 20)
    with pytest.raises(ParameterError, match="beta"):
        allocate_pyramid(8, 64, 8, 0.5)
    with pytest.raises(ParameterError):
        allocate_uniform(8, 4, 8)


def test_no_renormalize_keeps_raw_floors():
    s = allocate_pyramid(32, 128, 8, 20, renormalize=False)
    assert s.per_layer[0] == 248 and s.per_layer[-1] == 14
    # the raw reals overshoot k_total by 1 + 1/(2 beta)
    assert s.total - 32 * 8 <= 3840 * Fraction(41, 40)


@settings(max_examples=1000, deadline=None)
@given(
    m=st.integers(2, 80),
    budget=st.integers(2, 5000),
    alpha=st.integers(0, 64),
    beta=st.one_of(st.integers(1, 64), st.floats(1.0, 64.0)),
    renorm=st.booleans(),
)
def test_pyramid_invariants(m, budget, alpha, beta, renorm):
    if budget <= alpha:
        budget = alpha + 1 + budget % 7
    s = allocate_pyramid(m, budget, alpha, beta, renormalize=renorm)
    assert len(s.per_layer) == m
    assert all(k >= alpha for k in s.per_layer)
    assert all(a >= b for a, b in zip(s.per_layer, s.per_layer[1:]))

    k_total = m * (budget - alpha)
    reals = pyramid_reals(m, k_total, beta)
    assert reals[0] / reals[-1] == 2 * Fraction(beta)
    assert sum(reals) == k_total * (1 + 1 / (2 * Fraction(beta)))
    assert abs(float(sum(reals)) - k_total * (1 + 1 / (2 * beta))) <= 1e-9 * max(1, k_total)
    if renorm:
        assert s.total == m * budget
    else:
        assert 0 <= sum(reals) - (s.total - m * alpha) < m
