import math

import numpy as np
import pytest

from kvfunnel import (
    ModelConfig,
    PolicyConfig,
    allocate_pyramid,
    allocate_uniform,
    attention_stats,
    compare_vs_full,
    layer_stats,
    memory_account,
    prefill,
    random_tokens,
    schedule_for,
)
from kvfunnel.model import ForwardTrace
from kvfunnel.policies import covering_budget


def uniform_causal(n):
    a = np.tril(np.ones((n, n)))
    return (a / a.sum(axis=1, keepdims=True)).astype(np.float32)


def test_uniform_rows_entropy_is_log_support():
    for s in (1, 2, 7, 100):
        row = np.full((1, 1, s), 1 / s, dtype=np.float32)
        entropy, *_ = attention_stats(row, window=0)
        assert abs(entropy - math.log(s)) <= 1e-6


def test_causal_uniform_entropy_averages_supports():
    n = 9
    entropy, _, top1, _ = attention_stats(uniform_causal(n)[None], window=0)
    assert abs(entropy - np.mean([math.log(q + 1) for q in range(n)])) <= 1e-6
    assert abs(top1 - np.mean([1 / (q + 1) for q in range(n)])) <= 1e-6


@pytest.mark.parametrize("w", [0, 1, 5])
def test_point_mass_rows(w):
    maps = np.eye(6, dtype=np.float32)[None].repeat(3, axis=0)
    entropy, locality, top1, sink = attention_stats(maps, w)
    assert entropy == 0.0
    assert top1 == 1.0 and locality == 1.0
    assert sink == pytest.approx(1 / 6)


def test_single_token_stats():
    (stats,) = layer_stats(ForwardTrace(attention=[np.ones((2, 1, 1), dtype=np.float32)], logits=None), 3)
    assert stats.entropy == 0.0
    assert stats.locality_mass == stats.top1_mass == stats.sink_mass == 1.0


def test_entropy_bounded_by_log_support():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s = int(rng.integers(1, 30))
        p = rng.dirichlet(np.ones(s) * rng.uniform(0.05, 5)).astype(np.float32)
        entropy, *_ = attention_stats(p[None, None], 0)
        assert entropy <= math.log(s) + 1e-6


def test_layer_stats_ranges(small_prefill):
    _, trace, _ = small_prefill
    for st in layer_stats(trace, 4):
        assert 0 <= st.entropy <= math.log(trace.seq_len) + 1e-9
        for mass in (st.locality_mass, st.top1_mass, st.sink_mass):
            assert 0 <= mass <= 1 + 1e-6


def test_window_negative_rejected():
    with pytest.raises(ValueError):
        attention_stats(np.ones((1, 1, 1)), -1)


# memory accounting

LLAMA_LIKE = ModelConfig(num_layers=32, num_heads=8, head_dim=128, model_dim=1024, vocab_size=8)


@pytest.mark.parametrize(
    "budget,percent",
    [(64, 0.8), (128, 1.6), (256, 3.1), (512, 6.3), (1024, 12.5), (2048, 25.0)],
)
def test_memory_ratio_table(budget, percent):
    _, _, ratio = memory_account(LLAMA_LIKE, 8192, allocate_uniform(32, budget, 8))
    assert ratio == budget / 8192
    assert abs(100 * ratio - percent) <= 0.05


def test_memory_full_when_budget_covers_context():
    retained, full, ratio = memory_account(LLAMA_LIKE, 100, allocate_uniform(32, 128, 8))
    assert retained == full and ratio == 1.0


def test_memory_bytes_formula():
    cfg = ModelConfig(num_layers=2, num_heads=3, head_dim=4, model_dim=12, vocab_size=5)
    retained, full, _ = memory_account(cfg, 50, allocate_uniform(2, 10, 2), bytes_per_scalar=2)
    assert full == 2 * 2 * 3 * 4 * 50 * 2
    assert retained == 2 * (10 + 10) * 3 * 4 * 2


def test_pyramid_and_uniform_cost_the_same():
    for budget in (64, 128, 512):
        pyr = memory_account(LLAMA_LIKE, 8192, allocate_pyramid(32, budget, 8, 20))
        uni = memory_account(LLAMA_LIKE, 8192, allocate_uniform(32, budget, 8))
        assert pyr[0] == uni[0]


# policy comparison


def test_full_policy_self_comparison(small_weights):
    toks = random_tokens(3, 30, 50)
    policy = PolicyConfig(kind="full", alpha=4)
    report = compare_vs_full(small_weights, toks, policy, allocate_uniform(3, 8, 4), 6)
    assert report.max_abs_diff == [0.0] * 6
    assert all(report.argmax_agree)
    assert report.ratio == 1.0
    assert report.retained_mass == pytest.approx([1.0] * 3, abs=1e-6)


@pytest.mark.parametrize("kind", ["streaming", "h2o", "snapkv", "pyramid"])
def test_covering_budget_gives_zero_diff(kind, small_weights):
    toks = random_tokens(4, 30, 50)
    policy = PolicyConfig(kind=kind, alpha=4, beta=2)
    sched = schedule_for(policy, 3, covering_budget(policy, 3, 30))
    report = compare_vs_full(small_weights, toks, policy, sched, 5)
    assert report.max_abs_diff == [0.0] * 5


@pytest.mark.parametrize("kind", ["streaming", "h2o", "snapkv"])
def test_minimal_budget_smoke(kind, small_weights):
    toks = random_tokens(5, 30, 50)
    policy = PolicyConfig(kind=kind, alpha=4)
    report = compare_vs_full(small_weights, toks, policy, allocate_uniform(3, 4, 4), 4)
    assert len(report.max_abs_diff) == 4
    assert all(np.isfinite(report.max_abs_diff)) and min(report.max_abs_diff) >= 0
    assert report.ratio == pytest.approx(4 / 30)


def test_free_running_mode(small_weights):
    toks = random_tokens(6, 30, 50)
    policy = PolicyConfig(kind="snapkv", alpha=4)
    report = compare_vs_full(small_weights, toks, policy, allocate_uniform(3, 6, 4), 5,
                             teacher_forcing=False)
    assert len(report.argmax_agree) == 5


def test_compare_rejects_zero_steps(small_weights):
    with pytest.raises(ValueError):
        compare_vs_full(small_weights, [1, 2], PolicyConfig(kind="full"), allocate_uniform(3, 8, 8), 0)


def test_report_bytes_match_memory_account(small_weights):
    toks = random_tokens(7, 30, 50)
    policy = PolicyConfig(kind="pyramid", alpha=4, beta=3)
    sched = allocate_pyramid(3, 12, 4, 3)
    report = compare_vs_full(small_weights, toks, policy, sched, 1)
    retained, full, _ = memory_account(small_weights.config, 30, sched)
    assert (report.retained_bytes, report.full_bytes) == (retained, full)


def test_trace_stats_per_layer(small_weights):
    trace, _ = prefill(small_weights, random_tokens(1, 20, 50))
    stats = layer_stats(trace)
    assert [s.layer for s in stats] == [0, 1, 2]
