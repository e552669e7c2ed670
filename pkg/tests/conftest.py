import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from kvfunnel import ModelConfig, generate_weights, prefill, random_tokens  # noqa: E402


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    monkeypatch.delenv("KVFUNNEL_SEED", raising=False)


@pytest.fixture(scope="session")
def small_config():
    return ModelConfig(num_layers=3, num_heads=2, head_dim=8, model_dim=16, vocab_size=50, seed=7,
                       max_context=512)


@pytest.fixture(scope="session")
def small_weights(small_config):
    return generate_weights(small_config)


@pytest.fixture(scope="session")
def small_prefill(small_weights):
    tokens = random_tokens(11, 40, small_weights.config.vocab_size)
    trace, kv = prefill(small_weights, tokens)
    return tokens, trace, kv
