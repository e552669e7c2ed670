"""
Cache policies on the toy decoder
=================================

Compress a prefilled cache with each policy and compare decoding against
the uncompressed cache.
"""

# %%
from kvfunnel import (
    ModelConfig,
    PolicyConfig,
    compare_vs_full,
    generate_weights,
    random_tokens,
    schedule_for,
)

cfg = ModelConfig(num_layers=8, num_heads=4, head_dim=16, vocab_size=256, seed=0)
weights = generate_weights(cfg)
tokens = random_tokens(1, 256, cfg.vocab_size)

# %%
for budget in (16, 32, 64):
    for kind in ("streaming", "h2o", "snapkv", "pyramid"):
        policy = PolicyConfig(kind=kind, alpha=8, beta=20)
        sched = schedule_for(policy, cfg.num_layers, budget)
        r = compare_vs_full(weights, tokens, policy, sched, decode_steps=8)
        print(f"{budget:3d} {kind:9s} max|dlogit| {max(r.max_abs_diff):.4f} "
              f"agree {sum(r.argmax_agree)}/8  cache {100 * r.ratio:.1f}%")

# %%
# with every layer holding the whole prompt nothing changes, bit for bit
from kvfunnel.policies import covering_budget

policy = PolicyConfig(kind="pyramid", alpha=8, beta=20)
sched = schedule_for(policy, cfg.num_layers, covering_budget(policy, cfg.num_layers, len(tokens)))
print(compare_vs_full(weights, tokens, policy, sched, decode_steps=8).max_abs_diff)
