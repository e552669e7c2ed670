"""
KV cache memory at long context
===============================

Retained fraction of the cache for a 32-layer, 8-KV-head model at 8k tokens.
"""

# %%
from kvfunnel import ModelConfig, allocate_pyramid, allocate_uniform, memory_account

cfg = ModelConfig(num_layers=32, num_heads=8, head_dim=128, model_dim=1024,
                  vocab_size=2, max_context=8192)

for budget in (64, 128, 256, 512, 1024, 2048):
    retained, full, ratio = memory_account(cfg, 8192, allocate_uniform(32, budget, 8))
    pyr, _, _ = memory_account(cfg, 8192, allocate_pyramid(32, budget, 8, 20))
    print(f"{budget:5d}  {retained / 2**20:7.1f} MiB of {full / 2**20:.0f} MiB  "
          f"{100 * ratio:6.2f}%  pyramid same: {pyr == retained}")
