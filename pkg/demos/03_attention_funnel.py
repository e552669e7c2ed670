"""
Attention statistics by depth
=============================

Entropy, locality and concentration of the prefill attention maps.
"""

# %%
import numpy as np

from kvfunnel import ModelConfig, generate_weights, layer_stats, prefill, random_tokens

cfg = ModelConfig(num_layers=8, num_heads=4, head_dim=16, vocab_size=256, seed=3)
trace, _ = prefill(generate_weights(cfg), random_tokens(0, 384, cfg.vocab_size))

# %%
print("layer  entropy  local  top1   sink")
for s in layer_stats(trace, window=8):
    print(f"{s.layer:5d}  {s.entropy:7.3f}  {s.locality_mass:.3f}  {s.top1_mass:.3f}  {s.sink_mass:.3f}")

# %%
# upper bound: uniform causal attention over the same prefix lengths
print(np.mean(np.log(np.arange(1, trace.seq_len + 1))))
