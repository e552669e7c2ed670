"""
Per-layer budget schedules
==========================

Uniform versus pyramid allocation for a 32-layer model.
"""

# %%
from kvfunnel import allocate_pyramid, allocate_uniform

m, avg, alpha = 32, 128, 8
flat = allocate_uniform(m, avg, alpha)
pyr = allocate_pyramid(m, avg, alpha, beta=20)

# both spend the same total
print(flat.total, pyr.total)

# %%
# before rounding the endpoints are exactly 240 and 6 selectable slots
print(pyr.raw[0], pyr.raw[-1], pyr.raw_ratio)

# %%
for layer in (0, 1, 15, 16, 30, 31):
    print(f"layer {layer:2d}  uniform {flat.per_layer[layer]:4d}  pyramid {pyr.per_layer[layer]:4d}")

# %%
# larger beta flattens the top of the funnel
for beta in (2, 8, 14, 20):
    s = allocate_pyramid(m, avg, alpha, beta)
    print(beta, s.per_layer[0], s.per_layer[-1], float(s.rounded_ratio))

# %%
# without renormalization the raw line overshoots the average
raw = allocate_pyramid(m, avg, alpha, 20, renormalize=False)
print(raw.total, "vs", m * avg)
