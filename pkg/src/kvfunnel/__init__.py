"""Layer-wise KV-cache budgets and attention-guided eviction on a toy transformer."""

from .analysis import (
    LayerStats,
    RunReport,
    attention_stats,
    compare_vs_full,
    layer_stats,
    memory_account,
)
from .budget import BudgetSchedule, allocate_pyramid, allocate_uniform
from .core_math import matmul, pool_1d, softmax_rows
from .errors import (
    ConfigError,
    InputError,
    KVFunnelError,
    ParameterError,
    ShapeError,
    StateError,
)
from .model import (
    CompressedKV,
    ForwardTrace,
    ModelConfig,
    ModelWeights,
    decode_step,
    full_cache,
    generate_weights,
    greedy,
    prefill,
    random_tokens,
)
from .policies import (
    PolicyConfig,
    compress,
    schedule_for,
    score_all_queries,
    score_instruction_window,
    select_topk,
)

__version__ = "0.1.0"
