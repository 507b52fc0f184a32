"""Growing-length transformer pretraining lab.

Thin Python surface over the C++ core: rotary-embedding math, the
synthetic corpus generator, model init/forward, the growing-length
training loop, the memory model and perplexity evaluation.
"""

from growlen._core import (
    GrowlenError,
    ModelConfig,
    ModelParams,
    RopeTable,
    Schedule,
    __version__,
    apply_rotary,
    build_schedule,
    build_table,
    estimate_memory,
    forward_logits,
    frequencies,
    gap_warnings,
    generate_corpus,
    init_params,
    max_tokens_at_capacity,
    param_count,
    perplexity,
    preview_schedule,
    relative_score,
    train_on_bytes,
)

__all__ = [
    "GrowlenError",
    "ModelConfig",
    "ModelParams",
    "RopeTable",
    "Schedule",
    "__version__",
    "apply_rotary",
    "build_schedule",
    "build_table",
    "estimate_memory",
    "forward_logits",
    "frequencies",
    "gap_warnings",
    "generate_corpus",
    "init_params",
    "max_tokens_at_capacity",
    "param_count",
    "perplexity",
    "preview_schedule",
    "relative_score",
    "train_on_bytes",
]
