"""Prompt to Transfer (P2T) for few-shot tabular prediction with LLMs."""

from ._p2t import (
    BackendError,
    BudgetExceeded,
    ConfigError,
    Dataset,
    Error,
    cache_key,
    conventional_identify,
    correlation_prompt,
    dump_prompts,
    estimate_tokens,
    icl_prompt,
    knn_predict,
    logistic_predict,
    normalize_for_golden,
    p2t_prompt,
    parse_class,
    parse_feature,
    parse_number,
    run,
)

__all__ = [
    "BackendError",
    "BudgetExceeded",
    "ConfigError",
    "Dataset",
    "Error",
    "cache_key",
    "conventional_identify",
    "correlation_prompt",
    "dump_prompts",
    "estimate_tokens",
    "icl_prompt",
    "knn_predict",
    "logistic_predict",
    "normalize_for_golden",
    "p2t_prompt",
    "parse_class",
    "parse_feature",
    "parse_number",
    "run",
]
