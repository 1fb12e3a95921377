"""Python bindings for the dwd core (world, agents, training, metrics)."""

from ._dwd import (
    ConfigError,
    LanguageModel,
    Model,
    default_config,
    diversity,
    evaluate,
    generate_examples,
    oracle_answer,
    sample_pool,
    setting_names,
    setting_pools,
)

__all__ = [
    "ConfigError",
    "LanguageModel",
    "Model",
    "default_config",
    "diversity",
    "evaluate",
    "generate_examples",
    "oracle_answer",
    "sample_pool",
    "setting_names",
    "setting_pools",
]
