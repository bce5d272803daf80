"""MobileNetV2 inference engine: model, preprocessing, optimizer and metrics."""

from ._mnv2 import (
    CLASS_NAMES,
    FEATURE_CHANNELS,
    Error,
    Model,
    confusion,
    dataset_stats,
    decode_image,
    lr_at,
    parameter_count,
    preprocess,
    resize,
    set_threads,
    sgd_step,
    summarize_runs,
    threads,
    validate_weights,
    write_synthetic_archive,
)

__all__ = [
    "CLASS_NAMES",
    "FEATURE_CHANNELS",
    "Error",
    "Model",
    "confusion",
    "dataset_stats",
    "decode_image",
    "lr_at",
    "parameter_count",
    "preprocess",
    "resize",
    "set_threads",
    "sgd_step",
    "summarize_runs",
    "threads",
    "validate_weights",
    "write_synthetic_archive",
]
