"""Multimodal affect estimation: autodiff core, bio-signal pipeline, models and evaluation."""

from ._core import (
    Error,
    ValidationError,
    __version__,
    bae_chains,
    binarize_affect,
    conv1d_full,
    conv1d_valid,
    conv2d_valid,
    gen_dataset,
    gen_ecg,
    gradcheck,
    gradcheck_cases,
    head_input_width,
    precision,
    rescale,
    resample,
    run_cli,
    segment,
    stream_widths,
    to_quadrant,
)

__all__ = [
    "Error",
    "ValidationError",
    "__version__",
    "bae_chains",
    "binarize_affect",
    "conv1d_full",
    "conv1d_valid",
    "conv2d_valid",
    "gen_dataset",
    "gen_ecg",
    "gradcheck",
    "gradcheck_cases",
    "head_input_width",
    "precision",
    "rescale",
    "resample",
    "run_cli",
    "segment",
    "stream_widths",
    "to_quadrant",
]
