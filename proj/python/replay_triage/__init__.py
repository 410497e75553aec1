"""Root-cause triage for failed database replay events."""

from ._core import (
    Dataset,
    EndpointError,
    Error,
    Model,
    NotFoundError,
    ParseError,
    PreconditionError,
    Replay,
    ValidationError,
    accuracy,
    build_dataset,
    compare,
    cross_validate,
    f1_comb,
    f1_macro,
    generate,
    parse_summary_response,
    prompt_prefix,
    summarize,
)

__all__ = [
    "Dataset",
    "EndpointError",
    "Error",
    "Model",
    "NotFoundError",
    "ParseError",
    "PreconditionError",
    "Replay",
    "ValidationError",
    "accuracy",
    "build_dataset",
    "compare",
    "cross_validate",
    "f1_comb",
    "f1_macro",
    "generate",
    "parse_summary_response",
    "prompt_prefix",
    "summarize",
]
