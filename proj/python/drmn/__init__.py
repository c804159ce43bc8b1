"""Retrieval-augmented dialogue generation with a shared reading memory."""

from ._drmn import (
    Corpus,
    DataError,
    Error,
    NumericError,
    RetrievalCache,
    UsageError,
    Vocabulary,
    bleu,
    bm25,
    default_config,
    evaluate,
    generate,
    grad_check,
    rouge1,
    rougeL,
    run_cli,
    tokenize,
    train,
)

__all__ = [
    "Corpus",
    "DataError",
    "Error",
    "NumericError",
    "RetrievalCache",
    "UsageError",
    "Vocabulary",
    "bleu",
    "bm25",
    "default_config",
    "evaluate",
    "generate",
    "grad_check",
    "rouge1",
    "rougeL",
    "run_cli",
    "tokenize",
    "train",
]
