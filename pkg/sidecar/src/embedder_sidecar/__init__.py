"""Sentence-encoder sidecar for the synthetic-data curation toolkit."""

from .core import (
    DEFAULT_MODEL,
    EMBEDDING_MAGIC,
    EMBEDDING_VERSION,
    HEADER,
    FormatSkewError,
    ModelLoadError,
    SidecarConfig,
    embed_corpus,
    encode_texts,
    fingerprint,
    read_corpus,
    write_embeddings,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MODEL",
    "EMBEDDING_MAGIC",
    "EMBEDDING_VERSION",
    "HEADER",
    "FormatSkewError",
    "ModelLoadError",
    "SidecarConfig",
    "embed_corpus",
    "encode_texts",
    "fingerprint",
    "read_corpus",
    "write_embeddings",
    "__version__",
]
