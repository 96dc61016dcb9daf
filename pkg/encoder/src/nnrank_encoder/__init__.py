"""Per-layer hidden-state extraction into the shared embedding file format."""

__version__ = "0.1.0"

from .embed_file import EmbedWriteError, write_embedding_file
from .encode import (
    EncodeError,
    EncodeJob,
    EncodeResult,
    ModelLoadError,
    count_nonspecial_subwords,
    encode_corpus,
    load_encoder,
    read_corpus_lines,
)

__all__ = [
    "EmbedWriteError",
    "EncodeError",
    "EncodeJob",
    "EncodeResult",
    "ModelLoadError",
    "count_nonspecial_subwords",
    "encode_corpus",
    "load_encoder",
    "read_corpus_lines",
    "write_embedding_file",
]
