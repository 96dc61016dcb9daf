"""Writer for the shared embedding file format (v1).

This is the wire format the ranking toolkit consumes; the encoder only ever
produces it. Layout, little-endian throughout:

    bytes 0-3    magic "NNRK"
    bytes 4-5    version        u16 = 1
    bytes 6-7    reserved       u16 = 0
    bytes 8-11   dim            u32
    bytes 12-19  rows           u64
    bytes 20-23  meta_len       u32
    next meta_len bytes          UTF-8 JSON metadata object
    remainder    rows * dim float32 values, row-major

Metadata keys: dataset_id, iso639_3, model_id, layer, corpus_tag,
line_count. Files are written to a temp name and renamed into place, so a
reader never sees a half-written file.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"NNRK"
VERSION = 1
_HEADER = struct.Struct("<4sHHIQI")


class EmbedWriteError(Exception):
    """The matrix or metadata cannot be written as a valid v1 file."""


def write_embedding_file(data: np.ndarray, meta: dict, path: str | Path) -> None:
    """Atomically write a float32 matrix plus metadata dict to ``path``."""
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        raise EmbedWriteError(f"matrix must be 2-D and non-empty, got shape {data.shape}")
    if data.dtype != np.float32:
        raise EmbedWriteError(f"matrix must be float32, got {data.dtype}")
    if not np.isfinite(data).all():
        raise EmbedWriteError("matrix contains NaN or Inf")
    required = {"dataset_id", "iso639_3", "model_id", "layer", "corpus_tag", "line_count"}
    missing = required - set(meta)
    if missing:
        raise EmbedWriteError(f"metadata missing keys: {sorted(missing)}")

    rows, dim = data.shape
    meta_json = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, dim, rows, len(meta_json)))
        fh.write(meta_json)
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    os.replace(tmp, path)
