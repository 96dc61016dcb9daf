"""Bit-exact binary file format for subword embedding matrices.

One file holds one dataset: a rows x dim float32 matrix of hidden states in
corpus token order, plus the metadata identifying where it came from. The
format is fixed little-endian so files are portable across hosts:

    bytes 0-3    magic "NNRK"
    bytes 4-5    version        u16 = 1
    bytes 6-7    reserved       u16 = 0
    bytes 8-11   dim            u32
    bytes 12-19  rows           u64
    bytes 20-23  meta_len       u32
    next meta_len bytes          UTF-8 JSON metadata object
    remainder    rows * dim float32 values, row-major

No padding, no checksum. v1 supports float32 only; anything else is rejected
rather than silently converted, so a written file always round-trips to the
exact bits that went in.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import NNRankError

MAGIC = b"NNRK"
VERSION = 1
_HEADER = struct.Struct("<4sHHIQI")  # magic, version, reserved, dim, rows, meta_len
META_KEYS = ("dataset_id", "iso639_3", "model_id", "layer", "corpus_tag", "line_count")


class EmbedFormatError(NNRankError):
    """File is not a valid embedding file (magic, version, header, metadata)."""


class SizeMismatchError(NNRankError):
    """Declared shape and actual payload length disagree."""


class NonFiniteError(NNRankError):
    """Matrix payload contains NaN or Inf."""


class ValidationError(NNRankError):
    """A domain object violates its invariants."""


@dataclass(frozen=True)
class DatasetMeta:
    """Identity of one encoded dataset.

    ``layer`` is recorded so pools can refuse to mix representations taken
    from different encoder layers. ``line_count`` is the number of corpus
    lines that were encoded (not the number of subword rows).
    """

    dataset_id: str
    iso639_3: str
    model_id: str
    layer: int
    corpus_tag: str
    line_count: int

    def __post_init__(self) -> None:
        if not self.dataset_id:
            raise ValidationError("dataset_id must be non-empty")
        if len(self.iso639_3) != 3 or not self.iso639_3.isalpha():
            raise ValidationError(
                f"iso639_3 must be a 3-letter language code, got {self.iso639_3!r}"
            )
        if self.layer < 0:
            raise ValidationError(f"layer must be >= 0, got {self.layer}")
        if self.line_count < 0:
            raise ValidationError(f"line_count must be >= 0, got {self.line_count}")


class EmbeddingMatrix:
    """Read-only rows x dim float32 matrix of subword representations.

    Wraps a C-contiguous float32 array and marks it read-only, so loaded
    matrices can be shared freely across threads. Row order matches corpus
    token order.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray) -> None:
        if not isinstance(data, np.ndarray) or data.ndim != 2:
            raise ValidationError("embedding data must be a 2-D numpy array")
        if data.dtype != np.float32:
            raise ValidationError(
                f"embedding data must be float32, got {data.dtype} (v1 supports no other dtype)"
            )
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"matrix must be at least 1x1, got {data.shape}")
        if not np.isfinite(data).all():
            raise NonFiniteError("matrix contains NaN or Inf entries")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        self.data = data

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.data.shape == other.data.shape and self.data.tobytes() == other.data.tobytes()

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"EmbeddingMatrix({self.rows}x{self.dim})"


def _meta_to_json(meta: DatasetMeta) -> bytes:
    return json.dumps(asdict(meta), sort_keys=True, ensure_ascii=False).encode("utf-8")


def _meta_from_json(raw: bytes) -> DatasetMeta:
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EmbedFormatError(f"metadata block is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise EmbedFormatError("metadata block must be a JSON object")
    missing = [k for k in META_KEYS if k not in obj]
    if missing:
        raise EmbedFormatError(f"metadata missing keys: {missing}")
    try:
        return DatasetMeta(
            dataset_id=str(obj["dataset_id"]),
            iso639_3=str(obj["iso639_3"]),
            model_id=str(obj["model_id"]),
            layer=int(obj["layer"]),
            corpus_tag=str(obj["corpus_tag"]),
            line_count=int(obj["line_count"]),
        )
    except (TypeError, ValueError, ValidationError) as exc:
        raise EmbedFormatError(f"metadata has invalid values: {exc}") from exc


def write_embedding_stream(fh: BinaryIO, matrix: EmbeddingMatrix, meta: DatasetMeta) -> None:
    """Write one embedding record to an open binary stream."""
    meta_json = _meta_to_json(meta)
    fh.write(_HEADER.pack(MAGIC, VERSION, 0, matrix.dim, matrix.rows, len(meta_json)))
    fh.write(meta_json)
    # '<f4' is a no-op view on little-endian hosts, a byte swap on big-endian.
    fh.write(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())


def write_embedding_file(matrix: EmbeddingMatrix, meta: DatasetMeta, path: str | Path) -> None:
    """Write ``matrix`` + ``meta`` to ``path`` in the v1 format.

    The written file reads back bitwise-equal to the input. Single writer per
    path is assumed; concurrent readers of a finished file are safe.
    """
    with open(path, "wb") as fh:
        write_embedding_stream(fh, matrix, meta)


def read_embedding_stream(
    fh: BinaryIO, *, expect_eof: bool = True
) -> tuple[EmbeddingMatrix, DatasetMeta]:
    """Read one embedding record from an open binary stream.

    With ``expect_eof`` (the default) any trailing bytes are a
    :class:`SizeMismatchError`; container formats that append their own
    trailer pass ``expect_eof=False`` and keep reading afterwards.
    """
    header = fh.read(_HEADER.size)
    if len(header) < _HEADER.size:
        raise EmbedFormatError(
            f"file too short for header: got {len(header)} bytes, need {_HEADER.size}"
        )
    magic, version, _reserved, dim, rows, meta_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise EmbedFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise EmbedFormatError(f"unsupported version {version}, expected {VERSION}")
    if rows < 1 or dim < 1:
        raise EmbedFormatError(f"header declares empty matrix: rows={rows}, dim={dim}")

    meta_json = fh.read(meta_len)
    if len(meta_json) < meta_len:
        raise SizeMismatchError(
            f"metadata truncated: declared {meta_len} bytes, got {len(meta_json)}"
        )
    meta = _meta_from_json(meta_json)

    expected = rows * dim * 4
    payload = fh.read(expected)
    if len(payload) < expected:
        raise SizeMismatchError(
            f"payload truncated: rows={rows} dim={dim} needs {expected} bytes, got {len(payload)}"
        )
    if expect_eof and fh.read(1):
        raise SizeMismatchError("trailing bytes after payload")

    data = np.frombuffer(payload, dtype="<f4").astype(np.float32, copy=False)
    data = data.reshape(rows, dim)
    if not np.isfinite(data).all():
        raise NonFiniteError("payload contains NaN or Inf values")
    return EmbeddingMatrix(data.copy()), meta


def read_embedding_file(path: str | Path) -> tuple[EmbeddingMatrix, DatasetMeta]:
    """Load and validate an embedding file.

    Raises :class:`EmbedFormatError` for bad magic/version/metadata,
    :class:`SizeMismatchError` when the payload length disagrees with the
    header, and :class:`NonFiniteError` for NaN/Inf entries. The file itself
    is never modified.
    """
    with open(path, "rb") as fh:
        return read_embedding_stream(fh, expect_eof=True)
