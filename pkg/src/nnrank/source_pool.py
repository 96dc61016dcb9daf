"""Concatenated source pool and the row -> dataset mapping.

All source datasets are stacked into one contiguous matrix so the search
kernel is a single scan; an ordered offset table records which rows belong to
which dataset. Exclusions (same-language sources, explicit ids) are expressed
as lightweight views over the pool rather than rebuilds, so one pool serves
every target language.

Pool cache layout (``save_pool_cache``): one embedding-file record holding
the concatenated matrix under a synthetic metadata block, followed by a u32
trailer length and a UTF-8 JSON trailer listing per-dataset metadata with
``row_offset`` / ``row_count``.
"""

from __future__ import annotations

import json
import struct
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .embed_store import (
    DatasetMeta,
    EmbedFormatError,
    EmbeddingMatrix,
    read_embedding_file,
    read_embedding_stream,
    write_embedding_stream,
)
from .errors import NNRankError

POOL_DATASET_ID = "__pool__"
_TRAILER_LEN = struct.Struct("<I")


class PoolBuildError(NNRankError):
    """Pool construction failed."""


class DimMismatchError(PoolBuildError):
    """Member datasets disagree on embedding width."""


class LayerMismatchError(PoolBuildError):
    """Member datasets disagree on the encoder layer."""


class DuplicateDatasetError(PoolBuildError):
    """Two member datasets share a dataset_id."""


class EmptyViewError(NNRankError):
    """A filter excluded every dataset in the pool."""


class RowBoundsError(NNRankError, IndexError):
    """Row index outside [0, pool rows)."""


@dataclass(frozen=True)
class PoolEntry:
    meta: DatasetMeta
    row_offset: int
    row_count: int


class SourcePool:
    """Immutable concatenation of source embedding matrices.

    Row block i holds dataset i's matrix verbatim, in build order. Offsets
    are contiguous: entry i+1 starts where entry i ends.
    """

    def __init__(self, matrix: EmbeddingMatrix, entries: Sequence[PoolEntry]) -> None:
        self.matrix = matrix
        self.entries = tuple(entries)
        self._starts = [e.row_offset for e in self.entries]

    @classmethod
    def from_parts(cls, parts: Sequence[tuple[EmbeddingMatrix, DatasetMeta]]) -> SourcePool:
        """Concatenate (matrix, meta) pairs, in order, into one pool."""
        if not parts:
            raise PoolBuildError("pool needs at least one dataset")
        dim = parts[0][0].dim
        layer = parts[0][1].layer
        seen: set[str] = set()
        entries: list[PoolEntry] = []
        offset = 0
        for matrix, meta in parts:
            if matrix.dim != dim:
                raise DimMismatchError(
                    f"dataset {meta.dataset_id!r} has dim {matrix.dim}, pool has dim {dim}"
                )
            if meta.layer != layer:
                raise LayerMismatchError(
                    f"dataset {meta.dataset_id!r} is layer {meta.layer}, pool is layer {layer}"
                )
            if meta.dataset_id in seen:
                raise DuplicateDatasetError(f"duplicate dataset_id {meta.dataset_id!r}")
            seen.add(meta.dataset_id)
            entries.append(PoolEntry(meta, offset, matrix.rows))
            offset += matrix.rows
        stacked = np.concatenate([m.data for m, _ in parts], axis=0)
        return cls(EmbeddingMatrix(stacked), entries)

    @property
    def rows(self) -> int:
        return self.matrix.rows

    @property
    def dim(self) -> int:
        return self.matrix.dim

    @property
    def layer(self) -> int:
        return self.entries[0].meta.layer

    def dataset_ids(self) -> list[str]:
        return [e.meta.dataset_id for e in self.entries]

    def map_row(self, row: int) -> str:
        """Dataset id owning global ``row``; O(log n) over the offset table."""
        if not 0 <= row < self.rows:
            raise RowBoundsError(f"row {row} outside [0, {self.rows})")
        return self.entries[bisect_right(self._starts, row) - 1].meta.dataset_id

    def filter_view(
        self,
        exclude_isos: Iterable[str] = (),
        exclude_ids: Iterable[str] = (),
    ) -> PoolView:
        """View exposing only rows of datasets not excluded by ISO code or id.

        The pool itself is untouched; relative row order of kept datasets is
        preserved. Excluding everything raises :class:`EmptyViewError`.
        """
        isos = frozenset(exclude_isos)
        ids = frozenset(exclude_ids)
        kept = [
            e
            for e in self.entries
            if e.meta.iso639_3 not in isos and e.meta.dataset_id not in ids
        ]
        if not kept:
            raise EmptyViewError("every dataset in the pool was excluded")
        return PoolView(self, kept)


class PoolView:
    """Read-only subset of a pool, by whole datasets.

    Row indices reported by the search kernel stay global (into the
    underlying pool), so ``pool.map_row`` remains valid on them.
    """

    def __init__(self, pool: SourcePool, entries: Sequence[PoolEntry]) -> None:
        self.pool = pool
        self.entries = tuple(entries)

    @property
    def rows(self) -> int:
        return sum(e.row_count for e in self.entries)

    @property
    def dim(self) -> int:
        return self.pool.dim

    def dataset_ids(self) -> list[str]:
        return [e.meta.dataset_id for e in self.entries]

    def iter_blocks(self) -> Iterator[tuple[int, np.ndarray]]:
        """Yield (global row offset, float32 block) per kept dataset."""
        data = self.pool.matrix.data
        for e in self.entries:
            yield e.row_offset, data[e.row_offset : e.row_offset + e.row_count]


def build_pool(files: Sequence[str | Path]) -> SourcePool:
    """Read embedding files and concatenate them, in manifest order."""
    if not files:
        raise PoolBuildError("manifest lists no files")
    parts = [read_embedding_file(path) for path in files]
    return SourcePool.from_parts(parts)


def _pool_meta(pool: SourcePool) -> DatasetMeta:
    models = {e.meta.model_id for e in pool.entries}
    return DatasetMeta(
        dataset_id=POOL_DATASET_ID,
        iso639_3="mul",
        model_id=models.pop() if len(models) == 1 else "mixed",
        layer=pool.layer,
        corpus_tag="pool-cache",
        line_count=sum(e.meta.line_count for e in pool.entries),
    )


def save_pool_cache(pool: SourcePool, path: str | Path) -> None:
    """Persist a built pool: embedding record + JSON entries trailer."""
    trailer = json.dumps(
        [
            {
                "dataset_id": e.meta.dataset_id,
                "iso639_3": e.meta.iso639_3,
                "model_id": e.meta.model_id,
                "layer": e.meta.layer,
                "corpus_tag": e.meta.corpus_tag,
                "line_count": e.meta.line_count,
                "row_offset": e.row_offset,
                "row_count": e.row_count,
            }
            for e in pool.entries
        ],
        sort_keys=True,
        ensure_ascii=False,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        write_embedding_stream(fh, pool.matrix, _pool_meta(pool))
        fh.write(_TRAILER_LEN.pack(len(trailer)))
        fh.write(trailer)


def load_pool_cache(path: str | Path) -> SourcePool:
    """Load a pool written by :func:`save_pool_cache`."""
    with open(path, "rb") as fh:
        matrix, meta = read_embedding_stream(fh, expect_eof=False)
        raw_len = fh.read(_TRAILER_LEN.size)
        if len(raw_len) < _TRAILER_LEN.size:
            raise EmbedFormatError("pool cache is missing its entries trailer")
        (trailer_len,) = _TRAILER_LEN.unpack(raw_len)
        trailer = fh.read(trailer_len)
        if len(trailer) < trailer_len or fh.read(1):
            raise EmbedFormatError("pool cache trailer length disagrees with file size")
    if meta.dataset_id != POOL_DATASET_ID:
        raise EmbedFormatError(f"not a pool cache: embedded id is {meta.dataset_id!r}")
    try:
        records = json.loads(trailer.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EmbedFormatError(f"pool cache trailer is not valid JSON: {exc}") from exc
    entries = [
        PoolEntry(
            meta=DatasetMeta(
                dataset_id=r["dataset_id"],
                iso639_3=r["iso639_3"],
                model_id=r["model_id"],
                layer=int(r["layer"]),
                corpus_tag=r["corpus_tag"],
                line_count=int(r["line_count"]),
            ),
            row_offset=int(r["row_offset"]),
            row_count=int(r["row_count"]),
        )
        for r in records
    ]
    total = sum(e.row_count for e in entries)
    if not entries or entries[0].row_offset != 0 or total != matrix.rows or any(
        entries[i + 1].row_offset != entries[i].row_offset + entries[i].row_count
        for i in range(len(entries) - 1)
    ):
        raise EmbedFormatError("pool cache trailer offsets do not tile the matrix")
    return SourcePool(matrix, entries)
