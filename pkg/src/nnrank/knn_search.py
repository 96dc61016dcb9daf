"""Exact top-k inner-product search over a (possibly filtered) source pool.

No index structure: pools at the scale this package targets are tractable by
a blocked scan, and exact search keeps every downstream tally deterministic.
Scores are accumulated in float64 over the float32 inputs, one dot product
per row, so results are reproducible to the bit on a given platform. Ties on
equal scores break by ascending global row index.

Single-query and batch search share one kernel, so ``batch_top_k`` is
rowwise identical to sequential ``top_k`` calls regardless of thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .embed_store import EmbeddingMatrix, ValidationError
from .errors import NNRankError
from .source_pool import PoolView


class ShapeError(NNRankError):
    """Query width does not match the pool width."""


@dataclass(frozen=True)
class NeighborHit:
    source_row: int  # global row index into the underlying pool
    dataset_id: str
    score: float


@dataclass(frozen=True)
class SearchConfig:
    k: int = 5
    normalize: bool = False  # False = raw inner product, True = cosine

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")


def _unit_rows(block: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(block, axis=1, keepdims=True)
    np.maximum(norms, 1.0e-300, out=norms)  # zero rows stay zero
    return block / norms


class _ViewScanner:
    """Float64 copy of a view's blocks, shared across queries of one call."""

    def __init__(self, view: PoolView, normalize: bool) -> None:
        blocks: list[np.ndarray] = []
        rows: list[np.ndarray] = []
        for offset, block in view.iter_blocks():
            b64 = block.astype(np.float64)
            if normalize:
                b64 = _unit_rows(b64)
            blocks.append(b64)
            rows.append(np.arange(offset, offset + block.shape[0], dtype=np.int64))
        self.blocks = blocks
        self.global_rows = np.concatenate(rows)
        self.normalize = normalize
        self.dim = view.dim
        self.n_rows = int(self.global_rows.shape[0])
        self.map_row = view.pool.map_row

    def top_k(self, query: np.ndarray, k: int) -> list[NeighborHit]:
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise ShapeError(f"query has dim {q.shape[0]}, pool has dim {self.dim}")
        if self.normalize:
            norm = float(np.linalg.norm(q))
            if norm > 0.0:
                q = q / norm
        scores = np.concatenate([b @ q for b in self.blocks])
        k_eff = min(k, self.n_rows)
        # lexsort: primary key -score (descending score), then row ascending.
        order = np.lexsort((self.global_rows, -scores))[:k_eff]
        return [
            NeighborHit(int(self.global_rows[i]), self.map_row(int(self.global_rows[i])), float(scores[i]))
            for i in order
        ]


def top_k(query: np.ndarray, view: PoolView, cfg: SearchConfig) -> list[NeighborHit]:
    """Exact top-k hits for one query vector.

    Returns exactly ``min(k, view rows)`` hits, scores non-increasing, ties
    by ascending global row index.
    """
    return _ViewScanner(view, cfg.normalize).top_k(query, cfg.k)


def batch_top_k(
    targets: EmbeddingMatrix | np.ndarray,
    view: PoolView,
    cfg: SearchConfig,
    threads: int = 1,
) -> list[list[NeighborHit]]:
    """Top-k hits for every target row.

    ``result[r]`` equals ``top_k`` on row r; rows are partitioned across
    ``threads`` workers with per-row results written to disjoint slots, so
    output is independent of thread count and processing order. A zero-row
    array yields an empty list.
    """
    data = targets.data if isinstance(targets, EmbeddingMatrix) else np.asarray(targets)
    if data.ndim != 2:
        raise ShapeError(f"targets must be 2-D, got shape {data.shape}")
    n = data.shape[0]
    if n == 0:
        return []
    if data.shape[1] != view.dim:
        raise ShapeError(f"targets have dim {data.shape[1]}, pool has dim {view.dim}")

    scanner = _ViewScanner(view, cfg.normalize)
    results: list[list[NeighborHit] | None] = [None] * n

    def run(rows: range) -> None:
        for r in rows:
            results[r] = scanner.top_k(data[r], cfg.k)

    if threads <= 1 or n == 1:
        run(range(n))
    else:
        workers = min(threads, n)
        step = -(-n // workers)
        chunks = [range(start, min(start + step, n)) for start in range(0, n, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for future in [pool.submit(run, chunk) for chunk in chunks]:
                future.result()
    return results  # type: ignore[return-value]
