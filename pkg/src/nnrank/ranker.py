"""Neighbor tallying and the final source-dataset ranking.

For every target subword row, each of its top-k neighbor hits increments the
owning dataset's tally by one (a dataset hit three times in one row's
neighbors gains three). Datasets are then sorted by count descending; a
dataset never hit keeps count zero and cannot be ranked -- it lands in the
``unranked`` set instead of being given an arbitrary position.

Counts are integers and addition commutes, so rankings are invariant to
target row order and to how many workers the search ran on.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, replace
from typing import Mapping

import numpy as np

from .embed_store import DatasetMeta, EmbeddingMatrix, ValidationError
from .errors import ClampWarning
from .knn_search import SearchConfig, batch_top_k
from .source_pool import DimMismatchError, LayerMismatchError, SourcePool

__all__ = [
    "RankRunConfig",
    "Tally",
    "Ranking",
    "rank",
    "subsample_rows",
    "count_unranked",
    "ranking_to_dict",
    "ranking_from_dict",
]


@dataclass(frozen=True)
class RankRunConfig:
    """Every knob of a ranking run, for reproducibility.

    ``layer`` must equal the pool's layer; it exists so a run against the
    wrong pool fails loudly instead of producing a silently mixed ranking.
    """

    k: int = 5
    layer: int = 8
    max_lines: int = 1000
    sample_size: int | None = None
    seed: int | None = None
    exclude_same_iso: bool = True
    normalize: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.sample_size is not None and self.sample_size < 1:
            raise ValidationError(f"sample_size must be >= 1, got {self.sample_size}")


@dataclass
class Tally:
    """Per-dataset hit counts; every dataset in the view has an entry."""

    counts: dict[str, int]

    @classmethod
    def for_datasets(
        cls, dataset_ids: list[str], prior_counts: Mapping[str, int] | None = None
    ) -> Tally:
        """All-zero tally over the view, optionally seeded with prior counts."""
        counts = {dataset_id: 0 for dataset_id in dataset_ids}
        if prior_counts:
            unknown = sorted(set(prior_counts) - set(counts))
            if unknown:
                raise ValidationError(f"prior counts name datasets not in the view: {unknown}")
            for dataset_id, c in prior_counts.items():
                counts[dataset_id] += int(c)
        return cls(counts)

    def increment(self, dataset_id: str) -> None:
        self.counts[dataset_id] += 1

    def total(self) -> int:
        return sum(self.counts.values())

    def to_ranking(self, config: RankRunConfig, target_id: str | None = None) -> Ranking:
        """Sort positive counts (descending, id-ascending on ties); rest unranked."""
        ordered = tuple(
            sorted(
                ((dataset_id, c) for dataset_id, c in self.counts.items() if c > 0),
                key=lambda item: (-item[1], item[0]),
            )
        )
        unranked = tuple(sorted(dataset_id for dataset_id, c in self.counts.items() if c == 0))
        return Ranking(ordered=ordered, unranked=unranked, config=config, target_id=target_id)


@dataclass(frozen=True)
class Ranking:
    ordered: tuple[tuple[str, int], ...]  # (dataset_id, count), count > 0
    unranked: tuple[str, ...]  # zero-count dataset ids, sorted
    config: RankRunConfig
    target_id: str | None = None

    def top_ids(self, p: int | None = None) -> list[str]:
        ids = [dataset_id for dataset_id, _ in self.ordered]
        return ids if p is None else ids[:p]


def subsample_rows(target: EmbeddingMatrix, sample_size: int, seed: int) -> EmbeddingMatrix:
    """Uniform sample of rows without replacement, kept in original row order.

    Deterministic per (seed, rows, sample_size). Asking for more rows than
    exist returns all of them and warns about the clamp.
    """
    if sample_size < 1:
        raise ValidationError(f"sample_size must be >= 1, got {sample_size}")
    if sample_size >= target.rows:
        if sample_size > target.rows:
            warnings.warn(
                f"sample_size {sample_size} exceeds {target.rows} rows; using all rows",
                ClampWarning,
                stacklevel=2,
            )
        return target
    idx = np.random.default_rng(seed).choice(target.rows, size=sample_size, replace=False)
    idx.sort()
    return EmbeddingMatrix(target.data[idx].copy())


def rank(
    target: tuple[EmbeddingMatrix, DatasetMeta],
    pool: SourcePool,
    cfg: RankRunConfig = RankRunConfig(),
    prior_counts: Mapping[str, int] | None = None,
    threads: int = 1,
) -> Ranking:
    """Rank the pool's datasets for one target dataset.

    ``prior_counts`` seeds the tally with nonzero starting values (inducing a
    default ordering for otherwise-unranked datasets); by default the tally
    starts at zero everywhere.
    """
    matrix, meta = target
    if matrix.dim != pool.dim:
        raise DimMismatchError(f"target has dim {matrix.dim}, pool has dim {pool.dim}")
    if meta.layer != pool.layer:
        raise LayerMismatchError(f"target is layer {meta.layer}, pool is layer {pool.layer}")
    if cfg.layer != pool.layer:
        raise LayerMismatchError(f"config expects layer {cfg.layer}, pool is layer {pool.layer}")

    view = pool.filter_view(exclude_isos={meta.iso639_3} if cfg.exclude_same_iso else ())

    if cfg.sample_size is not None:
        if cfg.seed is None:
            cfg = replace(cfg, seed=0)  # echo the seed actually used
        matrix = subsample_rows(matrix, cfg.sample_size, cfg.seed)

    if cfg.k > view.rows:
        warnings.warn(
            f"k={cfg.k} exceeds the {view.rows} visible pool rows; clamping",
            ClampWarning,
            stacklevel=2,
        )

    tally = Tally.for_datasets(view.dataset_ids(), prior_counts)
    search_cfg = SearchConfig(k=cfg.k, normalize=cfg.normalize)
    for hits in batch_top_k(matrix, view, search_cfg, threads=threads):
        for hit in hits:
            tally.increment(hit.dataset_id)
    return tally.to_ranking(cfg, target_id=meta.dataset_id)


def count_unranked(ranking: Ranking) -> int:
    """Number of zero-count datasets in the run's view."""
    return len(ranking.unranked)


def ranking_to_dict(ranking: Ranking) -> dict:
    """JSON-ready form: config echo, 1-based ranks, sorted unranked ids."""
    return {
        "config": asdict(ranking.config),
        "target_dataset_id": ranking.target_id,
        "ordered": [
            {"rank": i + 1, "dataset_id": dataset_id, "count": count}
            for i, (dataset_id, count) in enumerate(ranking.ordered)
        ],
        "unranked": list(ranking.unranked),
    }


def ranking_from_dict(obj: dict) -> Ranking:
    cfg_fields = {f: obj["config"][f] for f in RankRunConfig.__dataclass_fields__ if f in obj["config"]}
    return Ranking(
        ordered=tuple((e["dataset_id"], int(e["count"])) for e in obj["ordered"]),
        unranked=tuple(obj["unranked"]),
        config=RankRunConfig(**cfg_fields),
        target_id=obj.get("target_dataset_id"),
    )
