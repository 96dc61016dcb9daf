"""Rank candidate source datasets for cross-lingual transfer.

Every target subword representation votes for the source datasets that
supply its k nearest neighbors under inner-product similarity; datasets are
ranked by total votes. The package covers the embedding file format, pool
building, exact k-NN search, tallying/ranking, the ranking-quality metrics
(NDCG@p, AvgPerf@p, overlap, diversity), and a seeded subsampling harness.
"""

__version__ = "0.1.0"

from .ablation import AblationPlan, run_ablation
from .embed_store import (
    DatasetMeta,
    EmbeddingMatrix,
    read_embedding_file,
    write_embedding_file,
)
from .knn_search import NeighborHit, SearchConfig, batch_top_k, top_k
from .rank_eval import (
    EvalReport,
    PerfTable,
    avg_perf_at_p,
    compare_runs,
    gold_relevance,
    ndcg_at_p,
    persistent_candidates,
    split_report,
    token_diversity,
    top_p_overlap,
)
from .ranker import RankRunConfig, Ranking, Tally, count_unranked, rank, subsample_rows
from .source_pool import PoolView, SourcePool, build_pool, load_pool_cache, save_pool_cache

__all__ = [
    "AblationPlan",
    "DatasetMeta",
    "EmbeddingMatrix",
    "EvalReport",
    "NeighborHit",
    "PerfTable",
    "PoolView",
    "RankRunConfig",
    "Ranking",
    "SearchConfig",
    "SourcePool",
    "Tally",
    "avg_perf_at_p",
    "batch_top_k",
    "build_pool",
    "compare_runs",
    "count_unranked",
    "gold_relevance",
    "load_pool_cache",
    "ndcg_at_p",
    "persistent_candidates",
    "rank",
    "read_embedding_file",
    "run_ablation",
    "save_pool_cache",
    "split_report",
    "subsample_rows",
    "token_diversity",
    "top_k",
    "top_p_overlap",
    "write_embedding_file",
]
