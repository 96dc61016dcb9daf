"""Seeded target-subsampling sweeps.

For each (sample size, seed) pair the target rows are subsampled, re-ranked,
and scored against the full-data ("main") ranking: NDCG / average
performance, zero-count dataset counts, top-p overlap with the main ranking,
and per-seed persistence of top-p candidates from one size to the next.
Everything is driven by the explicit seed list, so a plan reruns to an
identical report.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Sequence

from .embed_store import DatasetMeta, EmbeddingMatrix, ValidationError
from .rank_eval import (
    PerfTable,
    avg_perf_at_p,
    gold_relevance,
    ndcg_at_p,
    persistent_candidates,
    top_p_overlap,
)
from .ranker import RankRunConfig, Ranking, count_unranked, rank
from .source_pool import SourcePool

DEFAULT_SAMPLE_SIZES = (10, 25, 50, 75, 100, 150, 250, 500, 1000, 2000)
DEFAULT_SEEDS = (0, 1, 2)


@dataclass(frozen=True)
class AblationPlan:
    sample_sizes: tuple[int, ...] = DEFAULT_SAMPLE_SIZES
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ValidationError("ablation plan needs at least one seed")
        if not self.sample_sizes:
            raise ValidationError("ablation plan needs at least one sample size")
        if any(s < 1 for s in self.sample_sizes):
            raise ValidationError(f"sample sizes must be >= 1, got {self.sample_sizes}")
        if any(a >= b for a, b in zip(self.sample_sizes, self.sample_sizes[1:])):
            raise ValidationError(
                f"sample sizes must be strictly increasing, got {self.sample_sizes}"
            )


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _pop_std(values: Sequence[float]) -> float:
    m = _mean(values)
    return (sum((v - m) ** 2 for v in values) / len(values)) ** 0.5


def _metrics(ranking: Ranking, gold: dict[str, int], perf: PerfTable, target: str, p: int, gain: str):
    return ndcg_at_p(ranking, gold, p, gain), avg_perf_at_p(ranking, perf, target, p)


def run_ablation(
    target: tuple[EmbeddingMatrix, DatasetMeta],
    pool: SourcePool,
    perf: PerfTable,
    plan: AblationPlan = AblationPlan(),
    cfg: RankRunConfig = RankRunConfig(),
    p: int = 5,
    gamma_max: int = 10,
    gain: str = "exp",
    threads: int = 1,
) -> dict:
    """Sweep sample sizes x seeds for one target and aggregate per size.

    Returns a JSON-ready report: the full-data main ranking's metrics, then
    per size the per-seed runs plus mean/std across seeds, mean top-p overlap
    with the main ranking, and persistent candidates relative to the previous
    size (same seed). Deterministic given the plan.
    """
    base_cfg = replace(cfg, sample_size=None, seed=None)
    main = rank(target, pool, base_cfg, threads=threads)
    target_id = target[1].dataset_id
    universe = sorted(set(main.top_ids()) | set(main.unranked))
    gold = gold_relevance(perf, target_id, universe, gamma_max)
    main_ndcg, main_avg = _metrics(main, gold, perf, target_id, p, gain)

    sizes_out: list[dict] = []
    prev_rankings: dict[int, Ranking] = {}
    for size in plan.sample_sizes:
        runs: list[dict] = []
        rankings_here: dict[int, Ranking] = {}
        for seed in plan.seeds:
            run_cfg = replace(cfg, sample_size=size, seed=seed)
            ranking = rank(target, pool, run_cfg, threads=threads)
            rankings_here[seed] = ranking
            ndcg, avg = _metrics(ranking, gold, perf, target_id, p, gain)
            run = {
                "seed": seed,
                "ndcg": ndcg,
                "avg_perf": avg,
                "num_unranked": count_unranked(ranking),
                "overlap_with_main": top_p_overlap(ranking, main, p),
                "persistent_from_prev": (
                    persistent_candidates(prev_rankings[seed], ranking, p)
                    if prev_rankings
                    else None
                ),
            }
            runs.append(run)
        sizes_out.append(
            {
                "size": size,
                "runs": runs,
                "ndcg_mean": _mean([r["ndcg"] for r in runs]),
                "ndcg_std": _pop_std([r["ndcg"] for r in runs]),
                "avg_perf_mean": _mean([r["avg_perf"] for r in runs]),
                "avg_perf_std": _pop_std([r["avg_perf"] for r in runs]),
                "overlap_with_main_mean": _mean([r["overlap_with_main"] for r in runs]),
                "num_unranked_mean": _mean([r["num_unranked"] for r in runs]),
            }
        )
        prev_rankings = rankings_here

    return {
        "target_dataset_id": target_id,
        "config": asdict(base_cfg),
        "plan": {"sample_sizes": list(plan.sample_sizes), "seeds": list(plan.seeds)},
        "eval": {"p": p, "gamma_max": gamma_max, "gain": gain},
        "main": {
            "ndcg": main_ndcg,
            "avg_perf": main_avg,
            "num_ranked": len(main.ordered),
            "num_unranked": count_unranked(main),
        },
        "sizes": sizes_out,
    }
