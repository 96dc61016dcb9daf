"""Ranking-quality metrics and analysis measures.

Gold relevance is graded from measured downstream performance: the best
source for a target gets gamma_max, the next gamma_max - 1, and so on until
gamma_max datasets carry a positive grade; everything else is 0. NDCG@p is
then computed over the predicted order, where datasets the ranker could not
rank (zero tally) sit at rank infinity and contribute nothing. AvgPerf@p is
the mean downstream score of the predicted top-p sources.

Also here: top-p overlap / persistent-candidate counts for subsampling
analysis, per-token diversity and union counts, and report deltas for
layer / domain comparisons.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .embed_store import ValidationError
from .errors import ClampWarning, NNRankError
from .knn_search import NeighborHit
from .ranker import Ranking

GAIN_MODES = ("exp", "linear")
STD_MODES = ("population", "sample")


class MissingScoreError(NNRankError):
    """The performance table has no entry for a consulted (source, target) pair."""


class RelevanceCoverageError(NNRankError):
    """Gold relevance does not cover the predicted ranking's universe."""


class EmptyRankingError(NNRankError):
    """Metric needs at least one ranked dataset."""


class ReportMismatchError(NNRankError):
    """Two reports cannot be compared (different targets or cutoff)."""


class PerfTable:
    """(source_dataset_id, target_dataset_id) -> downstream score.

    Scores are unit-agnostic floats (percentage points in the usual setup);
    the caller's convention is echoed in reports, never converted.
    """

    def __init__(self, scores: Mapping[tuple[str, str], float] | None = None) -> None:
        self._scores: dict[tuple[str, str], float] = {}
        if scores:
            for (source_id, target_id), value in scores.items():
                self.add(source_id, target_id, value)

    def add(self, source_id: str, target_id: str, score: float) -> None:
        score = float(score)
        if not math.isfinite(score):
            raise ValidationError(f"score for ({source_id}, {target_id}) is not finite")
        key = (source_id, target_id)
        if key in self._scores:
            raise ValidationError(f"duplicate score for ({source_id}, {target_id})")
        self._scores[key] = score

    def get(self, source_id: str, target_id: str) -> float:
        try:
            return self._scores[(source_id, target_id)]
        except KeyError:
            raise MissingScoreError(
                f"no score for source {source_id!r} on target {target_id!r}"
            ) from None

    def __len__(self) -> int:
        return len(self._scores)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._scores

    @classmethod
    def from_csv(cls, path: str | Path) -> PerfTable:
        """Load from UTF-8 CSV with header ``source_id,target_id,score``."""
        table = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            required = {"source_id", "target_id", "score"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValidationError(
                    f"perf CSV must have header source_id,target_id,score, got {reader.fieldnames}"
                )
            for row in reader:
                table.add(row["source_id"], row["target_id"], float(row["score"]))
        return table

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source_id", "target_id", "score"])
            for (source_id, target_id), score in sorted(self._scores.items()):
                writer.writerow([source_id, target_id, repr(score)])


def gold_relevance(
    perf: PerfTable,
    target: str,
    sources: Sequence[str],
    gamma_max: int = 10,
) -> dict[str, int]:
    """Graded relevance for one target: gamma_max down to 1, then zeros.

    Sources are ordered by gold score descending (ties by ascending id);
    position i <= gamma_max gets gamma_max - i + 1, the rest get 0. Exactly
    min(gamma_max, len(sources)) datasets end up with a positive grade.
    """
    if gamma_max < 1:
        raise ValidationError(f"gamma_max must be >= 1, got {gamma_max}")
    by_gold = sorted(sources, key=lambda s: (-perf.get(s, target), s))
    relevance = {s: 0 for s in by_gold}
    for i, s in enumerate(by_gold[:gamma_max]):
        relevance[s] = gamma_max - i
    return relevance


def _gain(rel: int, mode: str) -> float:
    if mode == "exp":
        return float(2**rel - 1)
    if mode == "linear":
        return float(rel)
    raise ValidationError(f"gain must be one of {GAIN_MODES}, got {mode!r}")


def _dcg(relevances: Iterable[int], p: int, gain: str) -> float:
    return sum(
        _gain(rel, gain) / math.log2(i + 2) for i, rel in enumerate(list(relevances)[:p])
    )


def ndcg_at_p(
    predicted: Ranking,
    gold: Mapping[str, int],
    p: int,
    gain: str = "exp",
) -> float:
    """NDCG of the predicted order against graded gold relevance, cut at p.

    Predicted positions past the end of the ranked list are empty (unranked
    datasets have rank infinity, relevance 0) and contribute nothing. IDCG
    is the DCG of the gold relevances sorted descending.
    """
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    universe = set(predicted.top_ids()) | set(predicted.unranked)
    not_covered = universe - set(gold)
    if not_covered:
        raise RelevanceCoverageError(
            f"gold relevance missing datasets: {sorted(not_covered)}"
        )
    dcg = _dcg((gold[dataset_id] for dataset_id, _ in predicted.ordered), p, gain)
    idcg = _dcg(sorted(gold.values(), reverse=True), p, gain)
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def avg_perf_at_p(predicted: Ranking, perf: PerfTable, target: str, p: int) -> float:
    """Mean downstream score of the predicted top-p sources for ``target``.

    A ranking shorter than p averages over what is there (warning emitted):
    back-filling from the unranked set would credit sources the method
    could not actually rank.
    """
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    top = predicted.top_ids(p)
    if not top:
        raise EmptyRankingError(f"ranking for target {target!r} has no ranked datasets")
    if len(predicted.ordered) < p:
        warnings.warn(
            f"ranking for {target!r} has only {len(predicted.ordered)} datasets, p={p}",
            ClampWarning,
            stacklevel=2,
        )
    return sum(perf.get(s, target) for s in top) / len(top)


@dataclass(frozen=True)
class TargetEval:
    ndcg: float
    avg_perf: float


@dataclass(frozen=True)
class EvalReport:
    """Per-target metrics plus split-level mean and standard deviation."""

    per_target: dict[str, TargetEval]
    ndcg_mean: float
    ndcg_std: float
    avg_perf_mean: float
    avg_perf_std: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": dict(self.config),
            "per_target": {
                t: {"ndcg": e.ndcg, "avg_perf": e.avg_perf}
                for t, e in sorted(self.per_target.items())
            },
            "split": {
                "ndcg_mean": self.ndcg_mean,
                "ndcg_std": self.ndcg_std,
                "avg_perf_mean": self.avg_perf_mean,
                "avg_perf_std": self.avg_perf_std,
            },
        }

    @classmethod
    def from_dict(cls, obj: dict) -> EvalReport:
        return cls(
            per_target={
                t: TargetEval(float(e["ndcg"]), float(e["avg_perf"]))
                for t, e in obj["per_target"].items()
            },
            ndcg_mean=float(obj["split"]["ndcg_mean"]),
            ndcg_std=float(obj["split"]["ndcg_std"]),
            avg_perf_mean=float(obj["split"]["avg_perf_mean"]),
            avg_perf_std=float(obj["split"]["avg_perf_std"]),
            config=dict(obj.get("config", {})),
        )


def _std(values: Sequence[float], mean: float, mode: str) -> float:
    if mode not in STD_MODES:
        raise ValidationError(f"std mode must be one of {STD_MODES}, got {mode!r}")
    n = len(values)
    if n == 0 or (mode == "sample" and n == 1):
        return 0.0
    divisor = n if mode == "population" else n - 1
    return math.sqrt(sum((v - mean) ** 2 for v in values) / divisor)


def split_report(
    rankings: Mapping[str, Ranking],
    perf: PerfTable,
    p: int = 5,
    gamma_max: int = 10,
    gain: str = "exp",
    std: str = "population",
) -> EvalReport:
    """Evaluate one ranking per target and aggregate across the split.

    The mean is unweighted across targets; the standard deviation is
    population (divide by N) unless ``std="sample"``.
    """
    if not rankings:
        raise ValidationError("split_report needs at least one target ranking")
    per_target: dict[str, TargetEval] = {}
    for target_id, ranking in rankings.items():
        universe = sorted(set(ranking.top_ids()) | set(ranking.unranked))
        gold = gold_relevance(perf, target_id, universe, gamma_max)
        per_target[target_id] = TargetEval(
            ndcg=ndcg_at_p(ranking, gold, p, gain),
            avg_perf=avg_perf_at_p(ranking, perf, target_id, p),
        )
    ndcgs = [e.ndcg for e in per_target.values()]
    perfs = [e.avg_perf for e in per_target.values()]
    ndcg_mean = sum(ndcgs) / len(ndcgs)
    avg_perf_mean = sum(perfs) / len(perfs)
    return EvalReport(
        per_target=per_target,
        ndcg_mean=ndcg_mean,
        ndcg_std=_std(ndcgs, ndcg_mean, std),
        avg_perf_mean=avg_perf_mean,
        avg_perf_std=_std(perfs, avg_perf_mean, std),
        config={"p": p, "gamma_max": gamma_max, "gain": gain, "std": std},
    )


def top_p_overlap(a: Ranking, b: Ranking, p: int) -> int:
    """Size of the intersection of the two top-p prefixes."""
    return len(set(a.top_ids(p)) & set(b.top_ids(p)))


def persistent_candidates(prev: Ranking, nxt: Ranking, p: int) -> int:
    """How many of ``nxt``'s top-p were already in ``prev``'s top-p.

    Same set operation as :func:`top_p_overlap`; named for the consecutive
    subsample-size comparison it serves.
    """
    return top_p_overlap(prev, nxt, p)


@dataclass(frozen=True)
class TokenStats:
    diversity: float  # mean distinct datasets per instance's hit list
    union_count: int  # distinct datasets across all instances
    frequency: int  # instance count


def _hit_ids(hits: Sequence[NeighborHit | str]) -> list[str]:
    return [h.dataset_id if isinstance(h, NeighborHit) else str(h) for h in hits]


def token_diversity(
    hit_lists: Sequence[Sequence[NeighborHit | str]],
    tokens: Sequence[str],
) -> dict[str, TokenStats]:
    """Per-token diversity, union count and frequency over aligned hit lists.

    ``hit_lists[r]`` are the top-k hits of target row r and ``tokens[r]`` is
    that row's token string. Diversity of a token is the mean number of
    distinct source datasets per instance (bounded by k); the union count is
    the number of distinct datasets across all of its instances (bounded by
    k times frequency).
    """
    if len(hit_lists) != len(tokens):
        raise ValidationError(
            f"{len(hit_lists)} hit lists vs {len(tokens)} tokens; must align by row"
        )
    groups: dict[str, list[set[str]]] = {}
    for hits, token in zip(hit_lists, tokens):
        groups.setdefault(token, []).append(set(_hit_ids(hits)))
    return {
        token: TokenStats(
            diversity=sum(len(s) for s in sets) / len(sets),
            union_count=len(set().union(*sets)),
            frequency=len(sets),
        )
        for token, sets in groups.items()
    }


@dataclass(frozen=True)
class DeltaReport:
    """Per-metric differences (a - b), per target and at split level."""

    per_target: dict[str, TargetEval]
    ndcg_mean: float
    avg_perf_mean: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": dict(self.config),
            "per_target": {
                t: {"ndcg": e.ndcg, "avg_perf": e.avg_perf}
                for t, e in sorted(self.per_target.items())
            },
            "split": {"ndcg_mean": self.ndcg_mean, "avg_perf_mean": self.avg_perf_mean},
        }


def compare_runs(report_a: EvalReport, report_b: EvalReport) -> DeltaReport:
    """Subtract report_b from report_a, target by target and at split level."""
    if set(report_a.per_target) != set(report_b.per_target):
        raise ReportMismatchError("reports cover different target sets")
    if report_a.config.get("p") != report_b.config.get("p"):
        raise ReportMismatchError(
            f"reports use different p: {report_a.config.get('p')} vs {report_b.config.get('p')}"
        )
    per_target = {
        t: TargetEval(
            ndcg=report_a.per_target[t].ndcg - report_b.per_target[t].ndcg,
            avg_perf=report_a.per_target[t].avg_perf - report_b.per_target[t].avg_perf,
        )
        for t in report_a.per_target
    }
    return DeltaReport(
        per_target=per_target,
        ndcg_mean=report_a.ndcg_mean - report_b.ndcg_mean,
        avg_perf_mean=report_a.avg_perf_mean - report_b.avg_perf_mean,
        config={"a": dict(report_a.config), "b": dict(report_b.config)},
    )
