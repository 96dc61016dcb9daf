"""Command-line entry point.

Subcommands: build-pool, rank, evaluate, ablate, diversity, compare. Every
run's output embeds its full effective configuration, and all randomness
flows from explicit seeds, so rerunning a command reproduces its output
byte for byte.

Exit codes: 0 success, 2 usage error, 3 validation/data error, 4 I/O error.
Failures print one JSON object per line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .ablation import DEFAULT_SAMPLE_SIZES, DEFAULT_SEEDS, AblationPlan, run_ablation
from .embed_store import read_embedding_file
from .errors import NNRankError
from .rank_eval import GAIN_MODES, STD_MODES, PerfTable, compare_runs, split_report, token_diversity
from .ranker import RankRunConfig, rank, ranking_from_dict, ranking_to_dict
from .source_pool import build_pool, load_pool_cache, save_pool_cache

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_IO = 4

DEFAULTS = {
    "k": 5,
    "layer": 8,
    "p": 5,
    "gamma_max": 10,
    "max_lines": 1000,
    "gain": "exp",
    "std": "population",
    "exclude_same_iso": True,
    "normalize": False,
    "sample_sizes": list(DEFAULT_SAMPLE_SIZES),
    "seeds": list(DEFAULT_SEEDS),
}


def _dump_json(obj: dict, path: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("NNRANK_THREADS")
    return max(1, int(env)) if env else 1


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _cmd_build_pool(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    files = json.loads(manifest_path.read_text(encoding="utf-8"))
    if not isinstance(files, list) or not all(isinstance(f, str) for f in files):
        raise NNRankError("manifest must be a JSON array of file paths")
    # Relative manifest entries resolve against the manifest's directory.
    paths = [manifest_path.parent / f if not Path(f).is_absolute() else Path(f) for f in files]
    pool = build_pool(paths)
    save_pool_cache(pool, args.out)
    _dump_json(
        {
            "datasets": len(pool.entries),
            "rows": pool.rows,
            "dim": pool.dim,
            "layer": pool.layer,
            "out": str(args.out),
        },
        None,
    )
    return EXIT_OK


def _cmd_rank(args: argparse.Namespace) -> int:
    pool = load_pool_cache(args.pool)
    target = read_embedding_file(args.target)
    cfg = RankRunConfig(
        k=args.k,
        layer=pool.layer,
        max_lines=args.max_lines,
        sample_size=args.sample_size,
        seed=args.seed,
        exclude_same_iso=args.exclude_same_iso,
        normalize=args.normalize,
    )
    if args.hitlog:
        from .knn_search import SearchConfig, batch_top_k

        matrix, meta = target
        view = pool.filter_view(exclude_isos={meta.iso639_3} if cfg.exclude_same_iso else ())
        hit_lists = batch_top_k(matrix, view, SearchConfig(cfg.k, cfg.normalize), _threads(args.threads))
        with open(args.hitlog, "w", encoding="utf-8") as fh:
            for row, hits in enumerate(hit_lists):
                fh.write(
                    json.dumps(
                        {
                            "target_row": row,
                            "hits": [
                                {"dataset_id": h.dataset_id, "source_row": h.source_row, "score": h.score}
                                for h in hits
                            ],
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    ranking = rank(target, pool, cfg, threads=_threads(args.threads))
    _dump_json(ranking_to_dict(ranking), args.out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("rank,dataset_id,count\n")
            for i, (dataset_id, count) in enumerate(ranking.ordered):
                fh.write(f"{i + 1},{dataset_id},{count}\n")
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    perf = PerfTable.from_csv(args.perf)
    rankings = {}
    ranking_files = sorted(Path(args.rankings).glob("*.json"))
    if not ranking_files:
        raise NNRankError(f"no ranking JSON files found in {args.rankings}")
    for path in ranking_files:
        ranking = ranking_from_dict(json.loads(path.read_text(encoding="utf-8")))
        if ranking.target_id is None:
            raise NNRankError(f"{path} has no target_dataset_id; cannot evaluate")
        rankings[ranking.target_id] = ranking
    report = split_report(rankings, perf, p=args.p, gamma_max=args.gamma_max, gain=args.gain, std=args.std)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(report.to_dict(), str(out_dir / "report.json"))
    with open(out_dir / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write("target_id,ndcg_at_p,avg_perf_at_p\n")
        for target_id in sorted(report.per_target):
            entry = report.per_target[target_id]
            fh.write(f"{target_id},{entry.ndcg!r},{entry.avg_perf!r}\n")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    pool = load_pool_cache(args.pool)
    target = read_embedding_file(args.target)
    perf = PerfTable.from_csv(args.perf)
    plan = AblationPlan(sample_sizes=_int_list(args.sizes), seeds=_int_list(args.seeds))
    cfg = RankRunConfig(
        k=args.k,
        layer=pool.layer,
        max_lines=args.max_lines,
        exclude_same_iso=args.exclude_same_iso,
        normalize=args.normalize,
    )
    report = run_ablation(
        target,
        pool,
        perf,
        plan,
        cfg,
        p=args.p,
        gamma_max=args.gamma_max,
        gain=args.gain,
        threads=_threads(args.threads),
    )
    _dump_json(report, args.out)
    return EXIT_OK


def _cmd_diversity(args: argparse.Namespace) -> int:
    rows: dict[int, list[str]] = {}
    with open(args.hitlog, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            rows[int(record["target_row"])] = [h["dataset_id"] for h in record["hits"]]
    if sorted(rows) != list(range(len(rows))):
        raise NNRankError("hitlog target_row values must cover 0..N-1 exactly once")
    hit_lists = [rows[r] for r in range(len(rows))]
    tokens = Path(args.tokens).read_text(encoding="utf-8").splitlines()
    stats = token_diversity(hit_lists, tokens)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("token,diversity,union_count,frequency\n")
        for token in sorted(stats, key=lambda t: (-stats[t].frequency, t)):
            s = stats[token]
            escaped = '"' + token.replace('"', '""') + '"'
            fh.write(f"{escaped},{s.diversity!r},{s.union_count},{s.frequency}\n")
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    from .rank_eval import EvalReport

    report_a = EvalReport.from_dict(json.loads(Path(args.a).read_text(encoding="utf-8")))
    report_b = EvalReport.from_dict(json.loads(Path(args.b).read_text(encoding="utf-8")))
    _dump_json(compare_runs(report_a, report_b).to_dict(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnrank",
        description="Rank source datasets for cross-lingual transfer by "
        "nearest-neighbor tallies over subword embeddings.",
    )
    parser.add_argument("--version", action="version", version=f"nnrank {__version__}")
    parser.add_argument(
        "--config-dump",
        action="store_true",
        help="print all effective defaults as JSON and exit",
    )
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser("build-pool", help="concatenate embedding files into a pool cache")
    sp.add_argument("--manifest", required=True, help="JSON array of embedding file paths")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_build_pool)

    sp = sub.add_parser("rank", help="rank pool datasets for one target embedding file")
    sp.add_argument("--pool", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--k", type=int, default=DEFAULTS["k"])
    sp.add_argument("--max-lines", type=int, default=DEFAULTS["max_lines"])
    sp.add_argument("--sample-size", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument(
        "--exclude-same-iso",
        action=argparse.BooleanOptionalAction,
        default=DEFAULTS["exclude_same_iso"],
    )
    sp.add_argument("--normalize", action="store_true", default=DEFAULTS["normalize"])
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--hitlog", default=None, help="also dump per-row hits as JSON lines")
    sp.add_argument("--csv", default=None, help="also write rank,dataset_id,count CSV")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_rank)

    sp = sub.add_parser("evaluate", help="score ranking files against a performance table")
    sp.add_argument("--rankings", required=True, help="directory of ranking JSON files")
    sp.add_argument("--perf", required=True, help="CSV: source_id,target_id,score")
    sp.add_argument("--p", type=int, default=DEFAULTS["p"])
    sp.add_argument("--gamma-max", type=int, default=DEFAULTS["gamma_max"])
    sp.add_argument("--gain", choices=GAIN_MODES, default=DEFAULTS["gain"])
    sp.add_argument("--std", choices=STD_MODES, default=DEFAULTS["std"])
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("ablate", help="target-subsampling sweep for one target")
    sp.add_argument("--pool", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--perf", required=True)
    sp.add_argument("--sizes", default=",".join(str(s) for s in DEFAULT_SAMPLE_SIZES))
    sp.add_argument("--seeds", default=",".join(str(s) for s in DEFAULT_SEEDS))
    sp.add_argument("--k", type=int, default=DEFAULTS["k"])
    sp.add_argument("--max-lines", type=int, default=DEFAULTS["max_lines"])
    sp.add_argument("--p", type=int, default=DEFAULTS["p"])
    sp.add_argument("--gamma-max", type=int, default=DEFAULTS["gamma_max"])
    sp.add_argument("--gain", choices=GAIN_MODES, default=DEFAULTS["gain"])
    sp.add_argument(
        "--exclude-same-iso",
        action=argparse.BooleanOptionalAction,
        default=DEFAULTS["exclude_same_iso"],
    )
    sp.add_argument("--normalize", action="store_true", default=DEFAULTS["normalize"])
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_ablate)

    sp = sub.add_parser("diversity", help="per-token diversity stats from a hit log")
    sp.add_argument("--hitlog", required=True, help="JSON lines from rank --hitlog")
    sp.add_argument("--tokens", required=True, help="one token per line, aligned to target rows")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_diversity)

    sp = sub.add_parser("compare", help="subtract one evaluation report from another")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--out", default=None, help="default: stdout")
    sp.set_defaults(func=_cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config_dump:
        _dump_json(DEFAULTS, None)
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except NNRankError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
