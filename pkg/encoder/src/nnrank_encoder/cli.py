"""CLI: encode one corpus into an embedding file.

Exit codes mirror the ranking toolkit: 0 success, 2 usage error, 3
validation/data error, 4 I/O error. Failures print one JSON object on
stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from .embed_file import EmbedWriteError
from .encode import EncodeError, EncodeJob, ModelLoadError, encode_corpus


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnrank-encode",
        description="Extract per-layer subword hidden states into the shared embedding format.",
    )
    parser.add_argument("--corpus", required=True, help="text file, one example per line")
    parser.add_argument("--model", required=True, help="pretrained encoder name or local path")
    parser.add_argument("--layer", type=int, default=8, help="0 = embedding layer")
    parser.add_argument("--max-lines", type=int, default=1000)
    parser.add_argument("--dataset-id", required=True)
    parser.add_argument("--iso", required=True, help="3-letter ISO 639-3 code")
    parser.add_argument("--tag", default="task", help="corpus tag, e.g. task or bible")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = EncodeJob(
            corpus_path=args.corpus,
            model_id=args.model,
            dataset_id=args.dataset_id,
            iso639_3=args.iso,
            layer=args.layer,
            max_lines=args.max_lines,
            corpus_tag=args.tag,
            batch_size=args.batch_size,
        )
        result = encode_corpus(job, args.out)
    except (EncodeError, ModelLoadError, EmbedWriteError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 3
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 4
    print(
        json.dumps(
            {
                "rows": result.rows,
                "dim": result.dim,
                "lines_encoded": result.lines_encoded,
                "lines_truncated": result.lines_truncated,
                "out": result.out_path,
            },
            sort_keys=True,
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
