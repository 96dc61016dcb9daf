import numpy as np
import pytest

from nnrank import DatasetMeta, EmbeddingMatrix, SourcePool


def iso_code(j):
    """Distinct synthetic 3-letter codes: qaa, qab, ... (private-use range)."""
    return f"q{chr(ord('a') + j // 26)}{chr(ord('a') + j % 26)}"


def make_meta(dataset_id, iso="eng", layer=8, model="test-encoder", tag="task", lines=10):
    return DatasetMeta(
        dataset_id=dataset_id,
        iso639_3=iso,
        model_id=model,
        layer=layer,
        corpus_tag=tag,
        line_count=lines,
    )


def make_matrix(rng, rows, dim):
    return EmbeddingMatrix(rng.standard_normal((rows, dim)).astype(np.float32))


def make_pool(parts):
    """parts: list of (dataset_id, iso, rows_array or (rows, dim) via rng)."""
    return SourcePool.from_parts(parts)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def build_cli_workspace(root):
    """Deterministic on-disk fixture: three sources, one target, perf table.

    srcC shares the target's ISO code (fra) so default ranking excludes it.
    """
    from nnrank import write_embedding_file

    gen = np.random.default_rng(424242)
    root.mkdir(parents=True, exist_ok=True)
    sources = [("srcA", "ita", 12), ("srcB", "spa", 10), ("srcC", "fra", 8)]
    paths = []
    for dataset_id, iso, rows in sources:
        path = root / f"{dataset_id}.nnrk"
        write_embedding_file(
            make_matrix(gen, rows, 16),
            make_meta(dataset_id, iso=iso, lines=rows),
            path,
        )
        paths.append(path.name)
    manifest = root / "manifest.json"
    manifest.write_text(__import__("json").dumps(paths), encoding="utf-8")

    target_path = root / "tgt.nnrk"
    write_embedding_file(
        make_matrix(gen, 30, 16), make_meta("tgt", iso="fra", lines=30), target_path
    )

    perf = root / "perf.csv"
    perf.write_text(
        "source_id,target_id,score\n"
        "srcA,tgt,70.0\n"
        "srcB,tgt,60.0\n"
        "srcC,tgt,50.0\n",
        encoding="utf-8",
    )

    tokens = root / "tokens.txt"
    vocab = ["le", "la", ".", "maison", "."]
    tokens.write_text("\n".join(vocab[i % len(vocab)] for i in range(30)) + "\n", encoding="utf-8")

    return {
        "manifest": manifest,
        "target": target_path,
        "perf": perf,
        "tokens": tokens,
        "root": root,
    }


@pytest.fixture
def cli_workspace(tmp_path):
    return build_cli_workspace(tmp_path / "ws")


def cluster_fixture(n_datasets=8, dim=32, rows_per=40, sigma=1.0, separation=10.0, seed=7):
    """Well-separated Gaussian clusters, one per source dataset.

    Cluster centers are scaled one-hot directions, so inner products between
    a member of cluster j and cluster i concentrate around separation^2 for
    i == j and around 0 otherwise.
    """
    rng = np.random.default_rng(seed)
    centers = np.zeros((n_datasets, dim), dtype=np.float64)
    for j in range(n_datasets):
        centers[j, j] = separation * sigma
    parts = []
    for j in range(n_datasets):
        block = centers[j] + sigma * rng.standard_normal((rows_per, dim))
        parts.append(
            (
                EmbeddingMatrix(block.astype(np.float32)),
                make_meta(f"cluster{j:02d}", iso=iso_code(j)),
            )
        )
    return SourcePool.from_parts(parts), centers, rng
