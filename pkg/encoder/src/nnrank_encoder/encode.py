"""Hidden-state extraction from a pretrained encoder.

Each corpus line is tokenized and run through the model; for every subword
that is not a special token, the hidden vector at the requested layer is
emitted in corpus order (layer 0 is the embedding layer). All token
occurrences are kept, not types: the same subword in two contexts yields two
rows. Batching is a throughput knob only -- output order and row count are
fixed by the corpus.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .embed_file import write_embedding_file

logger = logging.getLogger("nnrank_encoder")

# tokenizers report absurd model_max_length when none was configured
_SANE_MAX_LENGTH = 1_000_000


class EncodeError(Exception):
    """Job is invalid or the corpus cannot be encoded."""


class ModelLoadError(Exception):
    """The encoder model or its tokenizer could not be loaded."""


@dataclass(frozen=True)
class EncodeJob:
    corpus_path: str
    model_id: str
    dataset_id: str
    iso639_3: str
    layer: int = 8
    max_lines: int = 1000
    corpus_tag: str = "task"
    batch_size: int = 16

    def __post_init__(self) -> None:
        if not self.dataset_id:
            raise EncodeError("dataset_id must be non-empty")
        if len(self.iso639_3) != 3 or not self.iso639_3.isalpha():
            raise EncodeError(f"iso639_3 must be a 3-letter code, got {self.iso639_3!r}")
        if self.layer < 0:
            raise EncodeError(f"layer must be >= 0, got {self.layer}")
        if self.max_lines < 1:
            raise EncodeError(f"max_lines must be >= 1, got {self.max_lines}")
        if self.batch_size < 1:
            raise EncodeError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EncodeResult:
    rows: int
    dim: int
    lines_encoded: int
    lines_truncated: int
    out_path: str


def load_encoder(model_id: str):
    """Load (tokenizer, model) for a model id or local path, in eval mode."""
    from transformers import AutoModel, AutoTokenizer

    try:  # keep stderr parseable: one line per failure, no progress bars
        from transformers.utils import logging as hf_logging

        hf_logging.disable_progress_bar()
    except Exception:
        pass
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ModelLoadError(f"cannot load encoder {model_id!r}: {exc}") from exc
    model.eval()
    return tokenizer, model


def read_corpus_lines(path: str | Path, max_lines: int) -> list[str]:
    """First min(max_lines, file lines) examples, one per line."""
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines:
        raise EncodeError(f"corpus {path} is empty")
    return lines[:max_lines]


def max_input_length(tokenizer, model) -> int | None:
    """Hard cap on sequence length, if the model or tokenizer declares one."""
    cap = getattr(model.config, "max_position_embeddings", None)
    if cap:
        return int(cap)
    declared = getattr(tokenizer, "model_max_length", None)
    if declared and declared < _SANE_MAX_LENGTH:
        return int(declared)
    return None


def count_nonspecial_subwords(tokenizer, lines: list[str], max_length: int | None = None) -> int:
    """Row count the encoder will produce, from the tokenizer alone."""
    enc = tokenizer(
        list(lines),
        add_special_tokens=True,
        truncation=max_length is not None,
        max_length=max_length,
        return_special_tokens_mask=True,
    )
    return sum(mask.count(0) for mask in enc["special_tokens_mask"])


def encode_corpus(job: EncodeJob, out_path: str | Path) -> EncodeResult:
    """Encode a corpus and write the embedding file.

    Lines longer than the model's maximum input length are truncated, with a
    count logged. Raises :class:`EncodeError` if no subwords survive.
    """
    tokenizer, model = load_encoder(job.model_id)
    depth = int(getattr(model.config, "num_hidden_layers"))
    if job.layer > depth:
        raise EncodeError(f"layer {job.layer} out of range for a {depth}-layer model")

    lines = read_corpus_lines(job.corpus_path, job.max_lines)
    max_length = max_input_length(tokenizer, model)

    pieces: list[np.ndarray] = []
    truncated = 0
    with torch.no_grad():
        for start in range(0, len(lines), job.batch_size):
            batch = lines[start : start + job.batch_size]
            if max_length is not None:
                plain = tokenizer(batch, add_special_tokens=True)
                truncated += sum(1 for ids in plain["input_ids"] if len(ids) > max_length)
            enc = tokenizer(
                batch,
                return_tensors="pt",
                padding=True,
                truncation=max_length is not None,
                max_length=max_length,
                return_special_tokens_mask=True,
            )
            special = enc.pop("special_tokens_mask")
            keep = (special == 0) & (enc["attention_mask"] == 1)
            hidden = model(**enc, output_hidden_states=True).hidden_states[job.layer]
            for i in range(hidden.shape[0]):
                rows = hidden[i][keep[i]]
                if rows.shape[0]:
                    pieces.append(rows.to(torch.float32).numpy())

    if truncated:
        logger.warning(
            "truncated %d of %d lines to %d tokens", truncated, len(lines), max_length
        )
    if not pieces:
        raise EncodeError(f"corpus {job.corpus_path} produced no subwords")

    data = np.ascontiguousarray(np.concatenate(pieces, axis=0), dtype=np.float32)
    meta = {
        "dataset_id": job.dataset_id,
        "iso639_3": job.iso639_3,
        "model_id": job.model_id,
        "layer": job.layer,
        "corpus_tag": job.corpus_tag,
        "line_count": len(lines),
    }
    write_embedding_file(data, meta, out_path)
    return EncodeResult(
        rows=int(data.shape[0]),
        dim=int(data.shape[1]),
        lines_encoded=len(lines),
        lines_truncated=truncated,
        out_path=str(out_path),
    )
