import logging

import numpy as np
import pytest

from nnrank_encoder import (
    EncodeError,
    EncodeJob,
    ModelLoadError,
    count_nonspecial_subwords,
    encode_corpus,
    read_corpus_lines,
)

from conftest import HIDDEN, MAX_POS, write_corpus


def job_for(model_dir, corpus, **kw):
    defaults = dict(
        corpus_path=str(corpus),
        model_id=model_dir,
        dataset_id="ds-test",
        iso639_3="fra",
    )
    defaults.update(kw)
    return EncodeJob(**defaults)


class TestJobValidation:
    def test_rejects_bad_fields(self, model_dir, corpus_3_lines):
        with pytest.raises(EncodeError):
            job_for(model_dir, corpus_3_lines, dataset_id="")
        with pytest.raises(EncodeError):
            job_for(model_dir, corpus_3_lines, iso639_3="fr")
        with pytest.raises(EncodeError):
            job_for(model_dir, corpus_3_lines, layer=-1)
        with pytest.raises(EncodeError):
            job_for(model_dir, corpus_3_lines, max_lines=0)


class TestEncode:
    def test_four_subwords_two_specials(self, model_dir, loaded_encoder, tmp_path):
        corpus = write_corpus(tmp_path / "one.txt", ["le chat dort ."])
        tokenizer, _ = loaded_encoder
        assert tokenizer.tokenize("le chat dort .") == ["le", "chat", "dort", "."]
        out = tmp_path / "one.nnrk"
        result = encode_corpus(job_for(model_dir, corpus), out)
        assert result.rows == 4
        assert result.dim == HIDDEN

    def test_rows_match_tokenizer_count(self, model_dir, loaded_encoder, corpus_3_lines, tmp_path):
        tokenizer, _ = loaded_encoder
        lines = read_corpus_lines(corpus_3_lines, 1000)
        expected_rows = count_nonspecial_subwords(tokenizer, lines, MAX_POS)
        result = encode_corpus(job_for(model_dir, corpus_3_lines), tmp_path / "c.nnrk")
        assert result.rows == expected_rows
        assert result.lines_encoded == 3

    def test_unknown_words_still_count_as_tokens(self, model_dir, loaded_encoder, tmp_path):
        corpus = write_corpus(tmp_path / "unk.txt", ["xyzzy plugh"])
        result = encode_corpus(job_for(model_dir, corpus), tmp_path / "unk.nnrk")
        assert result.rows == 2  # two [UNK] occurrences, not zero

    def test_max_lines_cap(self, model_dir, loaded_encoder, tmp_path):
        corpus = write_corpus(tmp_path / "five.txt", ["le chat ."] * 5)
        tokenizer, _ = loaded_encoder
        result = encode_corpus(job_for(model_dir, corpus, max_lines=2), tmp_path / "f.nnrk")
        assert result.lines_encoded == 2
        assert result.rows == count_nonspecial_subwords(tokenizer, ["le chat ."] * 2, MAX_POS)

    def test_layer_0_vs_8_same_shape_different_payload(self, model_dir, corpus_3_lines, tmp_path):
        out0, out8 = tmp_path / "l0.nnrk", tmp_path / "l8.nnrk"
        r0 = encode_corpus(job_for(model_dir, corpus_3_lines, layer=0), out0)
        r8 = encode_corpus(job_for(model_dir, corpus_3_lines, layer=8), out8)
        assert (r0.rows, r0.dim) == (r8.rows, r8.dim)
        assert out0.read_bytes() != out8.read_bytes()

    def test_deterministic(self, model_dir, corpus_3_lines, tmp_path):
        a, b = tmp_path / "a.nnrk", tmp_path / "b.nnrk"
        encode_corpus(job_for(model_dir, corpus_3_lines), a)
        encode_corpus(job_for(model_dir, corpus_3_lines), b)
        assert a.read_bytes() == b.read_bytes()

    def test_batch_size_is_throughput_only(self, model_dir, corpus_3_lines, tmp_path):
        from nnrank import read_embedding_file

        a, b = tmp_path / "a.nnrk", tmp_path / "b.nnrk"
        encode_corpus(job_for(model_dir, corpus_3_lines, batch_size=1), a)
        encode_corpus(job_for(model_dir, corpus_3_lines, batch_size=4), b)
        ma, _ = read_embedding_file(a)
        mb, _ = read_embedding_file(b)
        assert ma.data.shape == mb.data.shape
        np.testing.assert_allclose(ma.data, mb.data, rtol=1e-4, atol=1e-4)

    def test_truncation_logged(self, model_dir, tmp_path, caplog):
        long_line = " ".join(["le"] * (MAX_POS + 40))
        corpus = write_corpus(tmp_path / "long.txt", [long_line, "le chat ."])
        with caplog.at_level(logging.WARNING, logger="nnrank_encoder"):
            result = encode_corpus(job_for(model_dir, corpus), tmp_path / "t.nnrk")
        assert result.lines_truncated == 1
        assert any("truncated" in r.message for r in caplog.records)
        assert result.rows == (MAX_POS - 2) + 3  # capped line + "le chat ."

    def test_empty_corpus(self, model_dir, tmp_path):
        corpus = tmp_path / "empty.txt"
        corpus.write_text("", encoding="utf-8")
        with pytest.raises(EncodeError, match="empty"):
            encode_corpus(job_for(model_dir, corpus), tmp_path / "e.nnrk")

    def test_layer_out_of_range(self, model_dir, corpus_3_lines, tmp_path):
        with pytest.raises(EncodeError, match="layer"):
            encode_corpus(job_for(model_dir, corpus_3_lines, layer=9), tmp_path / "x.nnrk")

    def test_model_not_found(self, tmp_path, corpus_3_lines):
        with pytest.raises(ModelLoadError):
            encode_corpus(
                job_for(str(tmp_path / "no-such-model"), corpus_3_lines), tmp_path / "x.nnrk"
            )

    def test_metadata_echo(self, model_dir, corpus_3_lines, tmp_path):
        from nnrank import read_embedding_file

        out = tmp_path / "meta.nnrk"
        encode_corpus(
            job_for(model_dir, corpus_3_lines, dataset_id="fr-dev", iso639_3="fra", corpus_tag="bible", layer=3),
            out,
        )
        _, meta = read_embedding_file(out)
        assert meta.dataset_id == "fr-dev"
        assert meta.iso639_3 == "fra"
        assert meta.corpus_tag == "bible"
        assert meta.layer == 3
        assert meta.model_id == model_dir
        assert meta.line_count == 3


class TestCli:
    def test_encode_command(self, model_dir, corpus_3_lines, tmp_path, capsys):
        import json

        from nnrank_encoder.cli import main

        out = tmp_path / "cli.nnrk"
        code = main(
            [
                "--corpus",
                str(corpus_3_lines),
                "--model",
                model_dir,
                "--layer",
                "8",
                "--max-lines",
                "1000",
                "--dataset-id",
                "cli-ds",
                "--iso",
                "fra",
                "--tag",
                "task",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["dim"] == HIDDEN
        assert out.exists()

    def test_cli_error_is_machine_readable(self, model_dir, tmp_path, capsys):
        import json

        from nnrank_encoder.cli import main

        code = main(
            [
                "--corpus",
                str(tmp_path / "missing.txt"),
                "--model",
                model_dir,
                "--dataset-id",
                "x",
                "--iso",
                "fra",
                "--out",
                str(tmp_path / "x.nnrk"),
            ]
        )
        assert code == 4
        last_line = capsys.readouterr().err.strip().splitlines()[-1]
        err = json.loads(last_line)
        assert err["error"] == "FileNotFoundError"
