import json
from pathlib import Path

import numpy as np
import pytest

esc = pytest.importorskip("embedder_sidecar")
pytest.importorskip("sentence_transformers")

from embedder_sidecar import (
    HEADER,
    FormatSkewError,
    ModelLoadError,
    SidecarConfig,
    embed_corpus,
    fingerprint,
    read_corpus,
)
from embedder_sidecar.cli import main

REPO_ROOT = Path(__file__).resolve().parents[2]
GOLDEN_CORPUS = REPO_ROOT / "fixtures" / "golden_corpus.jsonl"
GOLDEN_HEADER = REPO_ROOT / "fixtures" / "golden_header.bin"

VOCAB = ["the", "a", "good", "bad", "film", "story", "plot", "acting"]
ENCODER_DIM = 8


@pytest.fixture(scope="session")
def tiny_encoder(tmp_path_factory) -> str:
    """A saved word-embedding encoder; self-contained so tests never hit the network."""
    torch = pytest.importorskip("torch")
    from sentence_transformers import SentenceTransformer
    from sentence_transformers.sentence_transformer.modules import Pooling, WordEmbeddings
    from sentence_transformers.sentence_transformer.modules.tokenizer import WhitespaceTokenizer

    rng = np.random.default_rng(0)
    weights = torch.tensor(rng.normal(size=(len(VOCAB), ENCODER_DIM)).astype(np.float32))
    tokenizer = WhitespaceTokenizer(vocab=VOCAB, stop_words=set(), do_lower_case=True)
    module = WordEmbeddings(tokenizer=tokenizer, embedding_weights=weights)
    pooling = Pooling(ENCODER_DIM, pooling_mode="mean")
    target = tmp_path_factory.mktemp("model") / "tiny-encoder"
    SentenceTransformer(modules=[module, pooling]).save(str(target))
    return str(target)


def write_jsonl(path: Path, rows: list[dict], label_set: tuple[str, ...] | None = None) -> Path:
    lines = [] if label_set is None else [json.dumps({"label_set": list(label_set)})]
    lines += [json.dumps(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def record(i: int, text: str) -> dict:
    return {"id": f"x{i}", "text": text, "label": "positive", "source": "real"}


class TestCorpusReading:
    def test_order_and_header_skip(self, tmp_path):
        path = write_jsonl(
            tmp_path / "c.jsonl",
            [record(2, "beta"), record(1, "alpha")],
            label_set=("negative", "positive"),
        )
        ids, texts = read_corpus(path)
        assert ids == ["x2", "x1"]
        assert texts == ["beta", "alpha"]

    def test_no_header_line(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [record(1, "alpha")])
        assert read_corpus(path) == (["x1"], ["alpha"])

    def test_malformed_line_is_located(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "text": "ok", "label": "p"}\n{nope\n')
        with pytest.raises(ValueError, match="line 2"):
            read_corpus(path)

    def test_missing_text_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "label": "p"}\n')
        with pytest.raises(ValueError, match="'id' and 'text'"):
            read_corpus(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [record(1, "a"), record(1, "b")])
        with pytest.raises(ValueError, match="duplicate"):
            read_corpus(path)

    def test_empty_corpus_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("\n")
        with pytest.raises(ValueError, match="no records"):
            read_corpus(path)


class TestFingerprint:
    def test_known_fnv1a_vector(self):
        # FNV-1a 64 of b"abc"; the per-id split must not change the digest
        assert fingerprint(["abc"]) == 0xE71FA2190541574B
        assert fingerprint(["a", "b", "c"]) == 0xE71FA2190541574B

    def test_order_sensitive(self):
        assert fingerprint(["a", "b"]) != fingerprint(["b", "a"])


class TestConfig:
    def test_batch_size_floor(self):
        with pytest.raises(ValueError, match="batch_size"):
            SidecarConfig(input_path="a", output_path="b", batch_size=0)

    def test_model_load_failure(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [record(1, "a good film")])
        cfg = SidecarConfig(
            input_path=str(path),
            output_path=str(tmp_path / "e.bin"),
            model_name=str(tmp_path / "no-such-model"),
        )
        with pytest.raises(ModelLoadError, match="no-such-model"):
            embed_corpus(cfg)


class TestEmbedCorpus:
    def embed(self, tiny_encoder, corpus, out, batch_size=2):
        return embed_corpus(
            SidecarConfig(
                input_path=str(corpus),
                output_path=str(out),
                model_name=tiny_encoder,
                batch_size=batch_size,
            )
        )

    def test_golden_header_bytes(self, tiny_encoder, tmp_path):
        out = self.embed(tiny_encoder, GOLDEN_CORPUS, tmp_path / "e.bin")
        golden = GOLDEN_HEADER.read_bytes()
        assert out.read_bytes()[: len(golden)] == golden

    def test_header_fields_and_length(self, tiny_encoder, tmp_path):
        raw = self.embed(tiny_encoder, GOLDEN_CORPUS, tmp_path / "e.bin").read_bytes()
        magic, version, n, d, fp = HEADER.unpack_from(raw)
        assert (magic, version, n, d) == (b"SYAL", 1, 3, 8)
        assert fp == fingerprint(read_corpus(GOLDEN_CORPUS)[0])
        assert len(raw) == HEADER.size + n * d * 4

    def test_rows_unit_norm_and_corpus_order(self, tiny_encoder, tmp_path):
        fwd = write_jsonl(tmp_path / "f.jsonl", [record(1, "good film"), record(2, "bad plot")])
        rev = write_jsonl(tmp_path / "r.jsonl", [record(2, "bad plot"), record(1, "good film")])
        a = self.embed(tiny_encoder, fwd, tmp_path / "a.bin").read_bytes()[HEADER.size :]
        b = self.embed(tiny_encoder, rev, tmp_path / "b.bin").read_bytes()[HEADER.size :]
        va = np.frombuffer(a, dtype="<f4").reshape(2, 8)
        vb = np.frombuffer(b, dtype="<f4").reshape(2, 8)
        assert np.allclose(np.linalg.norm(va, axis=1), 1.0, atol=1e-6)
        assert np.allclose(va, vb[::-1], atol=1e-6)

    def test_repeat_runs_match(self, tiny_encoder, tmp_path):
        a = self.embed(tiny_encoder, GOLDEN_CORPUS, tmp_path / "a.bin").read_bytes()
        b = self.embed(tiny_encoder, GOLDEN_CORPUS, tmp_path / "b.bin").read_bytes()
        va = np.frombuffer(a[HEADER.size :], dtype="<f4")
        vb = np.frombuffer(b[HEADER.size :], dtype="<f4")
        assert np.abs(va - vb).max() <= 1e-6

    def test_batch_size_does_not_change_vectors(self, tiny_encoder, tmp_path):
        one = self.embed(tiny_encoder, GOLDEN_CORPUS, tmp_path / "one.bin", batch_size=1)
        big = self.embed(tiny_encoder, GOLDEN_CORPUS, tmp_path / "big.bin", batch_size=64)
        va = np.frombuffer(one.read_bytes()[HEADER.size :], dtype="<f4")
        vb = np.frombuffer(big.read_bytes()[HEADER.size :], dtype="<f4")
        assert np.abs(va - vb).max() <= 1e-6

    def test_all_unknown_tokens_rejected(self, tiny_encoder, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [record(1, "zzz qqq")])
        with pytest.raises(ValueError, match="x1"):
            self.embed(tiny_encoder, path, tmp_path / "e.bin")


class TestFormatSelfCheck:
    def test_truncation_detected(self, tmp_path):
        vectors = np.eye(3, 4, dtype=np.float32)
        path = tmp_path / "e.bin"
        esc.write_embeddings(path, vectors, fp=7)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatSkewError, match="bytes"):
            esc.core._verify_written(path, 3, 4, 7)

    def test_fingerprint_drift_detected(self, tmp_path):
        vectors = np.eye(2, 4, dtype=np.float32)
        path = tmp_path / "e.bin"
        esc.write_embeddings(path, vectors, fp=7)
        with pytest.raises(FormatSkewError, match="fingerprint"):
            esc.core._verify_written(path, 2, 4, 8)


class TestCli:
    def test_success(self, tiny_encoder, tmp_path, capsys):
        out = tmp_path / "e.bin"
        rc = main(
            ["--in", str(GOLDEN_CORPUS), "--out", str(out), "--model", tiny_encoder, "--batch-size", "2"]
        )
        assert rc == 0
        assert out.exists()
        assert str(out) in capsys.readouterr().out

    def test_failure_exit_code(self, tmp_path, capsys):
        rc = main(["--in", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "e.bin")])
        assert rc == 2
        assert "embed failed" in capsys.readouterr().err
