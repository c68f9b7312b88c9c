"""Data model, file formats, and the offline hashing embedder."""

from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_corpus
from sdalign.corpus import (
    Corpus,
    EmbeddingMatrix,
    HashEmbedder,
    TextRecord,
    corpus_fingerprint,
    embed_corpus,
    hash_embed,
    load_corpus,
    load_embeddings,
    save_corpus,
    save_embeddings,
)

# ---------------------------------------------------------------------------
# record/corpus validation
# ---------------------------------------------------------------------------


class TestRecordValidation:
    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            TextRecord(id="a", text="", label="x")

    def test_empty_id_rejected(self):
        with pytest.raises(ValueError):
            TextRecord(id="", text="t", label="x")

    def test_bad_source_rejected(self):
        with pytest.raises(ValueError):
            TextRecord(id="a", text="t", label="x", source="other")

    def test_duplicate_ids_rejected(self):
        recs = (TextRecord(id="a", text="t", label="x"), TextRecord(id="a", text="u", label="x"))
        with pytest.raises(ValueError, match="'a'"):
            Corpus(records=recs, label_set=("x",))

    def test_label_outside_set_rejected(self):
        recs = (TextRecord(id="a", text="t", label="y"),)
        with pytest.raises(ValueError):
            Corpus(records=recs, label_set=("x",))

    def test_index_of(self, tiny_corpus):
        for i, rec in enumerate(tiny_corpus.records):
            assert tiny_corpus.index_of(rec.id) == i
        with pytest.raises(KeyError):
            tiny_corpus.index_of("missing")


# ---------------------------------------------------------------------------
# corpus files
# ---------------------------------------------------------------------------


class TestCorpusFiles:
    def test_round_trip(self, tmp_path, tiny_corpus):
        path = tmp_path / "corpus.jsonl"
        save_corpus(tiny_corpus, path)
        loaded = load_corpus(path)
        assert loaded == tiny_corpus

    def test_two_line_file(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"id": "a", "text": "good film", "label": "pos"}\n'
            '{"id": "b", "text": "bad film", "label": "neg"}\n'
        )
        corpus = load_corpus(path)
        assert len(corpus) == 2
        # no header: label_set is the sorted distinct labels
        assert corpus.label_set == ("neg", "pos")

    def test_header_declares_label_order(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"label_set": ["pos", "neg"]}\n'
            '{"id": "a", "text": "good", "label": "pos"}\n'
        )
        assert load_corpus(path).label_set == ("pos", "neg")

    def test_duplicate_id_names_offender(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"id": "a", "text": "x", "label": "l"}\n{"id": "a", "text": "y", "label": "l"}\n'
        )
        with pytest.raises(ValueError, match="'a'"):
            load_corpus(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "text": "x", "label": "l"}\nnot json\n')
        with pytest.raises(ValueError, match="line 2"):
            load_corpus(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("")
        with pytest.raises(ValueError):
            load_corpus(path)

    def test_meta_survives_round_trip(self, tmp_path):
        rec = TextRecord(id="a", text="t", label="x", source="synthetic", meta={"summary_id": "s1"})
        corpus = Corpus(records=(rec,), label_set=("x",))
        path = tmp_path / "c.jsonl"
        save_corpus(corpus, path)
        assert load_corpus(path)[0].meta == {"summary_id": "s1"}


# ---------------------------------------------------------------------------
# embedding files
# ---------------------------------------------------------------------------


class TestEmbeddingFiles:
    def test_round_trip_bit_identical(self, tmp_path, tiny_corpus):
        matrix = embed_corpus(tiny_corpus, HashEmbedder(dim=16, seed=3))
        path = tmp_path / "e.bin"
        save_embeddings(matrix, path)
        loaded = load_embeddings(path, tiny_corpus)
        assert loaded.data.tobytes() == matrix.data.tobytes()
        assert loaded.corpus_fingerprint == matrix.corpus_fingerprint

    def test_header_layout(self, tmp_path, tiny_corpus):
        matrix = embed_corpus(tiny_corpus, HashEmbedder(dim=4, seed=0))
        path = tmp_path / "e.bin"
        save_embeddings(matrix, path)
        blob = path.read_bytes()
        assert blob[:4] == b"SYAL"
        version, n, d = struct.unpack("<III", blob[4:16])
        (fp,) = struct.unpack("<Q", blob[16:24])
        assert (version, n, d) == (1, len(tiny_corpus), 4)
        assert fp == corpus_fingerprint(tiny_corpus)
        assert len(blob) == 24 + n * d * 4

    def test_size_mismatch_rejected(self, tmp_path, tiny_corpus):
        matrix = embed_corpus(tiny_corpus, HashEmbedder(dim=4, seed=0))
        path = tmp_path / "e.bin"
        save_embeddings(matrix, path)
        smaller = Corpus(records=tiny_corpus.records[:2], label_set=tiny_corpus.label_set)
        with pytest.raises(ValueError):
            load_embeddings(path, smaller)

    def test_fingerprint_mismatch_rejected(self, tmp_path, tiny_corpus):
        matrix = embed_corpus(tiny_corpus, HashEmbedder(dim=4, seed=0))
        path = tmp_path / "e.bin"
        save_embeddings(matrix, path)
        reordered = Corpus(records=tuple(reversed(tiny_corpus.records)), label_set=tiny_corpus.label_set)
        with pytest.raises(ValueError):
            load_embeddings(path, reordered)

    def test_magic_mismatch_rejected(self, tmp_path, tiny_corpus):
        path = tmp_path / "e.bin"
        path.write_bytes(b"NOPE" + b"\0" * 40)
        with pytest.raises(ValueError):
            load_embeddings(path, tiny_corpus)

    def test_nan_entry_rejected_with_position(self, tmp_path, tiny_corpus):
        matrix = embed_corpus(tiny_corpus, HashEmbedder(dim=4, seed=0))
        path = tmp_path / "e.bin"
        save_embeddings(matrix, path)
        blob = bytearray(path.read_bytes())
        # poison the second float of row 1
        offset = 24 + (1 * 4 + 1) * 4
        blob[offset : offset + 4] = struct.pack("<f", float("nan"))
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="row 1"):
            load_embeddings(path, tiny_corpus)

    def test_matrix_dim_floor(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix(data=np.zeros((3, 1), dtype=np.float32))


# ---------------------------------------------------------------------------
# hashing embedder
# ---------------------------------------------------------------------------


class TestHashEmbed:
    def test_identical_texts_identical_rows(self):
        m = hash_embed(["a b", "a b", "c d"], dim=64, seed=0)
        assert np.array_equal(m.data[0], m.data[1])
        assert not np.array_equal(m.data[0], m.data[2])

    def test_rows_unit_norm(self):
        m = hash_embed(["one two", "three", "four five six"], dim=32, seed=1)
        assert np.allclose(np.linalg.norm(m.data, axis=1), 1.0, atol=1e-6)

    def test_seed_changes_geometry(self):
        a = hash_embed(["hello world"], dim=32, seed=0)
        b = hash_embed(["hello world"], dim=32, seed=1)
        assert not np.array_equal(a.data, b.data)

    def test_dim_floor(self):
        with pytest.raises(ValueError):
            hash_embed(["x"], dim=1, seed=0)

    @given(st.lists(st.text(alphabet="abcdef ", min_size=1, max_size=12), min_size=1, max_size=5))
    @settings(max_examples=25, deadline=None)
    def test_pure_function(self, texts):
        a = hash_embed(texts, dim=16, seed=5)
        b = hash_embed(texts, dim=16, seed=5)
        assert a.data.tobytes() == b.data.tobytes()

    def test_embed_corpus_binds_fingerprint(self, tiny_corpus):
        m = embed_corpus(tiny_corpus, HashEmbedder(dim=8, seed=0))
        assert m.rows == len(tiny_corpus)
        assert m.corpus_fingerprint == corpus_fingerprint(tiny_corpus)


def test_fingerprint_sensitive_to_order(tiny_corpus):
    reordered = Corpus(records=tuple(reversed(tiny_corpus.records)), label_set=tiny_corpus.label_set)
    assert corpus_fingerprint(reordered) != corpus_fingerprint(tiny_corpus)


def test_make_corpus_helper_labels():
    c = make_corpus(["x", "y"], ["b", "a"])
    assert c.label_set == ("b", "a")
