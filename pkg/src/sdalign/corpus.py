"""Corpus and embedding data model, file formats, and a deterministic offline embedder.

A corpus is stored as UTF-8 JSON lines, one record per line, with an optional
first-line header object declaring the label set. Embeddings live in a small
binary format (magic ``SYAL``) that carries a fingerprint binding the matrix
to the corpus it was computed from, so row misalignment is caught at load time.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

EMBEDDING_MAGIC = b"SYAL"
EMBEDDING_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class TextRecord:
    """One labeled text sample. ``source`` is either "real" or "synthetic"."""

    id: str
    text: str
    label: str
    source: str = "real"
    meta: Mapping[str, str] | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if len(self.text) < 1:
            raise ValueError(f"record {self.id!r}: text must be non-empty")
        if self.source not in ("real", "synthetic"):
            raise ValueError(f"record {self.id!r}: source must be 'real' or 'synthetic', got {self.source!r}")


@dataclass(frozen=True)
class Corpus:
    """Ordered collection of records; record order is the embedding row order."""

    records: tuple[TextRecord, ...]
    label_set: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "label_set", tuple(self.label_set))
        if len(set(self.label_set)) != len(self.label_set):
            raise ValueError("label_set contains duplicates")
        labels = set(self.label_set)
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise ValueError(f"duplicate id {rec.id!r}")
            seen.add(rec.id)
            if rec.label not in labels:
                raise ValueError(f"record {rec.id!r}: label {rec.label!r} not in label_set")

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> TextRecord:
        return self.records[i]

    def texts(self) -> list[str]:
        return [rec.text for rec in self.records]

    def ids(self) -> list[str]:
        return [rec.id for rec in self.records]

    def index_of(self, record_id: str) -> int:
        try:
            return self._id_index[record_id]
        except AttributeError:
            object.__setattr__(self, "_id_index", {r.id: i for i, r in enumerate(self.records)})
            return self._id_index[record_id]


def corpus_fingerprint(corpus: Corpus) -> int:
    """64-bit FNV-1a over the concatenated record ids, in order."""
    h = _FNV_OFFSET
    for rec in corpus.records:
        for byte in rec.id.encode("utf-8"):
            h ^= byte
            h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class EmbeddingMatrix:
    """N x d float32 matrix row-aligned with a corpus.

    ``corpus_fingerprint`` is 0 for matrices built from bare text lists; a
    nonzero value binds the matrix to a specific corpus serialization.
    """

    data: np.ndarray
    corpus_fingerprint: int = 0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"embedding data must be 2-D, got shape {arr.shape}")
        if arr.shape[1] < 2:
            raise ValueError(f"embedding dim must be >= 2, got {arr.shape[1]}")
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            r, c = bad[0]
            raise ValueError(f"non-finite embedding entry at row {r}, col {c}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


class EmbedderContract:
    """Abstract text-to-vector capability.

    Implementations must be deterministic: the same text list yields
    bit-identical output for a fixed configuration.
    """

    name: str = "abstract"
    dim: int = 0

    def embed(self, texts: Sequence[str]) -> EmbeddingMatrix:
        raise NotImplementedError


class HashEmbedder(EmbedderContract):
    """Feature-hashing embedder; see :func:`hash_embed`."""

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 2:
            raise ValueError(f"dim must be >= 2, got {dim}")
        self.dim = dim
        self.seed = seed
        self.name = f"hash-d{dim}-s{seed}"

    def embed(self, texts: Sequence[str]) -> EmbeddingMatrix:
        return hash_embed(list(texts), self.dim, self.seed)


def _hash_token(token: str, seed: int) -> int:
    digest = hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def hash_embed(texts: Sequence[str], dim: int = 64, seed: int = 0) -> EmbeddingMatrix:
    """Deterministic offline embedding via signed feature hashing.

    Each text is lowercased, split into word unigrams, and each token is
    hashed into one of ``dim`` signed buckets; the resulting count vector is
    L2-normalized. Texts with no tokens map to the first basis vector so every
    row has unit norm. Pure function of (texts, dim, seed).
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    out = np.zeros((len(texts), dim), dtype=np.float64)
    for i, text in enumerate(texts):
        row = out[i]
        for token in _TOKEN_SPLIT.split(text.lower()):
            if not token:
                continue
            h = _hash_token(token, seed)
            sign = 1.0 if (h >> 63) & 1 else -1.0
            row[h % dim] += sign
        norm = np.linalg.norm(row)
        if norm > 0:
            row /= norm
        else:
            row[0] = 1.0
    return EmbeddingMatrix(out.astype(np.float32))


def embed_corpus(corpus: Corpus, embedder: EmbedderContract) -> EmbeddingMatrix:
    """Embed a corpus and bind the result to it via the fingerprint."""
    matrix = embedder.embed(corpus.texts())
    return EmbeddingMatrix(matrix.data, corpus_fingerprint(corpus))


# ---------------------------------------------------------------------------
# corpus file format (JSON lines)
# ---------------------------------------------------------------------------


def _record_to_obj(rec: TextRecord) -> dict:
    obj = {"id": rec.id, "text": rec.text, "label": rec.label, "source": rec.source}
    if rec.meta:
        obj["meta"] = dict(rec.meta)
    return obj


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"label_set": list(corpus.label_set)}, ensure_ascii=False) + "\n")
        for rec in corpus.records:
            fh.write(json.dumps(_record_to_obj(rec), ensure_ascii=False, sort_keys=True) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    """Load a JSONL corpus file, validating ids, labels, and texts.

    The first line may be a header object ``{"label_set": [...]}``; otherwise
    the label set is the sorted distinct labels encountered.
    """
    path = Path(path)
    records: list[TextRecord] = []
    label_set: tuple[str, ...] | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed line {lineno}: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ValueError(f"{path}: malformed line {lineno}: expected object")
            if lineno == 1 and "label_set" in obj and "id" not in obj:
                label_set = tuple(str(x) for x in obj["label_set"])
                continue
            try:
                records.append(
                    TextRecord(
                        id=str(obj["id"]),
                        text=str(obj["text"]),
                        label=str(obj["label"]),
                        source=str(obj.get("source", "real")),
                        meta={str(k): str(v) for k, v in obj["meta"].items()} if obj.get("meta") else None,
                    )
                )
            except KeyError as exc:
                raise ValueError(f"{path}: malformed line {lineno}: missing field {exc.args[0]!r}") from exc
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    if not records:
        raise ValueError(f"{path}: empty corpus file")
    if label_set is None:
        label_set = tuple(sorted({rec.label for rec in records}))
    return Corpus(records=tuple(records), label_set=label_set)


# ---------------------------------------------------------------------------
# embedding file format (binary, bit-exact)
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIIQ")  # magic, version, N, d, fingerprint


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(
            _HEADER.pack(
                EMBEDDING_MAGIC,
                EMBEDDING_VERSION,
                matrix.rows,
                matrix.dim,
                matrix.corpus_fingerprint,
            )
        )
        fh.write(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())


def load_embeddings(path: str | Path, corpus: Corpus | None = None) -> EmbeddingMatrix:
    """Load a binary embedding file, verifying it against ``corpus`` if given.

    Raises on magic/version mismatch, row-count mismatch, non-finite entries,
    and fingerprint mismatch (which signals corpus/embedding drift).
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, d, fingerprint = _HEADER.unpack_from(raw)
    if magic != EMBEDDING_MAGIC:
        raise ValueError(f"{path}: magic mismatch, got {magic!r}")
    if version != EMBEDDING_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for N={n}, d={d}, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d)
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        r, c = bad[0]
        raise ValueError(f"{path}: non-finite entry at row {r}, col {c}")
    if corpus is not None:
        if n != len(corpus):
            raise ValueError(f"{path}: embedding rows N={n} do not match corpus size {len(corpus)}")
        expected_fp = corpus_fingerprint(corpus)
        if fingerprint != expected_fp:
            raise ValueError(
                f"{path}: fingerprint mismatch (file {fingerprint:#018x}, corpus {expected_fp:#018x}); "
                "corpus and embeddings have drifted"
            )
    return EmbeddingMatrix(data.copy(), fingerprint)
