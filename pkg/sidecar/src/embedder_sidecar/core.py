"""Encode a JSONL corpus with a pretrained sentence encoder.

Deliberately shares no code with the main toolkit: it speaks the same wire
formats (JSONL corpus in, "SYAL" binary embeddings out) from this file's own
constants, so a drift between the two implementations shows up as a
fingerprint or golden-file mismatch instead of silently propagating.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EMBEDDING_MAGIC = b"SYAL"
EMBEDDING_VERSION = 1
DEFAULT_MODEL = "sentence-transformers/all-MiniLM-L6-v2"

HEADER = struct.Struct("<4sIIIQ")  # magic, version, N, d, fingerprint

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class ModelLoadError(RuntimeError):
    """The configured sentence encoder could not be instantiated."""


class FormatSkewError(RuntimeError):
    """A written file re-reads differently than intended; the wire format drifted."""


@dataclass(frozen=True)
class SidecarConfig:
    input_path: str
    output_path: str
    model_name: str = DEFAULT_MODEL
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def read_corpus(path: str | Path) -> tuple[list[str], list[str]]:
    """(ids, texts) in file order; a first-line ``{"label_set": ...}`` header is skipped."""
    path = Path(path)
    ids: list[str] = []
    texts: list[str] = []
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
                continue
            if "id" not in obj or "text" not in obj:
                raise ValueError(f"{path}: line {lineno}: record needs 'id' and 'text'")
            ids.append(str(obj["id"]))
            texts.append(str(obj["text"]))
    if not ids:
        raise ValueError(f"{path}: corpus has no records")
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate record ids")
    return ids, texts


def fingerprint(ids: list[str]) -> int:
    """64-bit FNV-1a over the concatenated record ids, in order."""
    h = _FNV_OFFSET
    for rid in ids:
        for byte in rid.encode("utf-8"):
            h ^= byte
            h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _load_model(config: SidecarConfig):
    from sentence_transformers import SentenceTransformer

    try:
        return SentenceTransformer(config.model_name, device=config.device)
    except Exception as exc:
        raise ModelLoadError(f"cannot load encoder {config.model_name!r}: {exc}") from exc


def encode_texts(model, texts: list[str], ids: list[str], batch_size: int) -> np.ndarray:
    """L2-normalized float32 rows, one per text, in input order."""
    vectors = model.encode(
        texts,
        batch_size=batch_size,
        convert_to_numpy=True,
        show_progress_bar=False,
    )
    arr = np.ascontiguousarray(vectors, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] != len(texts):
        raise ValueError(f"encoder returned shape {arr.shape} for {len(texts)} texts")
    bad = np.nonzero(~np.isfinite(arr).all(axis=1))[0]
    if bad.size:
        raise ValueError(f"encoder produced non-finite values for record {ids[bad[0]]!r}")
    norms = np.linalg.norm(arr, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise ValueError(f"encoder produced a zero vector for record {ids[zero[0]]!r}")
    return arr / norms[:, None]


def write_embeddings(path: str | Path, vectors: np.ndarray, fp: int) -> None:
    path = Path(path)
    n, d = vectors.shape
    path.write_bytes(
        HEADER.pack(EMBEDDING_MAGIC, EMBEDDING_VERSION, n, d, fp)
        + np.ascontiguousarray(vectors, dtype="<f4").tobytes()
    )
    _verify_written(path, n, d, fp)


def _verify_written(path: Path, n: int, d: int, fp: int) -> None:
    raw = path.read_bytes()
    if len(raw) != HEADER.size + n * d * 4:
        raise FormatSkewError(f"{path}: wrote {len(raw)} bytes, layout implies {HEADER.size + n * d * 4}")
    magic, version, got_n, got_d, got_fp = HEADER.unpack_from(raw)
    if (magic, version, got_n, got_d) != (EMBEDDING_MAGIC, EMBEDDING_VERSION, n, d):
        raise FormatSkewError(f"{path}: header re-reads as {(magic, version, got_n, got_d)}")
    if got_fp != fp:
        raise FormatSkewError(f"{path}: fingerprint {got_fp:#x} does not round-trip {fp:#x}")


def embed_corpus(config: SidecarConfig) -> Path:
    """Encode the corpus at ``config.input_path`` and write ``config.output_path``.

    Row order matches corpus order; the header fingerprint is the FNV-1a of
    the record ids so the main toolkit's loader can bind the file back to the
    corpus it came from.
    """
    ids, texts = read_corpus(config.input_path)
    model = _load_model(config)
    vectors = encode_texts(model, texts, ids, config.batch_size)
    out = Path(config.output_path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True)
    write_embeddings(out, vectors, fingerprint(ids))
    return out
