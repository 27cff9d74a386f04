"""Offline index construction and persistence.

Embeddings arrive as JSONL (one ``{"id": ..., "embedding": [...]}`` object
per line) and are packed into two aligned row-major float32 matrices, one
per modality, so the online scoring pass is a single sequential sweep.

Packed matrix file layout (all integers little-endian):

    magic "CMEB" | u32 version=1 | u32 dim | u64 count
    | count*dim little-endian float32
    | footer: per row, u32 byte length + UTF-8 id

An index directory holds ``images.cmeb``, ``texts.cmeb`` and
``manifest.json`` (dim, M, normalize flag, build timestamp).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import BinaryIO, Iterable, TextIO

import numpy as np

from .core import EMBEDDING_DTYPE
from .errors import (
    BadMagic,
    ComretError,
    DimMismatch,
    DuplicateId,
    IdSetMismatch,
    MalformedLine,
    NonFiniteValue,
    TruncatedFile,
    UnsupportedVersion,
    ZeroVectorOnNormalize,
)

MAGIC = b"CMEB"
VERSION = 1

IMAGES_FILE = "images.cmeb"
TEXTS_FILE = "texts.cmeb"
MANIFEST_FILE = "manifest.json"

Record = tuple[str, np.ndarray]


@dataclass(frozen=True)
class PackedMatrix:
    """Row-major float32 matrix with one id per row, unique and ordered."""

    ids: tuple[str, ...]
    data: np.ndarray  # (count, dim) float32, C-contiguous, read-only

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.data[i]


@dataclass(frozen=True)
class IndexDirectory:
    """Aligned image/text matrices plus build metadata."""

    images: PackedMatrix
    texts: PackedMatrix
    manifest: dict

    @property
    def dim(self) -> int:
        return self.images.dim

    @property
    def page_count(self) -> int:
        return self.images.count

    @property
    def ids(self) -> tuple[str, ...]:
        return self.images.ids


def parse_embedding_jsonl(stream: TextIO | BinaryIO | Iterable[str]) -> list[Record]:
    """Parse an embedding JSONL stream, rejecting the whole file on any bad line.

    Returns (id, float32 vector) records in file order. Blank lines are
    ignored; every other line must be a JSON object with a string "id" and
    a numeric-array "embedding" of uniform dimension.
    """
    records: list[Record] = []
    expected_dim: int | None = None
    for line_no, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError:
                raise MalformedLine(line_no, "not valid UTF-8")
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, f"invalid JSON ({exc.msg})")
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, "expected a JSON object")
        rec_id = obj.get("id")
        emb = obj.get("embedding")
        if not isinstance(rec_id, str) or not rec_id:
            raise MalformedLine(line_no, 'missing or non-string "id"')
        if not isinstance(emb, list) or not emb:
            raise MalformedLine(line_no, 'missing or empty "embedding" array')
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in emb):
            raise MalformedLine(line_no, '"embedding" contains a non-numeric entry')
        vec = np.asarray(emb, dtype=EMBEDDING_DTYPE)
        if expected_dim is None:
            expected_dim = vec.shape[0]
        elif vec.shape[0] != expected_dim:
            raise DimMismatch(expected_dim, vec.shape[0], where=f"line {line_no}")
        if not np.isfinite(vec).all():
            raise NonFiniteValue(f"line {line_no}")
        records.append((rec_id, vec))
    return records


def parse_query_jsonl(stream: TextIO | Iterable[str]) -> list["QueryRecord"]:
    """Parse query JSONL: {"query_id", "text", "embeddings": {channel: [...]},
    optional "gold": [page_id...]} per line, channels limited to
    "image-query" / "text-query"."""
    from .core import IMAGE_CHANNEL, TEXT_CHANNEL, QueryRecord, as_embedding

    known = (IMAGE_CHANNEL, TEXT_CHANNEL)
    queries: list[QueryRecord] = []
    seen_ids: set[str] = set()
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, f"invalid JSON ({exc.msg})")
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, "expected a JSON object")
        query_id = obj.get("query_id")
        if not isinstance(query_id, str) or not query_id:
            raise MalformedLine(line_no, 'missing or non-string "query_id"')
        if query_id in seen_ids:
            raise DuplicateId(query_id)
        seen_ids.add(query_id)
        embeddings = obj.get("embeddings")
        if not isinstance(embeddings, dict) or not embeddings:
            raise MalformedLine(line_no, 'missing or empty "embeddings" object')
        channels = {}
        for name, vec in embeddings.items():
            if name not in known:
                raise MalformedLine(line_no, f"unknown channel {name!r}; expected one of {known}")
            try:
                channels[name] = as_embedding(vec, where=f"line {line_no} channel {name!r}")
            except ComretError as exc:
                raise MalformedLine(line_no, str(exc))
        gold = obj.get("gold", [])
        if not isinstance(gold, list) or not all(isinstance(g, str) for g in gold):
            raise MalformedLine(line_no, '"gold" must be an array of page ids')
        text = obj.get("text", "")
        if not isinstance(text, str):
            raise MalformedLine(line_no, '"text" must be a string')
        queries.append(
            QueryRecord(
                query_id=query_id,
                text=text,
                channel_embs=channels,
                gold_page_ids=frozenset(gold),
            )
        )
    return queries


def _pack(records: list[Record], normalize: bool) -> PackedMatrix:
    ids = tuple(r[0] for r in records)
    seen: set[str] = set()
    for rid in ids:
        if rid in seen:
            raise DuplicateId(rid)
        seen.add(rid)
    data = np.stack([r[1] for r in records]).astype(EMBEDDING_DTYPE, copy=False)
    if normalize:
        # Norms in float64; float32 squares of tiny values could underflow.
        norms = np.linalg.norm(data.astype(np.float64), axis=1)
        for rid, norm in zip(ids, norms):
            if norm == 0.0:
                raise ZeroVectorOnNormalize(rid)
        data = (data.astype(np.float64) / norms[:, None]).astype(EMBEDDING_DTYPE)
    data = np.ascontiguousarray(data)
    data.flags.writeable = False
    return PackedMatrix(ids=ids, data=data)


def build_index(images: list[Record], texts: list[Record], normalize: bool = False) -> IndexDirectory:
    """Pair image and text records by id into aligned matrices.

    Row order follows the images file. The id sets must match exactly and
    both modalities must share one embedding dimension.
    """
    if not images or not texts:
        raise ComretError("need at least one image and one text record")
    image_ids = {r[0] for r in images}
    text_ids = {r[0] for r in texts}
    if image_ids != text_ids:
        raise IdSetMismatch(image_ids.symmetric_difference(text_ids))
    if images[0][1].shape[0] != texts[0][1].shape[0]:
        raise DimMismatch(images[0][1].shape[0], texts[0][1].shape[0], where="texts vs images")

    image_matrix = _pack(images, normalize)
    by_id = dict(texts)
    if len(by_id) != len(texts):
        counts: dict[str, int] = {}
        for rid, _ in texts:
            counts[rid] = counts.get(rid, 0) + 1
        raise DuplicateId(next(rid for rid, n in counts.items() if n > 1))
    text_matrix = _pack([(rid, by_id[rid]) for rid in image_matrix.ids], normalize)

    manifest = {
        "dim": image_matrix.dim,
        "M": image_matrix.count,
        "normalize": bool(normalize),
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return IndexDirectory(images=image_matrix, texts=text_matrix, manifest=manifest)


def write_matrix(matrix: PackedMatrix, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, matrix.dim, matrix.count))
        fh.write(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())
        for rid in matrix.ids:
            encoded = rid.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"file ended while reading {what}")
    return buf


def read_matrix(path: str | Path) -> PackedMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise BadMagic(f"bad magic {magic!r}")
        version, dim, count = struct.unpack("<IIQ", _read_exact(fh, 16, "header"))
        if version != VERSION:
            raise UnsupportedVersion(version)
        payload = _read_exact(fh, count * dim * 4, "matrix payload")
        data = np.frombuffer(payload, dtype="<f4").astype(EMBEDDING_DTYPE).reshape(count, dim)
        ids = []
        for _ in range(count):
            (length,) = struct.unpack("<I", _read_exact(fh, 4, "id length"))
            ids.append(_read_exact(fh, length, "id bytes").decode("utf-8"))
    data = np.ascontiguousarray(data)
    data.flags.writeable = False
    return PackedMatrix(ids=tuple(ids), data=data)


def save_index(index: IndexDirectory, path: str | Path) -> None:
    """Write images.cmeb, texts.cmeb and manifest.json under ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    write_matrix(index.images, root / IMAGES_FILE)
    write_matrix(index.texts, root / TEXTS_FILE)
    with open(root / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(index.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_index(path: str | Path) -> IndexDirectory:
    root = Path(path)
    images = read_matrix(root / IMAGES_FILE)
    texts = read_matrix(root / TEXTS_FILE)
    with open(root / MANIFEST_FILE, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if images.ids != texts.ids:
        raise IdSetMismatch(set(images.ids).symmetric_difference(texts.ids))
    return IndexDirectory(images=images, texts=texts, manifest=manifest)
