"""Token embeddings: a deterministic random baseline and a file-backed store.

The store file format is fixed so that other tools can produce compatible
files (bit-exact layout, little-endian throughout):

    magic "FEWE" (4 bytes)
    format version  u16  (currently 1)
    dim             u32
    record count    u64
    index entries, record_count times:
        id length   u16
        id          UTF-8 bytes
        token count u32
        byte offset u64   (absolute from file start)
    data region: float32 row-major matrices, one per record

Stored values are float32 to halve file size; everything downstream of the
store runs in float64.
"""

from __future__ import annotations

import mmap
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fewie_bench._rng import make_generator
from fewie_bench.corpus import Sentence
from fewie_bench.errors import (
    AlignmentError,
    MissingEmbeddingError,
    StoreCorruptionError,
    StoreError,
    StoreFormatError,
)

STORE_MAGIC = b"FEWE"
STORE_VERSION = 1

_HEADER = struct.Struct("<4sHIQ")
_INDEX_HEAD = struct.Struct("<H")
_INDEX_TAIL = struct.Struct("<IQ")

DEFAULT_RANDOM_DIM = 768


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Per-token embedding rows for one sentence (row t = token t)."""

    sentence_id: str
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValueError(
                f"embedding matrix for {self.sentence_id!r} must be 2-D and nonempty, "
                f"got shape {vectors.shape}"
            )
        if not np.isfinite(vectors).all():
            raise ValueError(f"embedding matrix for {self.sentence_id!r} has non-finite entries")
        object.__setattr__(self, "vectors", vectors)

    @property
    def token_count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class EncoderConfig:
    """Which encoder to use: ``random`` (seeded baseline) or ``store``."""

    kind: str
    dim: int = DEFAULT_RANDOM_DIM
    seed: int = 0
    store_path: str | Path | None = None

    def __post_init__(self):
        if self.kind not in ("random", "store"):
            raise ValueError(f"encoder kind must be 'random' or 'store', got {self.kind!r}")
        if self.kind == "random" and self.dim < 1:
            raise ValueError(f"random encoder dim must be >= 1, got {self.dim}")
        if self.kind == "store" and self.store_path is None:
            raise ValueError("store encoder requires store_path")


def l2_normalize(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale each row to unit Euclidean norm; zero rows pass through."""
    vectors = np.asarray(matrix.vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return EmbeddingMatrix(matrix.sentence_id, vectors / safe)


class RandomEncoder:
    """Static per-token-type embeddings drawn from a seeded normal stream.

    Every occurrence of the same surface string maps to the same vector,
    within and across sentences and processes: the vector for a token is a
    pure function of (seed, token string).
    """

    def __init__(self, dim: int = DEFAULT_RANDOM_DIM, seed: int = 0):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, token: str) -> np.ndarray:
        vector = self._cache.get(token)
        if vector is None:
            vector = make_generator(self.seed, "token", token).standard_normal(self.dim)
            vector.setflags(write=False)
            self._cache[token] = vector
        return vector

    def encode(self, sentence: Sentence) -> EmbeddingMatrix:
        rows = np.stack([self._vector(token) for token in sentence.tokens])
        return EmbeddingMatrix(sentence.id, rows)


class EmbeddingStore:
    """Read-only view over a store file; record payloads load lazily."""

    def __init__(self, path: str | Path, dim: int,
                 index: dict[str, tuple[int, int]], data: mmap.mmap):
        self.path = Path(path)
        self.dim = dim
        self.index = index
        self._data = data

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self.index

    def sentence_ids(self) -> list[str]:
        return list(self.index)

    def token_count(self, sentence_id: str) -> int:
        return self.index[sentence_id][1]

    def read_matrix(self, sentence_id: str) -> np.ndarray:
        """Stored float32 rows for one sentence, exactly as written."""
        entry = self.index.get(sentence_id)
        if entry is None:
            raise MissingEmbeddingError(
                f"sentence id {sentence_id!r} not present in store {self.path}"
            )
        offset, token_count = entry
        n_bytes = token_count * self.dim * 4
        raw = self._data[offset:offset + n_bytes]
        return np.frombuffer(raw, dtype="<f4").reshape(token_count, self.dim)

    def close(self) -> None:
        self._data.close()


class StoreEncoder:
    """Serves precomputed embeddings from an :class:`EmbeddingStore`."""

    def __init__(self, store: EmbeddingStore):
        self.store = store
        self.dim = store.dim

    def encode(self, sentence: Sentence) -> EmbeddingMatrix:
        stored = self.store.read_matrix(sentence.id)
        if stored.shape[0] != len(sentence):
            raise AlignmentError(
                f"sentence {sentence.id!r}: store has {stored.shape[0]} token vectors "
                f"but the corpus sentence has {len(sentence)} tokens"
            )
        return EmbeddingMatrix(sentence.id, stored.astype(np.float64))


def make_encoder(config: EncoderConfig) -> RandomEncoder | StoreEncoder:
    if config.kind == "random":
        return RandomEncoder(config.dim, config.seed)
    return StoreEncoder(store_read(config.store_path))


def encode(config: EncoderConfig, sentence: Sentence) -> EmbeddingMatrix:
    """One-shot convenience wrapper around :func:`make_encoder`."""
    return make_encoder(config).encode(sentence)


def store_write(path: str | Path, records: Iterable[EmbeddingMatrix] | Sequence[EmbeddingMatrix],
                dim: int) -> EmbeddingStore:
    """Write matrices to a store file and return the opened store.

    Raises:
        StoreError: On duplicate sentence ids or a dimension mismatch.
    """
    path = Path(path)
    records = list(records)
    seen: set[str] = set()
    index_entries: list[tuple[bytes, int]] = []
    for record in records:
        if record.dim != dim:
            raise StoreError(
                f"record {record.sentence_id!r} has dim {record.dim}, store dim is {dim}"
            )
        if record.sentence_id in seen:
            raise StoreError(f"duplicate sentence id {record.sentence_id!r}")
        seen.add(record.sentence_id)
        index_entries.append((record.sentence_id.encode("utf-8"), record.token_count))

    index_size = sum(_INDEX_HEAD.size + len(id_bytes) + _INDEX_TAIL.size
                     for id_bytes, _ in index_entries)
    offset = _HEADER.size + index_size

    try:
        with open(path, "wb") as handle:
            handle.write(_HEADER.pack(STORE_MAGIC, STORE_VERSION, dim, len(records)))
            for id_bytes, token_count in index_entries:
                handle.write(_INDEX_HEAD.pack(len(id_bytes)))
                handle.write(id_bytes)
                handle.write(_INDEX_TAIL.pack(token_count, offset))
                offset += token_count * dim * 4
            for record in records:
                handle.write(np.ascontiguousarray(record.vectors, dtype="<f4").tobytes())
    except OSError as exc:
        raise StoreError(f"cannot write store {path}: {exc}") from exc
    return store_read(path)


def store_read(path: str | Path) -> EmbeddingStore:
    """Open a store file, validating the header and index.

    Raises:
        StoreFormatError: Wrong magic bytes or unsupported version.
        StoreCorruptionError: Index entry points past the end of the file.
    """
    path = Path(path)
    try:
        handle = open(path, "rb")
    except OSError as exc:
        raise StoreError(f"cannot open store {path}: {exc}") from exc
    with handle:
        header = handle.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise StoreFormatError(f"{path}: file too short for a store header")
        magic, version, dim, count = _HEADER.unpack(header)
        if magic != STORE_MAGIC:
            raise StoreFormatError(f"{path}: bad magic {magic!r}")
        if version != STORE_VERSION:
            raise StoreFormatError(f"{path}: unsupported store version {version}")

        index: dict[str, tuple[int, int]] = {}
        for _ in range(count):
            head = handle.read(_INDEX_HEAD.size)
            if len(head) < _INDEX_HEAD.size:
                raise StoreCorruptionError(f"{path}: truncated index")
            (id_length,) = _INDEX_HEAD.unpack(head)
            id_bytes = handle.read(id_length)
            tail = handle.read(_INDEX_TAIL.size)
            if len(id_bytes) < id_length or len(tail) < _INDEX_TAIL.size:
                raise StoreCorruptionError(f"{path}: truncated index")
            token_count, offset = _INDEX_TAIL.unpack(tail)
            sentence_id = id_bytes.decode("utf-8")
            if sentence_id in index:
                raise StoreCorruptionError(f"{path}: duplicate id {sentence_id!r} in index")
            index[sentence_id] = (offset, token_count)

        handle.seek(0, 2)
        file_size = handle.tell()
        for sentence_id, (offset, token_count) in index.items():
            if offset + token_count * dim * 4 > file_size:
                raise StoreCorruptionError(
                    f"{path}: record {sentence_id!r} extends past end of file"
                )
        data = mmap.mmap(handle.fileno(), 0, access=mmap.ACCESS_READ)
    return EmbeddingStore(path, dim, index, data)
