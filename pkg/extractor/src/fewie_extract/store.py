"""Writer for the fewie-bench embedding store wire format.

Layout (little-endian, bit-exact):

    magic "FEWE" | version u16 = 1 | dim u32 | record count u64
    index entries: {id length u16, id UTF-8, token count u32, offset u64}
    data region: float32 row-major matrices (offsets absolute)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"FEWE"
VERSION = 1

_HEADER = struct.Struct("<4sHIQ")
_INDEX_HEAD = struct.Struct("<H")
_INDEX_TAIL = struct.Struct("<IQ")


class StoreWriteError(Exception):
    pass


def write_store(path: str | Path, records: Sequence[tuple[str, np.ndarray]],
                dim: int) -> None:
    """Write (sentence_id, float matrix) records to ``path``."""
    seen: set[str] = set()
    encoded: list[tuple[bytes, np.ndarray]] = []
    for sentence_id, matrix in records:
        matrix = np.ascontiguousarray(matrix, dtype="<f4")
        if matrix.ndim != 2 or matrix.shape[1] != dim:
            raise StoreWriteError(
                f"record {sentence_id!r} has shape {matrix.shape}, expected (*, {dim})"
            )
        if sentence_id in seen:
            raise StoreWriteError(f"duplicate sentence id {sentence_id!r}")
        seen.add(sentence_id)
        encoded.append((sentence_id.encode("utf-8"), matrix))

    index_size = sum(_INDEX_HEAD.size + len(id_bytes) + _INDEX_TAIL.size
                     for id_bytes, _ in encoded)
    offset = _HEADER.size + index_size
    with open(path, "wb") as handle:
        handle.write(_HEADER.pack(MAGIC, VERSION, dim, len(encoded)))
        for id_bytes, matrix in encoded:
            handle.write(_INDEX_HEAD.pack(len(id_bytes)))
            handle.write(id_bytes)
            handle.write(_INDEX_TAIL.pack(matrix.shape[0], offset))
            offset += matrix.nbytes
        for _, matrix in encoded:
            handle.write(matrix.tobytes())
