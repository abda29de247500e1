"""Deterministic random number streams.

Every random draw in this package comes from a named, versioned,
counter-based generator so that sampled episodes, pair sets, and baseline
embeddings are bit-reproducible across processes and machines:

* Bit generator: Philox4x32-10 (``numpy.random.Philox``), a counter-based
  generator with a 128-bit key.
* Keying: the key is the first 16 little-endian bytes of
  ``BLAKE2b("fewie-bench-rng-v1" | part_0 | part_1 | ...)`` where parts are
  the ``str()`` of each argument joined by ``0x1f`` separators.

Independent streams (per episode, per token type, per pair set) are obtained
by keying, never by drawing from a shared stream, so adding consumers never
disturbs existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

RNG_SCHEME = "fewie-bench-rng-v1"

_SEP = b"\x1f"


def stream_key(*parts: object) -> tuple[int, int]:
    """Derive a 128-bit Philox key from an arbitrary tuple of parts."""
    h = hashlib.blake2b(digest_size=16)
    h.update(RNG_SCHEME.encode("utf-8"))
    for part in parts:
        h.update(_SEP)
        h.update(str(part).encode("utf-8"))
    digest = h.digest()
    lo = int.from_bytes(digest[:8], "little")
    hi = int.from_bytes(digest[8:], "little")
    return lo, hi


def make_generator(*parts: object) -> np.random.Generator:
    """Create an independent generator for the stream named by ``parts``."""
    lo, hi = stream_key(*parts)
    return np.random.Generator(np.random.Philox(key=np.array([lo, hi], dtype=np.uint64)))


def derive_seed(*parts: object) -> int:
    """Collapse a stream name to a single 64-bit seed.

    Used where an interface carries one integer (episode specs, pair seeds)
    but the value should depend on several inputs.
    """
    return stream_key(*parts)[0]
