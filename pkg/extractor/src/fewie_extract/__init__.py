"""fewie-extract: run a pretrained transformer over an NER corpus and write
one final-hidden-layer vector per corpus token into the fewie-bench binary
embedding store format.

This package deliberately shares no code with fewie-bench: it re-implements
the corpus parsing semantics and the store wire format, and the test suite
verifies byte-level interoperability against the benchmark package.
"""

__version__ = "0.1.0"

from fewie_extract.extract import ExtractionSpec, extract  # noqa: F401
