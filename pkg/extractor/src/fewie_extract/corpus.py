"""Corpus reading with the same sentence semantics as the benchmark parser.

Only ids and token sequences matter for embedding extraction, but sentence
segmentation, ``-DOCSTART-`` skipping, id assignment (``<stem>:<index>``),
and the 128-token truncation must agree exactly with the consumer, or store
lookups would misalign. The agreement is enforced by shared fixture tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

DEFAULT_MAX_LENGTH = 128

DOCSTART = "-DOCSTART-"


class CorpusError(Exception):
    """Corpus file cannot be parsed."""


@dataclass(frozen=True)
class TokenizedSentence:
    id: str
    tokens: tuple[str, ...]


def read_sentences(path: str | Path, format: str = "conll", *, token_col: int = 0,
                   tag_col: int = -1,
                   max_length: int = DEFAULT_MAX_LENGTH) -> list[TokenizedSentence]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    if format == "conll":
        return _read_conll(text, path.stem, token_col, tag_col, max_length)
    if format == "jsonl":
        return _read_jsonl(text, path.stem, max_length)
    raise CorpusError(f"unknown corpus format {format!r}, expected 'conll' or 'jsonl'")


def _read_conll(text: str, stem: str, token_col: int, tag_col: int,
                max_length: int) -> list[TokenizedSentence]:
    min_columns = max(
        token_col + 1 if token_col >= 0 else -token_col,
        tag_col + 1 if tag_col >= 0 else -tag_col,
    )
    sentences: list[TokenizedSentence] = []
    tokens: list[str] = []

    def flush():
        if tokens:
            sentences.append(TokenizedSentence(f"{stem}:{len(sentences)}",
                                               tuple(tokens[:max_length])))
            tokens.clear()

    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            flush()
            continue
        if stripped.startswith(DOCSTART):
            continue
        columns = stripped.split()
        if len(columns) < min_columns:
            raise CorpusError(
                f"line {line_number}: expected at least {min_columns} columns, "
                f"got {len(columns)}"
            )
        tokens.append(columns[token_col])
    flush()
    if not sentences:
        raise CorpusError("input contains no sentences")
    return sentences


def _read_jsonl(text: str, stem: str, max_length: int) -> list[TokenizedSentence]:
    sentences: list[TokenizedSentence] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {line_number}: invalid JSON: {exc.msg}") from None
        if "tokens" not in record:
            raise CorpusError(f"line {line_number}: expected an object with 'tokens'")
        sentence_id = str(record["id"]) if "id" in record else f"{stem}:{len(sentences)}"
        sentences.append(TokenizedSentence(
            sentence_id, tuple(str(t) for t in record["tokens"][:max_length])))
    if not sentences:
        raise CorpusError("input contains no sentences")
    return sentences
