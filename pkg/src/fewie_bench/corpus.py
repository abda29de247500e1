"""NER corpora: parsing, tagging schemes, and entity mention extraction.

Two on-disk formats are accepted:

* CoNLL-style column files: UTF-8 text, one token per line with
  whitespace-separated columns, blank lines between sentences, and optional
  ``-DOCSTART-`` lines which are skipped.
* JSON lines: one ``{"id": ..., "tokens": [...], "tags": [...]}`` object per
  line (``id`` optional).

Tags are either ``"O"`` or ``"<prefix>-<type>"``; the prefix set depends on
the tagging scheme (``B``/``I`` for BIO, ``I`` only for IO). Entity types may
themselves contain hyphens, so only the first ``-`` separates prefix from
type.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from fewie_bench.errors import CorpusParseError, EmptyCorpusError

DEFAULT_MAX_LENGTH = 128

DOCSTART = "-DOCSTART-"


class TagScheme(Enum):
    """Tagging scheme: BIO marks mention beginnings, IO does not."""

    BIO = "bio"
    IO = "io"

    @property
    def prefixes(self) -> tuple[str, ...]:
        return ("B", "I") if self is TagScheme.BIO else ("I",)

    @classmethod
    def from_string(cls, value: str) -> "TagScheme":
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown tagging scheme {value!r}, expected 'bio' or 'io'") from None


def split_tag(tag: str) -> tuple[str, str] | None:
    """Split ``"B-ORG"`` into ``("B", "ORG")``; return None for ``"O"``."""
    if tag == "O":
        return None
    prefix, sep, entity_type = tag.partition("-")
    if not sep or not entity_type:
        raise ValueError(f"malformed tag {tag!r}")
    return prefix, entity_type


@dataclass(frozen=True)
class Sentence:
    """A tokenized sentence with one tag per token.

    ``id`` must be unique within a corpus and stable across runs; episode
    manifests and embedding stores key on it.
    """

    id: str
    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"sentence {self.id!r}: {len(self.tokens)} tokens but {len(self.tags)} tags"
            )
        if not self.tokens:
            raise ValueError(f"sentence {self.id!r} is empty")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class EntityMention:
    """A maximal same-type entity span, as a half-open token index range."""

    sentence_id: str
    start: int
    end: int
    entity_type: str

    @property
    def span(self) -> tuple[int, int]:
        return self.start, self.end


@dataclass(frozen=True)
class Corpus:
    """An immutable collection of sentences under one tagging scheme."""

    sentences: tuple[Sentence, ...]
    scheme: TagScheme
    label_space: frozenset[str] = field(default=frozenset())
    _by_id: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        by_id: dict[str, Sentence] = {}
        types: set[str] = set()
        for sentence in self.sentences:
            if sentence.id in by_id:
                raise ValueError(f"duplicate sentence id {sentence.id!r}")
            by_id[sentence.id] = sentence
            for tag in sentence.tags:
                parts = _checked_split(tag, self.scheme, sentence.id)
                if parts is not None:
                    types.add(parts[1])
        object.__setattr__(self, "label_space", frozenset(types))
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.sentences)

    def get(self, sentence_id: str) -> Sentence | None:
        return self._by_id.get(sentence_id)

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self._by_id


def _checked_split(tag: str, scheme: TagScheme, sentence_id: str) -> tuple[str, str] | None:
    try:
        parts = split_tag(tag)
    except ValueError as exc:
        raise ValueError(f"sentence {sentence_id!r}: {exc}") from None
    if parts is not None and parts[0] not in scheme.prefixes:
        raise ValueError(
            f"sentence {sentence_id!r}: tag {tag!r} has prefix {parts[0]!r}, "
            f"not valid under {scheme.name}"
        )
    return parts


def extract_mentions(sentence: Sentence, scheme: TagScheme) -> list[EntityMention]:
    """Return maximal entity spans, sorted by start position.

    Under BIO a ``B-`` tag always opens a new span. An ``I-X`` token that does
    not continue a span of type X (dangling ``I-``) is treated as a span start
    rather than rejected; several public corpora contain such tags. Under IO
    spans break on ``O`` tokens and on type changes.
    """
    mentions: list[EntityMention] = []
    open_type: str | None = None
    open_start = 0

    def close(end: int):
        nonlocal open_type
        if open_type is not None:
            mentions.append(EntityMention(sentence.id, open_start, end, open_type))
            open_type = None

    for i, tag in enumerate(sentence.tags):
        parts = _checked_split(tag, scheme, sentence.id)
        if parts is None:
            close(i)
            continue
        prefix, entity_type = parts
        starts_new = prefix == "B" or open_type != entity_type
        if starts_new:
            close(i)
            open_type = entity_type
            open_start = i
    close(len(sentence))
    return mentions


def render_tags(mentions: Iterable[EntityMention], length: int, scheme: TagScheme) -> tuple[str, ...]:
    """Render mention spans back into a tag sequence under ``scheme``."""
    tags = ["O"] * length
    for mention in mentions:
        for i in range(mention.start, mention.end):
            prefix = "B" if (scheme is TagScheme.BIO and i == mention.start) else "I"
            tags[i] = f"{prefix}-{mention.entity_type}"
    return tuple(tags)


def convert_scheme(corpus: Corpus, target: TagScheme) -> Corpus:
    """Re-render every sentence under ``target``.

    Mentions are preserved exactly, except that IO cannot express adjacent
    same-type spans: converting BIO to IO merges them.
    """
    if target is corpus.scheme:
        return corpus
    sentences = []
    for sentence in corpus.sentences:
        mentions = extract_mentions(sentence, corpus.scheme)
        sentences.append(
            Sentence(sentence.id, sentence.tokens, render_tags(mentions, len(sentence), target))
        )
    return Corpus(tuple(sentences), target)


def _detect_scheme(tags: Iterable[str]) -> TagScheme:
    # BIO unless no B- prefix appears anywhere (pure-IO corpora).
    saw_entity = False
    for tag in tags:
        if tag == "O":
            continue
        saw_entity = True
        if tag.startswith("B-"):
            return TagScheme.BIO
    return TagScheme.IO if saw_entity else TagScheme.BIO


def _truncate(tokens: list[str], tags: list[str], scheme: TagScheme,
              max_length: int, sentence_id: str) -> Sentence:
    """Build a sentence, truncating to ``max_length`` tokens.

    Mentions cut by the truncation boundary are dropped entirely rather than
    kept as partial spans.
    """
    full = Sentence(sentence_id, tuple(tokens), tuple(tags))
    if len(full) <= max_length:
        return full
    mentions = [m for m in extract_mentions(full, scheme) if m.end <= max_length]
    return Sentence(
        sentence_id,
        tuple(tokens[:max_length]),
        render_tags(mentions, max_length, scheme),
    )


def parse_conll(text: str, token_col: int = 0, tag_col: int = -1, *,
                source: str = "corpus", max_length: int = DEFAULT_MAX_LENGTH) -> Corpus:
    """Parse CoNLL-style column text into a corpus.

    Args:
        text: Full file contents.
        token_col: Column index of the surface token.
        tag_col: Column index of the NER tag; negative indices count from
            the end of the line (default: last column).
        source: Stem used to assign sentence ids ``"<source>:<index>"``.
        max_length: Sentences longer than this are truncated.

    Raises:
        CorpusParseError: On malformed lines (with the line number), unknown
            tag prefixes, or empty input.
    """
    min_columns = max(
        token_col + 1 if token_col >= 0 else -token_col,
        tag_col + 1 if tag_col >= 0 else -tag_col,
    )

    blocks: list[tuple[list[str], list[str]]] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush():
        if tokens:
            blocks.append((list(tokens), list(tags)))
            tokens.clear()
            tags.clear()

    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            flush()
            continue
        if stripped.startswith(DOCSTART):
            continue
        columns = stripped.split()
        if len(columns) < min_columns:
            raise CorpusParseError(
                f"expected at least {min_columns} columns, got {len(columns)}", line_number
            )
        tokens.append(columns[token_col])
        tags.append(columns[tag_col])
    flush()

    return _build_corpus(blocks, source=source, max_length=max_length)


def parse_jsonl(text: str, *, source: str = "corpus",
                max_length: int = DEFAULT_MAX_LENGTH) -> Corpus:
    """Parse JSON-lines corpus text ({"id", "tokens", "tags"} per line)."""
    blocks: list[tuple[list[str], list[str]]] = []
    ids: list[str | None] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise CorpusParseError(f"invalid JSON: {exc.msg}", line_number) from None
        if not isinstance(record, dict) or "tokens" not in record or "tags" not in record:
            raise CorpusParseError("expected an object with 'tokens' and 'tags'", line_number)
        record_tokens = [str(t) for t in record["tokens"]]
        record_tags = [str(t) for t in record["tags"]]
        if len(record_tokens) != len(record_tags):
            raise CorpusParseError(
                f"{len(record_tokens)} tokens but {len(record_tags)} tags", line_number
            )
        blocks.append((record_tokens, record_tags))
        ids.append(str(record["id"]) if "id" in record else None)
    return _build_corpus(blocks, source=source, max_length=max_length, explicit_ids=ids)


def _build_corpus(blocks: list[tuple[list[str], list[str]]], *, source: str,
                  max_length: int, explicit_ids: list[str | None] | None = None) -> Corpus:
    if not blocks:
        raise EmptyCorpusError("input contains no sentences")
    scheme = _detect_scheme(tag for _, block_tags in blocks for tag in block_tags)
    sentences = []
    for index, (tokens, tags) in enumerate(blocks):
        sentence_id = None if explicit_ids is None else explicit_ids[index]
        if sentence_id is None:
            sentence_id = f"{source}:{index}"
        try:
            sentences.append(_truncate(tokens, tags, scheme, max_length, sentence_id))
        except ValueError as exc:
            raise CorpusParseError(str(exc)) from None
    try:
        return Corpus(tuple(sentences), scheme)
    except ValueError as exc:
        raise CorpusParseError(str(exc)) from None


def load_corpus(path: str | Path, format: str = "conll", *, token_col: int = 0,
                tag_col: int = -1, max_length: int = DEFAULT_MAX_LENGTH) -> Corpus:
    """Read a corpus file; sentence ids default to ``"<file-stem>:<index>"``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusParseError(f"cannot read corpus {path}: {exc}") from exc
    if format == "conll":
        return parse_conll(text, token_col, tag_col, source=path.stem, max_length=max_length)
    if format == "jsonl":
        return parse_jsonl(text, source=path.stem, max_length=max_length)
    raise ValueError(f"unknown corpus format {format!r}, expected 'conll' or 'jsonl'")


def serialize_conll(corpus: Corpus) -> str:
    """Render a corpus as two-column CoNLL text (token, tag)."""
    blocks = []
    for sentence in corpus.sentences:
        blocks.append(
            "\n".join(f"{token} {tag}" for token, tag in zip(sentence.tokens, sentence.tags))
        )
    return "\n\n".join(blocks) + "\n"


def serialize_jsonl(corpus: Corpus) -> str:
    """Render a corpus as JSON lines, preserving sentence ids."""
    lines = []
    for sentence in corpus.sentences:
        lines.append(json.dumps(
            {"id": sentence.id, "tokens": list(sentence.tokens), "tags": list(sentence.tags)},
            ensure_ascii=False,
        ))
    return "\n".join(lines) + "\n"
