"""Transformer embedding extraction with subword-to-token alignment.

Each corpus sentence is tokenized with the model's own (fast) tokenizer
using the pre-split corpus tokens; the final hidden layer provides one
vector per corpus token, taken from the token's first subword (or the mean
over its subwords with ``pool="mean"``). Special tokens never map to corpus
tokens. Subword sequences are truncated at ``max_length``; corpus tokens
whose subwords fall entirely past the truncation point receive a zero
vector and are listed in the sidecar report. Sentences whose alignment
fails (a mid-sentence token with no subwords) are skipped and reported.

The model runs in eval mode under ``torch.no_grad``; given fixed weights the
output store is byte-deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from fewie_extract.corpus import TokenizedSentence, read_sentences
from fewie_extract.store import write_store

DEFAULT_MAX_LENGTH = 128
DEFAULT_BATCH_SIZE = 16

POOLING_MODES = ("first", "mean")


class ExtractionError(Exception):
    """Model loading or store writing failed."""


@dataclass(frozen=True)
class ExtractionSpec:
    model: str
    corpus_path: str | Path
    corpus_format: str = "conll"
    output_path: str | Path = "embeddings.fewe"
    pool: str = "first"
    batch_size: int = DEFAULT_BATCH_SIZE
    max_length: int = DEFAULT_MAX_LENGTH
    device: str = "cpu"
    token_col: int = 0
    tag_col: int = -1
    report_path: str | Path | None = None

    def __post_init__(self):
        if self.pool not in POOLING_MODES:
            raise ValueError(f"pool must be one of {POOLING_MODES}, got {self.pool!r}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_length < 1:
            raise ValueError(f"max_length must be >= 1, got {self.max_length}")

    @property
    def resolved_report_path(self) -> Path:
        if self.report_path is not None:
            return Path(self.report_path)
        return Path(str(self.output_path) + ".report.json")


def _load_model(spec: ExtractionSpec):
    try:
        tokenizer = AutoTokenizer.from_pretrained(spec.model)
        model = AutoModel.from_pretrained(spec.model)
    except Exception as exc:
        raise ExtractionError(f"cannot load model {spec.model!r}: {exc}") from exc
    if not getattr(tokenizer, "is_fast", False):
        raise ExtractionError(
            f"model {spec.model!r} has no fast tokenizer; word-level alignment "
            f"requires one"
        )
    model.eval()
    model.to(spec.device)
    return tokenizer, model


def _align_batch(encoding, hidden: torch.Tensor, batch: list[TokenizedSentence],
                 pool: str):
    """Yield (sentence, matrix or None, zeroed_token_indices, failure_reason)."""
    for position, sentence in enumerate(batch):
        word_ids = encoding.word_ids(position)
        spans: dict[int, list[int]] = {}
        for subword_index, word_index in enumerate(word_ids):
            if word_index is not None:
                spans.setdefault(word_index, []).append(subword_index)

        present = sorted(spans)
        if present != list(range(len(present))):
            yield sentence, None, [], "subword alignment has gaps"
            continue
        if len(present) > len(sentence.tokens):
            yield sentence, None, [], "more aligned words than corpus tokens"
            continue

        dim = hidden.shape[-1]
        matrix = np.zeros((len(sentence.tokens), dim), dtype=np.float32)
        for word_index in present:
            subwords = spans[word_index]
            if pool == "first":
                vector = hidden[position, subwords[0]]
            else:
                vector = hidden[position, subwords].mean(dim=0)
            matrix[word_index] = vector.cpu().numpy()
        zeroed = list(range(len(present), len(sentence.tokens)))
        yield sentence, matrix, zeroed, None


def extract(spec: ExtractionSpec) -> dict:
    """Run the extraction; write the store and sidecar report.

    Returns the report dictionary (also written to
    ``spec.resolved_report_path``).
    """
    sentences = read_sentences(spec.corpus_path, spec.corpus_format,
                               token_col=spec.token_col, tag_col=spec.tag_col,
                               max_length=spec.max_length)
    tokenizer, model = _load_model(spec)

    records: list[tuple[str, np.ndarray]] = []
    skipped: list[dict] = []
    truncated: list[dict] = []

    with torch.no_grad():
        for start in range(0, len(sentences), spec.batch_size):
            batch = sentences[start:start + spec.batch_size]
            encoding = tokenizer(
                [list(s.tokens) for s in batch],
                is_split_into_words=True,
                truncation=True,
                max_length=spec.max_length,
                padding=True,
                return_tensors="pt",
            )
            inputs = {k: v.to(spec.device) for k, v in encoding.items()}
            hidden = model(**inputs).last_hidden_state
            for sentence, matrix, zeroed, failure in _align_batch(
                    encoding, hidden, batch, spec.pool):
                if failure is not None:
                    skipped.append({"id": sentence.id, "reason": failure})
                    continue
                records.append((sentence.id, matrix))
                if zeroed:
                    truncated.append({"id": sentence.id, "zeroed_tokens": zeroed})

    dim = int(model.config.hidden_size)
    try:
        write_store(spec.output_path, records, dim)
    except Exception as exc:
        raise ExtractionError(f"cannot write store {spec.output_path}: {exc}") from exc

    report = {
        "model": spec.model,
        "corpus": str(spec.corpus_path),
        "pool": spec.pool,
        "max_length": spec.max_length,
        "dim": dim,
        "sentences_total": len(sentences),
        "sentences_written": len(records),
        "skipped": skipped,
        "truncated": truncated,
    }
    spec.resolved_report_path.write_text(
        json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return report
