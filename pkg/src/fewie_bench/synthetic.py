"""Synthetic corpora and embedding stores for tests and benchmarks.

Token surface strings are globally unique, so the random baseline encoder
assigns them independent vectors; class structure can then be injected only
through a clustered store, which makes chance levels and separability
controllable in closed form.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from fewie_bench._rng import make_generator
from fewie_bench.corpus import Corpus, Sentence, TagScheme, extract_mentions
from fewie_bench.encoders import EmbeddingMatrix, EmbeddingStore, store_write


def balanced_corpus(n_classes: int = 5, sentences_per_class: int = 30,
                    sentence_length: int = 5, mention_length: int = 1,
                    seed: int = 0, source: str = "syn") -> Corpus:
    """Corpus of pure single-mention sentences, balanced across classes.

    Every sentence carries exactly one mention of one class, so every
    sentence is pure for any class set and every class admits
    ``sentences_per_class`` eligible mentions.
    """
    if mention_length > sentence_length:
        raise ValueError("mention_length cannot exceed sentence_length")
    rng = make_generator(seed, "balanced-corpus")
    class_names = [f"C{c}" for c in range(n_classes)]
    sentences = []
    counter = 0
    for c, name in enumerate(class_names):
        for _ in range(sentences_per_class):
            sentence_id = f"{source}:{counter}"
            start = int(rng.integers(0, sentence_length - mention_length + 1))
            tokens = tuple(f"w{counter}x{t}" for t in range(sentence_length))
            tags = ["O"] * sentence_length
            for t in range(start, start + mention_length):
                tags[t] = ("B-" if t == start else "I-") + name
            sentences.append(Sentence(sentence_id, tokens, tuple(tags)))
            counter += 1
    return Corpus(tuple(sentences), TagScheme.BIO)


def mixed_corpus(seed: int = 0, n_classes: int = 6, pure_per_class: int = 16,
                 mixed_sentences: int = 12, source: str = "mix") -> Corpus:
    """Randomized corpus with multi-token mentions and some two-class sentences.

    Two-class sentences are pure only for episodes containing both classes,
    which exercises the purity filter without making sampling infeasible.
    """
    rng = make_generator(seed, "mixed-corpus")
    class_names = [f"T{c}" for c in range(n_classes)]
    sentences = []
    counter = 0

    def build_sentence(classes_here: list[str]) -> Sentence:
        nonlocal counter
        sentence_id = f"{source}:{counter}"
        parts: list[tuple[str, str | None]] = []  # (token, type or None)
        for name in classes_here:
            length = int(rng.integers(1, 4))
            for _ in range(length):
                parts.append((f"m{counter}x{len(parts)}", name))
            parts.append((f"f{counter}x{len(parts)}", None))
        for _ in range(int(rng.integers(1, 4))):
            parts.append((f"f{counter}x{len(parts)}", None))
        tokens = tuple(token for token, _ in parts)
        tags = []
        previous: str | None = None
        for _, entity_type in parts:
            if entity_type is None:
                tags.append("O")
            else:
                prefix = "B" if entity_type != previous else "I"
                tags.append(f"{prefix}-{entity_type}")
            previous = entity_type
        counter += 1
        return Sentence(sentence_id, tokens, tuple(tags))

    for name in class_names:
        for _ in range(pure_per_class):
            sentences.append(build_sentence([name]))
    for _ in range(mixed_sentences):
        first, second = rng.choice(n_classes, size=2, replace=False)
        sentences.append(build_sentence([class_names[first], class_names[second]]))
    return Corpus(tuple(sentences), TagScheme.BIO)


def write_clustered_store(corpus: Corpus, path: str | Path, dim: int = 16,
                          noise_scale: float = 0.35, seed: int = 0,
                          noisy_dims: int = 0, noisy_scale: float = 1.2) -> EmbeddingStore:
    """Write a store whose mention tokens cluster around per-class centers.

    Mention tokens get ``center(class) + noise`` with unit-norm class centers;
    other tokens get pure noise. ``noise_scale`` controls separability. When
    ``noisy_dims > 0``, the last ``noisy_dims`` dimensions carry no class
    signal but ``noisy_scale`` noise: a weighted linear readout can learn to
    discount them while plain Euclidean centroid distances cannot.
    """
    if not 0 <= noisy_dims < dim:
        raise ValueError(f"noisy_dims must be in [0, {dim}), got {noisy_dims}")
    signal_dims = dim - noisy_dims
    labels = sorted(corpus.label_space)
    center_rng = make_generator(seed, "store-centers")
    centers = np.zeros((len(labels), dim))
    centers[:, :signal_dims] = center_rng.standard_normal((len(labels), signal_dims))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    center_of = {name: centers[i] for i, name in enumerate(labels)}
    per_dim_scale = np.full(dim, noise_scale)
    per_dim_scale[signal_dims:] = noisy_scale

    records = []
    for sentence in corpus.sentences:
        rng = make_generator(seed, "store-rows", sentence.id)
        rows = rng.standard_normal((len(sentence), dim)) * per_dim_scale
        for mention in extract_mentions(sentence, corpus.scheme):
            for t in range(mention.start, mention.end):
                rows[t] += center_of[mention.entity_type]
        records.append(EmbeddingMatrix(sentence.id, rows))
    return store_write(path, records, dim)
