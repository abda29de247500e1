"""Readout classifiers fitted on episode support sets.

Three kinds, all operating on L2-normalized embeddings:

* ``lr`` - multinomial logistic regression without a bias term, fitted by
  deterministic full-batch gradient descent with backtracking line search;
* ``nn`` - 1-nearest-neighbor over the raw support tokens;
* ``nc`` - nearest centroid, one mean embedding per class.

Distances are Euclidean; argmins are computed on squared distances and the
reported score vectors carry the Euclidean values. Ties break toward the
lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fewie_bench import kernels
from fewie_bench.errors import NumericError

READOUT_KINDS = ("lr", "nn", "nc")

DEFAULT_L2_LAMBDA = 1.0
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000


@dataclass(frozen=True)
class SupportSet:
    """Token-expanded support embeddings with class indices in [0, n_classes)."""

    embeddings: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        embeddings = np.ascontiguousarray(self.embeddings, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if embeddings.ndim != 2:
            raise ValueError(f"embeddings must be 2-D, got shape {embeddings.shape}")
        if labels.shape != (embeddings.shape[0],):
            raise ValueError(
                f"labels shape {labels.shape} does not match {embeddings.shape[0]} rows"
            )
        if not np.isfinite(embeddings).all():
            raise ValueError("support embeddings contain non-finite values")
        if self.n_classes < 1:
            raise ValueError(f"n_classes must be >= 1, got {self.n_classes}")
        present = np.unique(labels)
        if present.size and (present[0] < 0 or present[-1] >= self.n_classes):
            raise ValueError(f"labels outside [0, {self.n_classes})")
        if present.size != self.n_classes:
            missing = sorted(set(range(self.n_classes)) - set(present.tolist()))
            raise ValueError(f"support set is missing classes {missing}")
        object.__setattr__(self, "embeddings", embeddings)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class ReadoutModel:
    """A fitted classifier; which fields are set depends on ``kind``."""

    kind: str
    n_classes: int
    dim: int
    weights: np.ndarray | None = None          # lr: (n_classes, dim)
    references: np.ndarray | None = None       # nn: support rows
    reference_labels: np.ndarray | None = None  # nn: labels per row
    centroids: np.ndarray | None = None        # nc: (n_classes, dim)


def fit_logreg(support: SupportSet, l2_lambda: float = DEFAULT_L2_LAMBDA,
               tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ReadoutModel:
    """Fit L2-regularized multinomial logistic regression on the support set.

    The objective is the mean cross-entropy over support tokens plus
    ``l2_lambda/2`` times the squared Frobenius norm of the weights, with no
    bias. Optimization is deterministic (full batch, zero init), so refitting
    the same support set reproduces the weights bitwise.
    """
    if support.size < support.n_classes:
        raise ValueError(
            f"need at least {support.n_classes} support tokens, got {support.size}"
        )
    if l2_lambda < 0:
        raise ValueError(f"l2_lambda must be >= 0, got {l2_lambda}")
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    weights, _, _, status = kernels.logreg_fit(
        support.embeddings, support.labels, support.n_classes, l2_lambda, tol, max_iter
    )
    if status != kernels.STATUS_OK:
        raise NumericError("logistic regression produced a non-finite loss")
    return ReadoutModel("lr", support.n_classes, support.dim, weights=np.asarray(weights))


def fit_readout(kind: str, support: SupportSet) -> ReadoutModel:
    """Fit a readout model of the requested kind with default settings."""
    if kind == "lr":
        return fit_logreg(support)
    if kind == "nn":
        return ReadoutModel("nn", support.n_classes, support.dim,
                            references=support.embeddings,
                            reference_labels=support.labels)
    if kind == "nc":
        centroids = np.empty((support.n_classes, support.dim))
        for c in range(support.n_classes):
            centroids[c] = support.embeddings[support.labels == c].mean(axis=0)
        return ReadoutModel("nc", support.n_classes, support.dim, centroids=centroids)
    raise ValueError(f"unknown readout kind {kind!r}, expected one of {READOUT_KINDS}")


def predict_batch(model: ReadoutModel, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Classify query rows; returns (class indices, per-class score matrix).

    Scores are probabilities for ``lr`` and Euclidean distances for ``nn``
    (per-class minimum) and ``nc`` (distance to each centroid).
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != model.dim:
        raise ValueError(f"queries must have shape (n, {model.dim}), got {queries.shape}")
    if not np.isfinite(queries).all():
        raise ValueError("query embeddings contain non-finite values")

    if model.kind == "lr":
        scores = queries @ model.weights.T
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=1, keepdims=True)
        return scores.argmax(axis=1), scores

    if model.kind == "nn":
        sq = kernels.pairwise_sqdist(queries, model.references)
        per_class = np.empty((queries.shape[0], model.n_classes))
        for c in range(model.n_classes):
            per_class[:, c] = sq[:, model.reference_labels == c].min(axis=1)
        return per_class.argmin(axis=1), np.sqrt(per_class)

    if model.kind == "nc":
        sq = kernels.pairwise_sqdist(queries, model.centroids)
        return sq.argmin(axis=1), np.sqrt(sq)

    raise ValueError(f"unknown readout kind {model.kind!r}")


def predict_readout(model: ReadoutModel, query: np.ndarray) -> tuple[int, np.ndarray]:
    """Classify a single query embedding row."""
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1:
        raise ValueError(f"query must be a 1-D row, got shape {query.shape}")
    labels, scores = predict_batch(model, query[None, :])
    return int(labels[0]), scores[0]
