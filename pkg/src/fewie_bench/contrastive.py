"""Support-set contrastive learning over a trainable linear projection.

Pairs come exclusively from the episode's own support tokens: per class, one
positive pair (anchor and a same-class partner) and K negative pairs (the
same anchor against other-class tokens). The margin loss pulls positives
together and pushes negatives at least ``margin`` apart:

    sum over positives of d(i, j) + sum over negatives of max(0, margin - d(i, j))

with d the Euclidean distance between projected embeddings. The projection
is a square matrix initialized to the identity and trained with full-batch
Adam, one step per epoch; the fitted head is then applied to the episode's
support and query embeddings (followed by re-normalization) before readout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fewie_bench._rng import make_generator
from fewie_bench.errors import NumericError
from fewie_bench.readout import SupportSet


@dataclass(frozen=True)
class ContrastiveConfig:
    margin: float = 1.0
    learning_rate: float = 5e-5
    epochs: int = 1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    pair_seed: int = 0

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError(f"margin must be > 0, got {self.margin}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class ProjectionHead:
    """Square linear transform applied to embeddings: g(z) = weight @ z."""

    weight: np.ndarray

    def __post_init__(self):
        weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        if weight.ndim != 2 or weight.shape[0] != weight.shape[1]:
            raise ValueError(f"projection weight must be square, got shape {weight.shape}")
        if not np.isfinite(weight).all():
            raise ValueError("projection weight contains non-finite values")
        object.__setattr__(self, "weight", weight)

    @classmethod
    def identity(cls, dim: int) -> "ProjectionHead":
        return cls(np.eye(dim))

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return rows @ self.weight.T


@dataclass(frozen=True)
class PairSet:
    """Index pairs into a token matrix: one positive and K negatives per class."""

    positives: tuple[tuple[int, int], ...]
    negatives: tuple[tuple[int, int], ...]


def build_pairs(support: SupportSet, n_ways: int, k_shots: int, pair_seed: int) -> PairSet:
    """Draw the pair set from the token-expanded support (plus K=1 extras).

    Per class: one anchor token chosen uniformly, its positive partner
    uniformly among the other same-class tokens, and ``k_shots`` negative
    partners uniformly without replacement among other-class tokens. All
    draws are deterministic in ``pair_seed``.
    """
    if n_ways < 2:
        raise ValueError(f"need at least 2 classes, got {n_ways}")
    if support.n_classes != n_ways:
        raise ValueError(f"support has {support.n_classes} classes, expected {n_ways}")
    rng = make_generator(pair_seed, "pairs")
    labels = support.labels
    positives = []
    negatives = []
    for c in range(n_ways):
        same = np.flatnonzero(labels == c)
        other = np.flatnonzero(labels != c)
        if same.size < 2:
            raise ValueError(
                f"class {c} has {same.size} support token(s); contrastive pairs "
                f"need at least 2 (sample an extra shot when K = 1)"
            )
        if other.size < k_shots:
            raise ValueError(
                f"class {c} has only {other.size} other-class tokens, need {k_shots}"
            )
        anchor = int(same[rng.integers(same.size)])
        partners = same[same != anchor]
        positive = int(partners[rng.integers(partners.size)])
        positives.append((anchor, positive))
        picks = rng.choice(other.size, size=k_shots, replace=False)
        negatives.extend((anchor, int(other[p])) for p in picks)
    return PairSet(tuple(positives), tuple(negatives))


def _pair_diffs(pairs: tuple[tuple[int, int], ...], rows: np.ndarray) -> np.ndarray:
    idx = np.asarray(pairs, dtype=np.int64)
    return rows[idx[:, 0]] - rows[idx[:, 1]]


def contrastive_loss(pairs: PairSet, embeddings: np.ndarray, head: ProjectionHead,
                     margin: float) -> float:
    """Margin contrastive loss of the projected embeddings (nonnegative)."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if not np.isfinite(embeddings).all():
        raise NumericError("contrastive loss input contains non-finite embeddings")
    projected = head.apply(embeddings)
    loss = 0.0
    if pairs.positives:
        loss += float(np.linalg.norm(_pair_diffs(pairs.positives, projected), axis=1).sum())
    if pairs.negatives:
        dist = np.linalg.norm(_pair_diffs(pairs.negatives, projected), axis=1)
        loss += float(np.maximum(0.0, margin - dist).sum())
    return loss


def contrastive_grad(pairs: PairSet, embeddings: np.ndarray, head: ProjectionHead,
                     margin: float) -> np.ndarray:
    """Exact gradient of :func:`contrastive_loss` in the projection weight.

    At the nondifferentiable points (a pair at distance zero, or a negative
    pair exactly at the margin) the term's subgradient is taken to be zero.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if not np.isfinite(embeddings).all():
        raise NumericError("contrastive gradient input contains non-finite embeddings")
    dim = head.weight.shape[0]
    grad = np.zeros((dim, dim))

    def accumulate(pair_list, sign):
        raw = _pair_diffs(pair_list, embeddings)        # v = z_i - z_j
        projected = raw @ head.weight.T                 # u = W v
        dist = np.linalg.norm(projected, axis=1)
        if sign < 0:
            active = (dist > 0.0) & (dist < margin)
        else:
            active = dist > 0.0
        if not active.any():
            return
        unit = projected[active] / dist[active, None]
        grad_part = unit.T @ raw[active]                # sum of (u/|u|) v^T
        if sign < 0:
            grad_part = -grad_part
        np.add(grad, grad_part, out=grad)

    if pairs.positives:
        accumulate(pairs.positives, +1)
    if pairs.negatives:
        accumulate(pairs.negatives, -1)
    return grad


def train_head(support: SupportSet, n_ways: int, k_shots: int,
               config: ContrastiveConfig) -> ProjectionHead:
    """Train the projection head on the support pair set with Adam.

    One full-batch Adam step per epoch, starting from the identity. The
    query set is never consulted; episodes train independently.
    """
    pairs = build_pairs(support, n_ways, k_shots, config.pair_seed)
    weight = np.eye(support.dim)
    first_moment = np.zeros_like(weight)
    second_moment = np.zeros_like(weight)
    for step in range(1, config.epochs + 1):
        grad = contrastive_grad(pairs, support.embeddings, ProjectionHead(weight), config.margin)
        first_moment = config.adam_beta1 * first_moment + (1 - config.adam_beta1) * grad
        second_moment = config.adam_beta2 * second_moment + (1 - config.adam_beta2) * grad * grad
        corrected_first = first_moment / (1 - config.adam_beta1 ** step)
        corrected_second = second_moment / (1 - config.adam_beta2 ** step)
        weight = weight - config.learning_rate * corrected_first / (
            np.sqrt(corrected_second) + config.adam_eps
        )
        if not np.isfinite(weight).all():
            raise NumericError("projection head diverged to non-finite values")
    return ProjectionHead(weight)
