"""Token-level scoring, aggregation, and paired significance tests.

Per episode the metric is micro-F1 pooled over the positive classes: counts
are summed across classes (the ``O`` class never enters the query token
set), then F1 is computed from the pooled totals. A macro variant (mean of
per-class F1) is available for offline re-scoring of persisted predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

DEFAULT_ALPHA = 0.05

# Two-sided normal 97.5% quantile, for the aggregate confidence interval.
_Z_95 = 1.96


@dataclass(frozen=True)
class EpisodeScore:
    """Pooled true/false positive/negative counts and F1 for one episode."""

    episode_index: int
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class RunResult:
    """All episode scores of one (scenario, encoder, readout) run."""

    scenario: tuple[int, int, int]
    encoder_label: str
    readout_kind: str
    scores: tuple[EpisodeScore, ...]
    mean_f1: float
    std_f1: float

    @classmethod
    def from_scores(cls, scenario: tuple[int, int, int], encoder_label: str,
                    readout_kind: str, scores: list[EpisodeScore]) -> "RunResult":
        mean, std, _ = aggregate(scores)
        return cls(scenario, encoder_label, readout_kind, tuple(scores), mean, std)


def _pooled_counts(predictions: np.ndarray, gold: np.ndarray,
                   n_ways: int) -> tuple[int, int, int]:
    tp = fp = fn = 0
    for c in range(n_ways):
        predicted_c = predictions == c
        gold_c = gold == c
        tp += int(np.count_nonzero(predicted_c & gold_c))
        fp += int(np.count_nonzero(predicted_c & ~gold_c))
        fn += int(np.count_nonzero(~predicted_c & gold_c))
    return tp, fp, fn


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator > 0 else 0.0


def episode_micro_f1(predictions, gold, n_ways: int, episode_index: int = 0) -> EpisodeScore:
    """Micro-F1 over positive classes from per-token predictions and gold."""
    predictions = np.asarray(predictions, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if predictions.shape != gold.shape or predictions.ndim != 1:
        raise ValueError(
            f"predictions and gold must be equal-length 1-D, "
            f"got {predictions.shape} and {gold.shape}"
        )
    if predictions.size == 0:
        raise ValueError("cannot score an empty query set")
    if gold.min() < 0 or gold.max() >= n_ways:
        raise ValueError(f"gold labels outside [0, {n_ways})")
    tp, fp, fn = _pooled_counts(predictions, gold, n_ways)
    return EpisodeScore(episode_index, _f1_from_counts(tp, fp, fn), tp, fp, fn)


def episode_macro_f1(predictions, gold, n_ways: int) -> float:
    """Unweighted mean of per-class F1 (offline re-scoring variant)."""
    predictions = np.asarray(predictions, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if predictions.shape != gold.shape or predictions.ndim != 1:
        raise ValueError("predictions and gold must be equal-length 1-D")
    per_class = []
    for c in range(n_ways):
        tp = int(np.count_nonzero((predictions == c) & (gold == c)))
        fp = int(np.count_nonzero((predictions == c) & (gold != c)))
        fn = int(np.count_nonzero((predictions != c) & (gold == c)))
        per_class.append(_f1_from_counts(tp, fp, fn))
    return float(np.mean(per_class))


def aggregate(scores: list[EpisodeScore] | tuple[EpisodeScore, ...]) -> tuple[float, float, float]:
    """Mean, sample standard deviation, and 95% CI half-width of episode F1."""
    if not scores:
        raise ValueError("cannot aggregate an empty score list")
    values = np.array([s.f1 for s in scores], dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    half_width = _Z_95 * std / math.sqrt(values.size)
    return mean, std, half_width


def significance(scores_a, scores_b, alpha: float = DEFAULT_ALPHA,
                 method: str = "ttest") -> tuple[float, bool]:
    """Paired two-sided test on per-episode F1 differences.

    Both runs must be paired by episode index, i.e. sampled from identical
    episode manifests. Returns ``(p_value, p_value < alpha)``. When every
    difference is exactly zero the p-value is 1; a constant nonzero shift
    has zero variance and yields p = 0.

    ``method`` is ``"ttest"`` (default) or ``"wilcoxon"`` (signed-rank).
    """
    if method not in ("ttest", "wilcoxon"):
        raise ValueError(f"unknown method {method!r}, expected 'ttest' or 'wilcoxon'")
    if len(scores_a) != len(scores_b):
        raise ValueError(f"runs have different lengths: {len(scores_a)} vs {len(scores_b)}")
    if len(scores_a) < 2:
        raise ValueError("significance test needs at least 2 paired episodes")
    for a, b in zip(scores_a, scores_b):
        if a.episode_index != b.episode_index:
            raise ValueError(
                f"unpaired runs: episode {a.episode_index} vs {b.episode_index}"
            )
    diffs = np.array([a.f1 - b.f1 for a, b in zip(scores_a, scores_b)], dtype=np.float64)
    if np.all(diffs == 0.0):
        return 1.0, False

    if method == "wilcoxon":
        nonzero = diffs[diffs != 0.0]
        p_value = float(stats.wilcoxon(nonzero).pvalue)
    else:
        n = diffs.size
        std = diffs.std(ddof=1)
        if std == 0.0:
            p_value = 0.0  # constant nonzero shift
        else:
            t_stat = diffs.mean() / (std / math.sqrt(n))
            p_value = float(2.0 * stats.t.sf(abs(t_stat), df=n - 1))
    return p_value, bool(p_value < alpha)
