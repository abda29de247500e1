"""Pure-numpy reference implementations of the hot kernels.

These define the semantics; the numba backend mirrors them loop-for-loop.
All arrays are float64 and C-contiguous.
"""

from __future__ import annotations

import numpy as np

# Armijo sufficient-decrease constant and backtracking limits.
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 60
STEP_GROWTH = 2.0
MAX_STEP = 1e8

STATUS_OK = 0
STATUS_NONFINITE = 1


def _loss_grad(weights: np.ndarray, features: np.ndarray, labels: np.ndarray,
               l2_lambda: float) -> tuple[float, np.ndarray]:
    n_rows = features.shape[0]
    scores = features @ weights.T
    shift = scores.max(axis=1, keepdims=True)
    exp_scores = np.exp(scores - shift)
    total = exp_scores.sum(axis=1, keepdims=True)
    log_prob = scores - shift - np.log(total)
    probs = exp_scores / total
    ce = -log_prob[np.arange(n_rows), labels].mean()
    loss = ce + 0.5 * l2_lambda * float((weights * weights).sum())
    probs[np.arange(n_rows), labels] -= 1.0
    grad = probs.T @ features / n_rows + l2_lambda * weights
    return loss, grad


def _loss_only(weights: np.ndarray, features: np.ndarray, labels: np.ndarray,
               l2_lambda: float) -> float:
    n_rows = features.shape[0]
    scores = features @ weights.T
    shift = scores.max(axis=1, keepdims=True)
    log_prob = scores - shift - np.log(np.exp(scores - shift).sum(axis=1, keepdims=True))
    ce = -log_prob[np.arange(n_rows), labels].mean()
    return ce + 0.5 * l2_lambda * float((weights * weights).sum())


def logreg_fit(features: np.ndarray, labels: np.ndarray, n_classes: int,
               l2_lambda: float, tol: float, max_iter: int):
    """Full-batch gradient descent with backtracking line search.

    Minimizes mean cross-entropy of ``softmax(weights @ x)`` plus
    ``l2_lambda/2 * ||weights||_F^2`` (no bias term), starting from zero
    weights. Stops when the gradient max-norm drops to ``tol`` or after
    ``max_iter`` accepted steps.

    Returns:
        (weights, iterations, grad_inf_norm, status)
    """
    weights = np.zeros((n_classes, features.shape[1]))
    loss, grad = _loss_grad(weights, features, labels, l2_lambda)
    grad_inf = float(np.abs(grad).max())
    step = 1.0
    iterations = 0
    while iterations < max_iter and grad_inf > tol:
        if not np.isfinite(loss):
            return weights, iterations, grad_inf, STATUS_NONFINITE
        grad_sq = float((grad * grad).sum())
        step = min(step * STEP_GROWTH, MAX_STEP)
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            candidate = weights - step * grad
            candidate_loss = _loss_only(candidate, features, labels, l2_lambda)
            if np.isfinite(candidate_loss) and candidate_loss <= loss - ARMIJO_C * step * grad_sq:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # Cannot make progress at any representable step: converged to
            # rounding level, which only happens below any practical tol.
            break
        weights = candidate
        loss, grad = _loss_grad(weights, features, labels, l2_lambda)
        grad_inf = float(np.abs(grad).max())
        iterations += 1
    if not np.isfinite(loss):
        return weights, iterations, grad_inf, STATUS_NONFINITE
    return weights, iterations, grad_inf, STATUS_OK


def pairwise_sqdist(queries: np.ndarray, references: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, shape (len(queries), len(references))."""
    q_sq = (queries * queries).sum(axis=1)[:, None]
    r_sq = (references * references).sum(axis=1)[None, :]
    dist = q_sq + r_sq - 2.0 * (queries @ references.T)
    np.maximum(dist, 0.0, out=dist)
    return dist
