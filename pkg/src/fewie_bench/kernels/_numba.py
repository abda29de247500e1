"""Numba-compiled kernels, mirroring the numpy backend semantics.

Loops are written out so the whole optimization runs without Python
overhead or temporaries; ``fastmath`` stays off to keep results
deterministic and close to the numpy path.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from fewie_bench.kernels._numpy import (
    ARMIJO_C,
    MAX_BACKTRACKS,
    MAX_STEP,
    STATUS_NONFINITE,
    STATUS_OK,
    STEP_GROWTH,
)


@njit(cache=True, nogil=True)
def _loss_grad(weights, features, labels, l2_lambda, grad_out):
    n_rows, dim = features.shape
    n_classes = weights.shape[0]
    probs_row = np.empty(n_classes)
    for c in range(n_classes):
        for j in range(dim):
            grad_out[c, j] = l2_lambda * weights[c, j]
    loss = 0.0
    for c in range(n_classes):
        for j in range(dim):
            loss += 0.5 * l2_lambda * weights[c, j] * weights[c, j]
    for m in range(n_rows):
        shift = -np.inf
        for c in range(n_classes):
            score = 0.0
            for j in range(dim):
                score += weights[c, j] * features[m, j]
            probs_row[c] = score
            if score > shift:
                shift = score
        total = 0.0
        for c in range(n_classes):
            probs_row[c] = np.exp(probs_row[c] - shift)
            total += probs_row[c]
        label = labels[m]
        loss += -(np.log(probs_row[label] / total)) / n_rows
        for c in range(n_classes):
            residual = probs_row[c] / total - (1.0 if c == label else 0.0)
            scale = residual / n_rows
            for j in range(dim):
                grad_out[c, j] += scale * features[m, j]
    return loss


@njit(cache=True, nogil=True)
def _loss_only(weights, features, labels, l2_lambda):
    n_rows, dim = features.shape
    n_classes = weights.shape[0]
    scores_row = np.empty(n_classes)
    loss = 0.0
    for c in range(n_classes):
        for j in range(dim):
            loss += 0.5 * l2_lambda * weights[c, j] * weights[c, j]
    for m in range(n_rows):
        shift = -np.inf
        for c in range(n_classes):
            score = 0.0
            for j in range(dim):
                score += weights[c, j] * features[m, j]
            scores_row[c] = score
            if score > shift:
                shift = score
        total = 0.0
        for c in range(n_classes):
            total += np.exp(scores_row[c] - shift)
        label = labels[m]
        loss += -(scores_row[label] - shift - np.log(total)) / n_rows
    return loss


@njit(cache=True, nogil=True)
def logreg_fit(features, labels, n_classes, l2_lambda, tol, max_iter):
    dim = features.shape[1]
    weights = np.zeros((n_classes, dim))
    grad = np.empty((n_classes, dim))
    loss = _loss_grad(weights, features, labels, l2_lambda, grad)
    grad_inf = np.abs(grad).max()
    step = 1.0
    iterations = 0
    candidate = np.empty((n_classes, dim))
    while iterations < max_iter and grad_inf > tol:
        if not np.isfinite(loss):
            return weights, iterations, grad_inf, STATUS_NONFINITE
        grad_sq = 0.0
        for c in range(n_classes):
            for j in range(dim):
                grad_sq += grad[c, j] * grad[c, j]
        step = min(step * STEP_GROWTH, MAX_STEP)
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            for c in range(n_classes):
                for j in range(dim):
                    candidate[c, j] = weights[c, j] - step * grad[c, j]
            candidate_loss = _loss_only(candidate, features, labels, l2_lambda)
            if np.isfinite(candidate_loss) and candidate_loss <= loss - ARMIJO_C * step * grad_sq:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        weights, candidate = candidate, weights
        loss = _loss_grad(weights, features, labels, l2_lambda, grad)
        grad_inf = np.abs(grad).max()
        iterations += 1
    if not np.isfinite(loss):
        return weights, iterations, grad_inf, STATUS_NONFINITE
    return weights, iterations, grad_inf, STATUS_OK


@njit(cache=True, nogil=True)
def pairwise_sqdist(queries, references):
    n_q, dim = queries.shape
    n_r = references.shape[0]
    out = np.empty((n_q, n_r))
    for i in range(n_q):
        for k in range(n_r):
            acc = 0.0
            for j in range(dim):
                diff = queries[i, j] - references[k, j]
                acc += diff * diff
            out[i, k] = acc
    return out
