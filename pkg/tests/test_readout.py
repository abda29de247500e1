import numpy as np
import pytest
from scipy.special import log_softmax, softmax

from fewie_bench.readout import (
    SupportSet,
    fit_logreg,
    fit_readout,
    predict_batch,
    predict_readout,
)

# ---------------------------------------------------------------------------
# Independent oracles. These deliberately share no code with the package:
# the logistic-regression oracle is plain fixed-step gradient descent on the
# same convex objective, run to a much tighter gradient norm; the neighbor
# oracles are exhaustive python-loop scans.
# ---------------------------------------------------------------------------


def oracle_logreg_weights(features, labels, n_classes, l2_lambda, tol=1e-10):
    n_rows = features.shape[0]
    one_hot = np.zeros((n_rows, n_classes))
    one_hot[np.arange(n_rows), labels] = 1.0
    smoothness = l2_lambda + np.linalg.norm(features, ord=2) ** 2 / (2 * n_rows)
    step = 1.0 / smoothness
    weights = np.zeros((n_classes, features.shape[1]))
    for _ in range(2_000_000):
        probs = softmax(features @ weights.T, axis=1)
        grad = (probs - one_hot).T @ features / n_rows + l2_lambda * weights
        if np.abs(grad).max() <= tol:
            break
        weights = weights - step * grad
    return weights


def oracle_logreg_objective(weights, features, labels, l2_lambda):
    log_probs = log_softmax(features @ weights.T, axis=1)
    ce = -log_probs[np.arange(len(labels)), labels].mean()
    return ce + 0.5 * l2_lambda * np.sum(weights ** 2)


def oracle_nearest_token(query, references, reference_labels, n_classes):
    best_class, best_dist = -1, np.inf
    for row, label in zip(references, reference_labels):
        dist = float(np.sqrt(np.sum((query - row) ** 2)))
        if dist < best_dist or (dist == best_dist and label < best_class):
            best_class, best_dist = int(label), dist
    return best_class


def oracle_nearest_centroid(query, references, reference_labels, n_classes):
    best_class, best_dist = -1, np.inf
    for c in range(n_classes):
        rows = references[reference_labels == c]
        centroid = rows.sum(axis=0) / len(rows)
        dist = float(np.sqrt(np.sum((query - centroid) ** 2)))
        if dist < best_dist:
            best_class, best_dist = c, dist
    return best_class


def random_support(rng, n_classes, dim, per_class, normalize=True):
    rows = rng.standard_normal((n_classes * per_class, dim))
    if normalize:
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    labels = np.repeat(np.arange(n_classes), per_class)
    return SupportSet(rows, labels, n_classes)


class TestFitLogreg:
    def test_separable_two_class(self):
        support = SupportSet(np.eye(2), np.array([0, 1]), 2)
        model = fit_logreg(support, l2_lambda=0.01)
        assert predict_readout(model, np.array([1.0, 0.0]))[0] == 0
        assert predict_readout(model, np.array([0.0, 1.0]))[0] == 1

    def test_probabilities_normalized(self):
        support = SupportSet(np.eye(2), np.array([0, 1]), 2)
        model = fit_logreg(support, l2_lambda=0.01)
        _, probs = predict_readout(model, np.array([1.0, 0.0]))
        assert probs[0] > 0.5
        assert abs(probs.sum() - 1.0) < 1e-12

    def test_fixed_instance_matches_oracle(self):
        rng = np.random.default_rng(2024)
        support = random_support(rng, n_classes=3, dim=4, per_class=3)
        model = fit_logreg(support, l2_lambda=0.5)
        oracle_weights = oracle_logreg_weights(
            support.embeddings, support.labels, 3, 0.5)
        queries = rng.standard_normal((25, 4))
        predicted, probs = predict_batch(model, queries)
        oracle_probs = softmax(queries @ oracle_weights.T, axis=1)
        assert np.array_equal(predicted, oracle_probs.argmax(axis=1))
        assert np.abs(probs - oracle_probs).max() < 1e-4

    def test_gradient_norm_below_tol_at_solution(self):
        rng = np.random.default_rng(5)
        support = random_support(rng, n_classes=4, dim=6, per_class=4)
        tol = 1e-6
        model = fit_logreg(support, l2_lambda=0.2, tol=tol)
        probs = softmax(support.embeddings @ model.weights.T, axis=1)
        one_hot = np.zeros_like(probs)
        one_hot[np.arange(support.size), support.labels] = 1.0
        grad = ((probs - one_hot).T @ support.embeddings / support.size
                + 0.2 * model.weights)
        assert np.abs(grad).max() <= tol

    def test_convexity_witness_random_perturbations(self):
        rng = np.random.default_rng(6)
        support = random_support(rng, n_classes=3, dim=5, per_class=4)
        model = fit_logreg(support, l2_lambda=0.3)
        best = oracle_logreg_objective(model.weights, support.embeddings,
                                       support.labels, 0.3)
        for _ in range(50):
            delta = rng.standard_normal(model.weights.shape)
            delta *= 0.1 / np.linalg.norm(delta)
            perturbed = oracle_logreg_objective(model.weights + delta,
                                                support.embeddings, support.labels, 0.3)
            assert perturbed >= best - 1e-12

    def test_analytic_gradient_matches_finite_differences(self):
        from fewie_bench.kernels import _numpy as backend

        rng = np.random.default_rng(7)
        for _ in range(10):
            n_classes = int(rng.integers(2, 5))
            dim = int(rng.integers(2, 6))
            rows = rng.standard_normal((n_classes * 2, dim))
            labels = np.repeat(np.arange(n_classes), 2)
            weights = rng.standard_normal((n_classes, dim)) * 0.5
            lam = float(rng.uniform(0.01, 1.0))
            _, grad = backend._loss_grad(weights, rows, labels, lam)
            step = 1e-5
            numeric = np.zeros_like(grad)
            for c in range(n_classes):
                for j in range(dim):
                    plus = weights.copy()
                    plus[c, j] += step
                    minus = weights.copy()
                    minus[c, j] -= step
                    numeric[c, j] = (
                        backend._loss_only(plus, rows, labels, lam)
                        - backend._loss_only(minus, rows, labels, lam)
                    ) / (2 * step)
            rel = np.linalg.norm(numeric - grad) / max(np.linalg.norm(grad), 1e-12)
            assert rel < 1e-6

    def test_permutation_changes_nothing_observable(self):
        rng = np.random.default_rng(8)
        support = random_support(rng, n_classes=3, dim=6, per_class=5)
        order = rng.permutation(support.size)
        shuffled = SupportSet(support.embeddings[order], support.labels[order], 3)
        queries = rng.standard_normal((30, 6))
        base, _ = predict_batch(fit_logreg(support, l2_lambda=0.2), queries)
        perm, _ = predict_batch(fit_logreg(shuffled, l2_lambda=0.2), queries)
        assert np.array_equal(base, perm)

    def test_refit_is_bitwise_deterministic(self):
        rng = np.random.default_rng(9)
        support = random_support(rng, n_classes=3, dim=6, per_class=5)
        first = fit_logreg(support)
        second = fit_logreg(support)
        assert np.array_equal(first.weights, second.weights)

    def test_validation_errors(self):
        support = SupportSet(np.eye(2), np.array([0, 1]), 2)
        with pytest.raises(ValueError):
            fit_logreg(support, l2_lambda=-1.0)
        with pytest.raises(ValueError):
            fit_logreg(support, tol=0.0)
        with pytest.raises(ValueError):
            fit_logreg(support, max_iter=0)

    def test_missing_class_rejected(self):
        with pytest.raises(ValueError, match="missing classes"):
            SupportSet(np.eye(3), np.array([0, 0, 1]), 3)


class TestPredictNeighbors:
    def test_exact_support_row_has_zero_distance(self):
        rng = np.random.default_rng(10)
        support = random_support(rng, n_classes=3, dim=4, per_class=2)
        model = fit_readout("nn", support)
        query = support.embeddings[4]  # a class-2 row
        predicted, scores = predict_readout(model, query)
        assert predicted == 2
        assert scores[2] == 0.0

    def test_centroid_arithmetic(self):
        rows = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        support = SupportSet(rows, np.array([0, 0, 1, 1]), 2)
        model = fit_readout("nc", support)
        assert np.array_equal(model.centroids[0], [0.5, 0.5])
        assert predict_readout(model, np.array([0.5, 0.5]))[0] == 0

    def test_nn_matches_exhaustive_scan(self):
        rng = np.random.default_rng(11)
        support = random_support(rng, n_classes=5, dim=8, per_class=10)  # 50 tokens
        model = fit_readout("nn", support)
        queries = rng.standard_normal((20, 8))
        predicted, _ = predict_batch(model, queries)
        for q, predicted_class in zip(queries, predicted):
            assert predicted_class == oracle_nearest_token(
                q, support.embeddings, support.labels, 5)

    def test_nn_equivalence_up_to_200_rows(self):
        rng = np.random.default_rng(12)
        for per_class in (1, 13, 40):
            support = random_support(rng, n_classes=5, dim=6, per_class=per_class)
            model = fit_readout("nn", support)
            queries = rng.standard_normal((15, 6))
            predicted, _ = predict_batch(model, queries)
            for q, predicted_class in zip(queries, predicted):
                assert predicted_class == oracle_nearest_token(
                    q, support.embeddings, support.labels, 5)

    def test_nc_matches_exhaustive_scan(self):
        rng = np.random.default_rng(13)
        support = random_support(rng, n_classes=4, dim=5, per_class=6)
        model = fit_readout("nc", support)
        queries = rng.standard_normal((20, 5))
        predicted, _ = predict_batch(model, queries)
        for q, predicted_class in zip(queries, predicted):
            assert predicted_class == oracle_nearest_centroid(
                q, support.embeddings, support.labels, 4)

    def test_nc_equals_nn_with_one_token_per_class(self):
        rng = np.random.default_rng(14)
        support = random_support(rng, n_classes=5, dim=7, per_class=1)
        nn_model = fit_readout("nn", support)
        nc_model = fit_readout("nc", support)
        queries = rng.standard_normal((50, 7))
        nn_predicted, _ = predict_batch(nn_model, queries)
        nc_predicted, _ = predict_batch(nc_model, queries)
        assert np.array_equal(nn_predicted, nc_predicted)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(15)
        support = random_support(rng, n_classes=3, dim=4, per_class=5)
        order = rng.permutation(support.size)
        shuffled = SupportSet(support.embeddings[order], support.labels[order], 3)
        queries = rng.standard_normal((25, 4))
        for kind in ("nn", "nc"):
            base, _ = predict_batch(fit_readout(kind, support), queries)
            perm, _ = predict_batch(fit_readout(kind, shuffled), queries)
            assert np.array_equal(base, perm)

    def test_tie_breaks_to_lowest_class(self):
        rows = np.array([[1.0, 0.0], [-1.0, 0.0]])
        support = SupportSet(rows, np.array([0, 1]), 2)
        model = fit_readout("nn", support)
        predicted, scores = predict_readout(model, np.array([0.0, 0.0]))
        assert scores[0] == scores[1]
        assert predicted == 0


class TestFitReadoutDispatch:
    def test_nc_single_class_single_row(self):
        vector = np.array([[0.25, -0.5, 1.0]])
        model = fit_readout("nc", SupportSet(vector, np.array([0]), 1))
        assert np.array_equal(model.centroids, vector)

    def test_nn_keeps_references_verbatim(self):
        rng = np.random.default_rng(16)
        support = random_support(rng, n_classes=2, dim=3, per_class=2)
        model = fit_readout("nn", support)
        assert np.array_equal(model.references, support.embeddings)
        assert np.array_equal(model.reference_labels, support.labels)

    def test_lr_separates_symmetric_instance(self):
        support = SupportSet(np.eye(2), np.array([0, 1]), 2)
        model = fit_readout("lr", support)
        e1 = np.array([1.0, 0.0])
        assert model.weights[0] @ e1 > model.weights[1] @ e1

    def test_unknown_kind(self):
        support = SupportSet(np.eye(2), np.array([0, 1]), 2)
        with pytest.raises(ValueError, match="unknown readout kind"):
            fit_readout("svm", support)


class TestScaleRobustness:
    def test_prenormalization_scaling_is_invisible(self):
        from fewie_bench.encoders import EmbeddingMatrix, l2_normalize

        rng = np.random.default_rng(17)
        raw = rng.standard_normal((12, 5))
        scaled = 37.5 * raw
        a = l2_normalize(EmbeddingMatrix("s", raw)).vectors
        b = l2_normalize(EmbeddingMatrix("s", scaled)).vectors
        assert np.abs(a - b).max() < 1e-12
        labels = np.repeat(np.arange(3), 4)
        queries = rng.standard_normal((10, 5))
        base, _ = predict_batch(fit_logreg(SupportSet(a, labels, 3)), queries)
        scaled_pred, _ = predict_batch(fit_logreg(SupportSet(b, labels, 3)), queries)
        assert np.array_equal(base, scaled_pred)


class TestPredictValidation:
    def test_dimension_mismatch(self):
        support = SupportSet(np.eye(2), np.array([0, 1]), 2)
        model = fit_readout("nn", support)
        with pytest.raises(ValueError):
            predict_readout(model, np.zeros(3))

    def test_query_must_be_row(self):
        support = SupportSet(np.eye(2), np.array([0, 1]), 2)
        model = fit_readout("nn", support)
        with pytest.raises(ValueError):
            predict_readout(model, np.zeros((1, 2)))
