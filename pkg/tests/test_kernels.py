import subprocess
import sys

import numpy as np
import pytest

from fewie_bench import kernels
from fewie_bench.kernels import _numpy

numba_backend = pytest.importorskip("fewie_bench.kernels._numba")


def random_instance(seed, n_classes=4, dim=6, per_class=5):
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n_classes * per_class, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    labels = np.repeat(np.arange(n_classes), per_class).astype(np.int64)
    return rows, labels, n_classes


class TestBackendParity:
    def test_logreg_fit_agrees(self):
        for seed in range(5):
            rows, labels, n_classes = random_instance(seed)
            args = (rows, labels, n_classes, 0.3, 1e-8, 2000)
            w_np, _, g_np, s_np = _numpy.logreg_fit(*args)
            w_nb, _, g_nb, s_nb = numba_backend.logreg_fit(*args)
            assert s_np == s_nb == _numpy.STATUS_OK
            assert g_np <= 1e-8 and g_nb <= 1e-8
            # Both converge to the same strongly-convex optimum.
            assert np.abs(w_np - w_nb).max() < 1e-7

    def test_pairwise_sqdist_agrees(self):
        rng = np.random.default_rng(11)
        queries = rng.standard_normal((13, 7))
        references = rng.standard_normal((31, 7))
        d_np = _numpy.pairwise_sqdist(queries, references)
        d_nb = numba_backend.pairwise_sqdist(queries, references)
        assert np.abs(d_np - d_nb).max() < 1e-12

    def test_loss_grad_agrees(self):
        rows, labels, n_classes = random_instance(3)
        rng = np.random.default_rng(4)
        weights = rng.standard_normal((n_classes, rows.shape[1]))
        loss_np, grad_np = _numpy._loss_grad(weights, rows, labels, 0.5)
        grad_nb = np.empty_like(weights)
        loss_nb = numba_backend._loss_grad(weights, rows, labels, 0.5, grad_nb)
        assert abs(loss_np - loss_nb) < 1e-12
        assert np.abs(grad_np - grad_nb).max() < 1e-12


class TestStatusCodes:
    def test_nonfinite_input_flagged(self):
        rows = np.array([[np.nan, 0.0], [0.0, 1.0]])
        labels = np.array([0, 1], dtype=np.int64)
        _, _, _, status = kernels.logreg_fit(rows, labels, 2, 1.0, 1e-6, 10)
        assert status == kernels.STATUS_NONFINITE


class TestBackendSelection:
    def test_active_backend_reports(self):
        assert kernels.active_backend() in ("numba", "numpy")

    @pytest.mark.parametrize("requested", ["numpy", "numba"])
    def test_env_flag_selects_backend(self, requested):
        code = ("import fewie_bench.kernels as k; "
                "print(k.active_backend())")
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"PATH": "/usr/bin:/bin", "FEWIE_BENCH_BACKEND": requested},
            capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == requested

    def test_invalid_flag_rejected(self):
        code = "import fewie_bench.kernels"
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"PATH": "/usr/bin:/bin", "FEWIE_BENCH_BACKEND": "cuda"},
            capture_output=True, text=True,
        )
        assert out.returncode != 0
        assert "FEWIE_BENCH_BACKEND" in out.stderr
