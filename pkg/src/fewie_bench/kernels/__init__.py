"""Hot numeric kernels with selectable backends.

Two implementations exist: numba-compiled loops (``_numba``) and pure numpy
(``_numpy``). The backend is chosen once at import time from the
``FEWIE_BENCH_BACKEND`` environment variable:

* ``numba`` - require the numba backend, fail if numba is unavailable
* ``numpy`` - force the pure-numpy fallback
* unset    - numba when importable, numpy otherwise

Both backends implement the same algorithms with the same operation
structure; results agree to floating-point resolution (summation order
differs), and every caller treats them as interchangeable.
``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os

from fewie_bench.kernels import _numpy

_ENV_VAR = "FEWIE_BENCH_BACKEND"


def _load_numba_backend():
    from fewie_bench.kernels import _numba

    return _numba


def _select():
    requested = os.environ.get(_ENV_VAR, "").strip().lower()
    if requested == "numpy":
        return "numpy", _numpy
    if requested == "numba":
        return "numba", _load_numba_backend()
    if requested:
        raise ValueError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {requested!r}")
    try:
        return "numba", _load_numba_backend()
    except ImportError:
        return "numpy", _numpy


_BACKEND_NAME, _BACKEND = _select()

logreg_fit = _BACKEND.logreg_fit
pairwise_sqdist = _BACKEND.pairwise_sqdist

STATUS_OK = _numpy.STATUS_OK
STATUS_NONFINITE = _numpy.STATUS_NONFINITE


def active_backend() -> str:
    """Name of the backend selected at import time."""
    return _BACKEND_NAME


def warm_up() -> None:
    """Trigger JIT compilation so later calls run at full speed."""
    import numpy as np

    features = np.eye(2, 3)
    labels = np.array([0, 1], dtype=np.int64)
    logreg_fit(features, labels, 2, 1.0, 1e-3, 10)
    pairwise_sqdist(features, features)
