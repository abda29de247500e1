import pytest

from fewie_bench import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compilation happens once here so timed tests measure the
    # algorithms, not compiler startup.
    kernels.warm_up()
