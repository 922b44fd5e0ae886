import sys

import numpy as np
import pytest

from fylab.data import find_mnist, load_mnist_idx

MNIST_HELP = ("MNIST training files not found. Build them with `python scripts/build_mnist_idx.py` "
              "or point FYLAB_MNIST_DIR at a directory holding train-images-idx3-ubyte(.gz) and "
              "train-labels-idx1-ubyte(.gz).")


@pytest.fixture(scope="session")
def mnist_paths():
    return find_mnist()


@pytest.fixture(scope="session")
def mnist(mnist_paths):
    if mnist_paths is None:
        pytest.skip(MNIST_HELP)
    return load_mnist_idx(*mnist_paths)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for criterion in sorted(results):
            terminalreporter.write_line(results[criterion])
