import os
from pathlib import Path

import numpy as np
import pytest

from zampling import data


@pytest.fixture(scope="session")
def blobs():
    train = data.synthetic_blobs(60, 4, 12, separation=6.0, seed=3)
    test = data.synthetic_blobs(30, 4, 12, separation=6.0, seed=3, split="test")
    return train, test


@pytest.fixture(scope="session")
def mnist():
    directory = os.environ.get(data.DATA_DIR_ENV)
    if not directory or not (Path(directory) / "train-images-idx3-ubyte").exists():
        pytest.skip(f"MNIST not available; set {data.DATA_DIR_ENV}")
    return data.load_mnist(directory)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from ._report import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(RESULTS[key])
