import h5py
import numpy as np
import pytest

from bplcz.data import make_synthetic


def write_container(path, sen1, sen2, label):
    with h5py.File(path, "w") as f:
        if sen1 is not None:
            f.create_dataset("sen1", data=sen1)
        if sen2 is not None:
            f.create_dataset("sen2", data=sen2)
        if label is not None:
            f.create_dataset("label", data=label)
    return path


@pytest.fixture
def tiny_container(tmp_path):
    rng = np.random.default_rng(0)
    n = 3
    label = np.zeros((n, 17))
    label[0, 0] = label[1, 5] = label[2, 16] = 1
    return write_container(tmp_path / "tiny.h5", rng.normal(size=(n, 32, 32, 8)),
                           rng.normal(size=(n, 32, 32, 10)), label)


@pytest.fixture(scope="session")
def synthetic_small():
    return make_synthetic(17, 4, 0.1, 3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
