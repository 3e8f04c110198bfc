from pathlib import Path

import pytest

from interpcert.metrics import ErrorEstimate, certify

DATA = Path(__file__).parent / "data"
MNIST_IMAGES = DATA / "mnist5k-images-idx3-ubyte.gz"
MNIST_LABELS = DATA / "mnist5k-labels-idx1-ubyte.gz"
SPECS = Path(__file__).parent.parent / "specs"


def err(value, n=100, loss="zero_one"):
    return ErrorEstimate(value, n, loss)


def cert(delta, gamma, name="p", seed=None, robustness="identity", loss="zero_one"):
    """Certificate with the given delta/gamma, built from consistent errors."""
    base_T = err(0.5, loss=loss)
    new_T = err(0.5 * delta, loss=loss)
    c = certify(base_T, err(0.5, loss=loss), new_T, err(0.5 * delta, loss=loss),
                procedure_id=name, robustness_id=robustness, seed=seed)
    return type(c)(delta, gamma, c.e_base_T, c.e_new_T, c.e_base_R, c.e_new_R,
                   name, c.target_model_id, robustness, seed)


@pytest.fixture(scope="session")
def mnist():
    from interpcert.data import load_idx
    return load_idx(MNIST_IMAGES, MNIST_LABELS)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
