import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from novelty_eval import synthgen, vae  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_dataset():
    return synthgen.generate_dataset(synthgen.DatasetSpec(n_per_class=100, seed=1))


@pytest.fixture(scope="session")
def trained_vae(small_dataset):
    crops, _, _ = small_dataset
    return vae.train(crops, vae.TrainConfig(epochs=200, seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
