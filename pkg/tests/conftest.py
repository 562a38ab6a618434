import numpy as np
import pytest

from fluorocal.cost import Hyperparams
from fluorocal.pipeline import SplitSpec, split, train
from fluorocal.synth import GenConfig, generate_world

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line for the acceptance summary."""

    def record(number, name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}): {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_world():
    """Default synthetic world: field, dataset, truths and the 500/50/50 split."""
    config = GenConfig()
    field, dataset, truths = generate_world(config)
    train_set, validation, test = split(dataset, SplitSpec(500, 50))
    return {
        "config": config,
        "field": field,
        "dataset": dataset,
        "truths": truths,
        "train": train_set,
        "validation": validation,
        "test": test,
    }


@pytest.fixture(scope="session")
def default_fit(default_world):
    return train(default_world["train"], Hyperparams())


@pytest.fixture(scope="session")
def small_world():
    """Few-shot world for quick training tests."""
    config = GenConfig(shots=200, seed=3)
    field, dataset, truths = generate_world(config)
    return config, field, dataset, truths
