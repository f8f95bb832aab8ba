import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fedsim.tasks import SyntheticTCConfig, TextClassificationTask, generate_tc_dataset  # noqa: E402


@pytest.fixture(scope="session")
def tc_small():
    """A 2000/400 synthetic text classification split with its features."""
    train, test = generate_tc_dataset(SyntheticTCConfig(n_train=2000, n_test=400, seed=0))
    task = TextClassificationTask(20, feature_dim=64)
    return train, test, task, task.featurize(train), task.featurize(test)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        name, ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {name}  [{detail}]")
