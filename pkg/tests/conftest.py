import numpy as np
import pytest
from hypothesis import settings

from dasha_pp.data import make_synthetic
from dasha_pp.losses import SoftmaxNonconvexReg
from dasha_pp.problem import Problem

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def toy():
    """Three nodes, eight samples each, ten features."""
    dataset, shards = make_synthetic(3, 8, 10, seed=1)
    return Problem(dataset, shards)


@pytest.fixture
def noisy_toy():
    dataset, shards = make_synthetic(3, 8, 10, seed=1)
    return Problem(dataset, shards, noise_sigma=0.3)


@pytest.fixture
def softmax_toy():
    dataset, shards = make_synthetic(3, 8, 6, seed=2)
    return Problem(dataset, shards, loss=SoftmaxNonconvexReg(0.01))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  [{number:>2}] {title}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
