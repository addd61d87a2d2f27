import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from camel.corpus import generate_corpus
from camel.device import get_device
from camel.features import fit_pipeline
from camel.harness import EvalConfig
from camel.search import build_frontier

settings.register_profile("camel", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("camel")


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(3, 30)


@pytest.fixture(scope="session")
def pipeline():
    return fit_pipeline(generate_corpus(11, 120, prefix="feat").pages, out_dim=16)


@pytest.fixture(scope="session")
def xiaomi():
    return get_device("xiaomi9")


@pytest.fixture(scope="session")
def frontier(xiaomi):
    return build_frontier(xiaomi, generate_corpus(1, 20, prefix="feat").pages, EvalConfig().speeds)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
