import numpy as np
import pytest
from hypothesis import settings

from poisonforge.dataset import Dataset, PoisonSet, one_hot
from poisonforge.synthetic import make_schema

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def random_instance(rng, n, m, counts=(), q=0):
    """Random feasible (train, poison) pair with uniform features and responses."""
    schema = make_schema(m, counts)

    def codes(k):
        return np.stack([rng.integers(0, c, size=k) for c in counts], axis=1) if counts else np.zeros((k, 0), int)

    train = Dataset(schema, rng.uniform(size=(n, m)), one_hot(codes(n), schema), rng.uniform(size=n))
    poison = PoisonSet(schema, rng.uniform(size=(q, m)), one_hot(codes(q), schema), rng.integers(0, 2, size=q))
    return train, poison


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> PASS/FAIL/SKIP line, filled by the acceptance tests
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
