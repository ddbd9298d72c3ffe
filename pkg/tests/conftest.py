"""Shared helpers: random simplex draws and small hand-built stores."""

import numpy as np
import pytest

from ensdiag.store import PredictionStore


def random_simplex(rng, n, c):
    """n rows drawn uniformly from the (c-1)-simplex."""
    return rng.dirichlet(np.ones(c), size=n)


def member_stack(rng, m, n, c):
    """m member probability matrices over the same n points."""
    return np.stack([random_simplex(rng, n, c) for _ in range(m)])


def build_store(rng, datasets=("ind", "ood"), models=("m0", "m1", "m2", "m3"),
                n=60, c=5):
    store = PredictionStore()
    for ds in datasets:
        labels = rng.integers(0, c, size=n)
        store.register_dataset(ds, labels, c)
        for mid in models:
            store.add_prediction(mid, ds, random_simplex(rng, n, c))
    if len(datasets) >= 2:
        store.pairs.append((datasets[0], datasets[1]))
    return store


# Populated by tests/test_acceptance.py; one line per criterion so the
# pass/fail table shows up in the terminal summary of a plain pytest run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_store(rng):
    return build_store(rng)
