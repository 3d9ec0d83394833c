import sys

import numpy as np
import pytest

from sceneforge.catalog import assign_pools, corpus_stats, scan
from sceneforge.sampler import SamplerConfig, corpus_weights, plan_dataset
from sceneforge.synthetic import published_catalog, write_fixture_tree


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("assets")
    config = write_fixture_tree(root, seed=7)
    return root, config


@pytest.fixture(scope="session")
def fixture_catalog(fixture_tree):
    root, config = fixture_tree
    return scan(root, config)


@pytest.fixture(scope="session")
def fixture_manifest(fixture_catalog):
    pools = assign_pools(fixture_catalog, seed=0)["train"]
    weights = corpus_weights(corpus_stats(fixture_catalog))
    return plan_dataset(0.004, pools, SamplerConfig(), dataset_seed=3, weights=weights)


@pytest.fixture(scope="session")
def published():
    return published_catalog(seed=0)


@pytest.fixture(scope="session")
def published_pools(published):
    return assign_pools(published, seed=0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
