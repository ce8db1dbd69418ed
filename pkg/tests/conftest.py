"""
Shared fixtures for the test suite.
"""

import numpy as np
import pytest

from src.data.datagen import GeneratorConfig, generate_corpus
from src.models.training import train
from tests.toys import tiny_ae_config, tiny_pipeline_dict


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run the long end-to-end tests on the full synthetic corpus")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus():
    """40 series of length 64, four of them NOK."""
    dataset, _ = generate_corpus(GeneratorConfig(length=64, size=40, nok_rate=0.1, master_seed=7))
    return dataset


@pytest.fixture(scope="session")
def trained(small_corpus):
    """(model, report) of a two-epoch autoencoder on the small corpus."""
    return train(small_corpus, tiny_ae_config(epochs=2))


@pytest.fixture(scope="session")
def tiny_model(trained):
    return trained[0]


@pytest.fixture
def pipeline_dict(tmp_path):
    return tiny_pipeline_dict(str(tmp_path / "output"), str(tmp_path / "logs"))
