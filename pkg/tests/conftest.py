import pytest

import hamlaw.utilities.data_models as models
import hamlaw.utilities.hypergraph as hypergraph
from hamlaw.configs.config import Settings


@pytest.fixture
def settings() -> Settings:
    return Settings()


@pytest.fixture
def tight_params() -> models.Params:
    """3-uniform tight cycles on 7 vertices at p = 1/2"""
    return models.Params(n=7, r=3, ell=2, p=0.5)


@pytest.fixture
def loose_params() -> models.Params:
    """4-uniform 2-overlapping cycles on 8 vertices"""
    return models.Params(n=8, r=4, ell=2, p=0.5)


@pytest.fixture
def complete_5() -> models.Hypergraph:
    return hypergraph.complete_hypergraph(5, 3)


@pytest.fixture
def seed() -> models.Seed:
    return models.Seed(root=20240917, stream=0)
