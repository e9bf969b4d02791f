import pytest

from kplab.ensemble import DisorderModel
from kplab.prufer import CriticalEnergy


@pytest.fixture(scope="session")
def uniform_model() -> DisorderModel:
    return DisorderModel.uniform(0.5, 1.5)


@pytest.fixture(scope="session")
def two_point_model() -> DisorderModel:
    return DisorderModel.two_point(1.0, 0.5, 3.0)


@pytest.fixture(scope="session")
def ce1(uniform_model) -> CriticalEnergy:
    return CriticalEnergy.for_model(1, uniform_model)
