import pytest
import torch


@pytest.fixture(scope="session", autouse=True)
def float64_default():
    torch.set_default_dtype(torch.float64)
    yield


@pytest.fixture()
def seeded():
    torch.manual_seed(0)
    yield
