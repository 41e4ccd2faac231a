import numpy as np
import pytest

from workload_forge.mock import DEFAULT_PROFILE, generate_mock_table


@pytest.fixture(scope="session")
def mock_table_3k():
    return generate_mock_table(DEFAULT_PROFILE, 3000, 101)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
