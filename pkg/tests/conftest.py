import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tcsim.scenario import load_bundled


@pytest.fixture(scope="session")
def tiny_scenario():
    return load_bundled("tiny")


@pytest.fixture(scope="session")
def single_od_scenario():
    return load_bundled("single_od_a10")


@pytest.fixture(scope="session")
def multi_od_scenario():
    return load_bundled("multi_od_a10")
