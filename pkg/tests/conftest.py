import math
from pathlib import Path

import numpy as np
import pytest

from astra.rnnt import LogProbGrid
from astra.tensor import Rng

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
LN_HALF = math.log(0.5)


@pytest.fixture
def rng():
    return Rng(20240915)


@pytest.fixture
def uniform_t2u1():
    return LogProbGrid(np.full((2, 2), LN_HALF), np.full((2, 1), LN_HALF))


@pytest.fixture
def fixtures_dir():
    return FIXTURES
