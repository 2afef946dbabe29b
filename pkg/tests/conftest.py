import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def four_by_one():
    from knotmatch.graph import MatchGraph
    return MatchGraph([0, 1, 2, 3])
