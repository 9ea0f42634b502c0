import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthfaces import synthetic_pair


@pytest.fixture(scope="session")
def face_pair():
    pair, bases = synthetic_pair(seed=42)
    return pair, bases
