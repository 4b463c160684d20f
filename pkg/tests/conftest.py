import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gfflab.green import GreenTable


@pytest.fixture(scope="session")
def gt3():
    return GreenTable(d=3)
