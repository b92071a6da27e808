import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

REPO_ROOT = Path(__file__).parent.parent
REFERENCE_WEIGHTS = REPO_ROOT / "weights" / "reference.csew"


@pytest.fixture(scope="session")
def reference_weights_path():
    assert REFERENCE_WEIGHTS.exists(), "committed reference weight file missing"
    return REFERENCE_WEIGHTS


@pytest.fixture(scope="session")
def model(reference_weights_path):
    from cse.weights import load_model

    return load_model(reference_weights_path)
