import pathlib

import numpy as np
import pytest

from ecct.codes import load_code

REPO_ROOT = pathlib.Path(__file__).resolve().parents[1]
CODES_DIR = REPO_ROOT / "codes"


@pytest.fixture(scope="session")
def hamming():
    return load_code("hamming_7_4")


@pytest.fixture(scope="session")
def repetition():
    return load_code("repetition_2_1")


@pytest.fixture(scope="session")
def polar_64_32():
    return load_code(str(CODES_DIR / "polar_64_32.alist"))


@pytest.fixture()
def rng():
    return np.random.default_rng(1357)
