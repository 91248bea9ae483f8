import numpy as np
import pytest

from carnot_gmt.algebra import builtin
from carnot_gmt.metric import make_norm

BUILTIN_GROUPS = ["abelian:2", "abelian:3", "heisenberg:1", "heisenberg:2", "engel", "free_step2:3"]


@pytest.fixture
def heisenberg():
    return builtin("heisenberg:1")


@pytest.fixture
def heisenberg2():
    return builtin("heisenberg:2")


@pytest.fixture
def engel():
    return builtin("engel")


@pytest.fixture
def abelian3():
    return builtin("abelian:3")


@pytest.fixture
def abelian2():
    return builtin("abelian:2")


@pytest.fixture
def h1_norm(heisenberg):
    return make_norm(heisenberg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path


@pytest.fixture(params=BUILTIN_GROUPS)
def any_group(request):
    return builtin(request.param)
