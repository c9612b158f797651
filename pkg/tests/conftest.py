import numpy as np
import pytest

from stokesdarcy.forms import HydraulicTensor, PhysicalParams, assemble_operators, build_spaces
from stokesdarcy.mesh import build_structured


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def tensor():
    return HydraulicTensor(1.0, 1e-2, 0.0)


@pytest.fixture(scope="session")
def make_ops(params, tensor):
    cache = {}

    def make(n=2, pressure="q1", tensor_=None, params_=None, **kw):
        key = (n, pressure, tensor_, params_, tuple(sorted(kw.items())))
        if key not in cache:
            spaces = build_spaces(build_structured(n=n), pressure, **kw)
            cache[key] = assemble_operators(spaces, params_ or params, tensor_ or tensor)
        return cache[key]

    return make
