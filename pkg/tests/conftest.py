import numpy as np
import pytest

from mpcmci import (
    make_double_integrator,
    make_unicycle,
    double_integrator_safety,
    unicycle_safety,
)


@pytest.fixture(scope="session")
def unicycle():
    return make_unicycle()


@pytest.fixture(scope="session")
def unicycle_cbf(unicycle):
    return unicycle_safety(unicycle)


@pytest.fixture(scope="session")
def dblint():
    # the exact-comparison plant: no velocity box so the published witness applies
    return make_double_integrator(velocity_bound=False)


@pytest.fixture(scope="session")
def dblint_cbf(dblint):
    return double_integrator_safety(dblint, margin=0.2)


@pytest.fixture(scope="session")
def dblint_boxed():
    return make_double_integrator(velocity_bound=True)
