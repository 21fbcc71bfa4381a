import numpy as np
import pytest

from burgersfb.mesh import build_unit_square_mesh, tag_boundary

RIGHT_SIDE = ((1.0, 0.0), (1.0, 1.0))


@pytest.fixture(scope="session")
def unit4():
    return build_unit_square_mesh(4)


@pytest.fixture(scope="session")
def unit8():
    return build_unit_square_mesh(8)


@pytest.fixture(scope="session")
def mixed8():
    # right side Dirichlet, rest flux controlled (the Example 2 layout)
    return tag_boundary(build_unit_square_mesh(8), RIGHT_SIDE)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
