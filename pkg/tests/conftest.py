import numpy as np
import pytest

from biharm.geometry import TorusGeometry
from biharm.minimizer import SolverOptions
from biharm.problem import ProblemData


@pytest.fixture(scope="session")
def geom64():
    return TorusGeometry(6, 1, 64)


@pytest.fixture(scope="session")
def geom128():
    return TorusGeometry(6, 1, 128)


@pytest.fixture(scope="session")
def geom2d():
    return TorusGeometry(7, 2, 32)


@pytest.fixture(scope="session")
def bundled64(geom64):
    """Bundled example coefficients on the fast grid."""
    return ProblemData.from_expressions(geom64, "0.2", "-1", "cos(2*pi*x1) - 0.25")


@pytest.fixture(scope="session")
def bundled128(geom128):
    return ProblemData.from_expressions(geom128, "0.2", "-1", "cos(2*pi*x1) - 0.25")


@pytest.fixture(scope="session")
def toy64(geom64):
    """Small-scale two-solution landscape: q = 4 keeps everything O(1)."""
    return ProblemData.from_expressions(geom64, "0.2", "-1", "10*cos(2*pi*x1) - 1")


@pytest.fixture(scope="session")
def opts():
    return SolverOptions(seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
