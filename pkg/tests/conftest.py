import numpy as np
import pytest

from mptp import PotentialModel
from mptp.bifurcation import continue_family
from mptp.solver import SolveConfig, minimize_free_T


@pytest.fixture(scope="session")
def quad():
    return PotentialModel.quadratic(1)


@pytest.fixture(scope="session")
def dwell():
    return PotentialModel.double_well_1d()


@pytest.fixture(scope="session")
def quad_free_solve(quad):
    """Free-T quadratic oracle solve at N=400 (acceptance criterion data)."""
    cfg = SolveConfig(N=400, tau=2.0)
    return minimize_free_T(quad, 0.5, 0.0, [1.0], [2.0], cfg)


@pytest.fixture(scope="session")
def dwell_fixed_family(dwell):
    """Double-well fixed-T=4 sweep family (criterion 3 / 4 data)."""
    cfg = SolveConfig(N=200, tau=4.0)
    return continue_family(dwell, np.linspace(0.05, 0.5, 20), "fixed-T", 0.0,
                           4.0, cfg, [-1.0], [1.0])


@pytest.fixture(scope="session")
def quad_free_family(quad):
    """Quadratic free-T family on the regular sigma range."""
    cfg = SolveConfig(N=200, tau=2.5)
    return continue_family(quad, np.linspace(0.3, 0.48, 10), "free-T", 0.0,
                           2.5, cfg, [1.0], [2.0])
