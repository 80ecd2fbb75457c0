import numpy as np
import pytest

from normsol.continuation import ContinuationConfig, auto_grid, continue_homotopy
from normsol.ground import solve_omega0
from normsol.radial import make_grid
from normsol.system import SystemParams

# Grid-free shooting oracle (tests/oracles/omega0_shooting.py), frozen.
OMEGA0_ORACLE = {
    (3, 3.0): (4.337387679977195, 18.897251302544962),
    (2, 5.0): (2.00028994399588, 3.9834474652218956),
    (4, 2.5): (11.87904602148395, 53.21025720906724),
}

COOP = dict(N=3, p=3.0, mu=[1.0, 1.0], r=[1.0, 1.0], lam=0.1, alpha=2.5, beta=0.4)
COMP = dict(N=3, p=4.0, mu=[1.0, 1.0], r=[1.0, 1.0], lam=-0.05, alpha=2.0, beta=1.6)


@pytest.fixture(scope="session")
def omega0():
    cache = {}

    def get(N, p, R=25.0, M=4001):
        key = (N, float(p), R, M)
        if key not in cache:
            cache[key] = solve_omega0(N, p, 1.0, make_grid(N, R, M))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def coop_params():
    return SystemParams.build(**COOP)


@pytest.fixture(scope="session")
def comp_params():
    return SystemParams.build(**COMP)


@pytest.fixture(scope="session")
def homotopy_runs():
    cache = {}

    def get(which, M=2001):
        key = (which, M)
        if key not in cache:
            params = SystemParams.build(**(COOP if which == "coop" else COMP))
            grid = auto_grid(params, M=M)
            cache[key] = (params, grid) + continue_homotopy(params, grid, ContinuationConfig())
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
