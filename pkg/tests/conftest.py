import pytest

from src.equilibrium import AllocationFn, Mandate
from src.market_model import MarketParams, TypeDistribution


@pytest.fixture
def rescaled_params():
    """Worked example with theta read as the aggregate sensitivity: xi = 0.85 < 1/(lambda*n) = 1."""
    return MarketParams(Theta = 0.08, theta = 0.034, n = 10, exp_rs = 0.04, r_f = 0.0, r_bar = 0.06, lambda_min = 0.1)


@pytest.fixture
def raw_params():
    return MarketParams(Theta = 0.08, theta = 0.34, n = 10, exp_rs = 0.04, r_f = 0.0, r_bar = 0.06, lambda_min = 0.1)


@pytest.fixture
def two_point_params():
    """xi = 0.75 < 1/(lambda*n) = 1."""
    return MarketParams(Theta = 0.08, theta = 0.03, n = 4, exp_rs = 0.04, r_f = 0.0, r_bar = 0.06, lambda_min = 0.25)


@pytest.fixture
def uniform_dist():
    return TypeDistribution("independent-uniform", (0.1, 0.2), (0.04, 0.05))


@pytest.fixture
def two_point_dist():
    return TypeDistribution("two-point", (0.2, 0.4, 0.3), (0.04, 0.05, 0.5))


@pytest.fixture
def identity():
    return AllocationFn.identity()


@pytest.fixture
def rescaled_mandate(identity):
    return Mandate(c_ell = 0.1, c_bar = 0.2, c_star = 0.15, allocation = identity)


@pytest.fixture
def worked_allocation():
    return AllocationFn.through_points(0.1, 0.1, 0.169, 0.148)


@pytest.fixture
def status_events():
    events = []
    return events, events.append
