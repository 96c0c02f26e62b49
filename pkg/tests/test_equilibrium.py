import numpy as np
import pytest

from src import config
from src.equilibrium import (
    AllocationFn,
    EquilibriumStrategy,
    Mandate,
    StrategyUndefinedError,
    allocation_weight,
    bid_curve,
    bid_for_weight,
    equilibrium_bid,
    proposition_limit_sweep,
    stop_out_for_weight,
    symmetric_risk_limit,
    symmetric_stop_out,
    xi,
)
from src.market_model import MarketParams, ParameterError
from src.verification import ode_residual


class TestAllocationFn:

    def test_slope_must_be_positive(self):
        with pytest.raises(ParameterError):
            AllocationFn(slope = 0.0)

    def test_share_must_stay_below_one(self):
        with pytest.raises(ParameterError):
            AllocationFn(slope = 2.0, c_lo = 0.1, c_hi = 0.6)

    def test_through_points(self, worked_allocation):
        assert worked_allocation(0.1) == pytest.approx(0.1, abs = 1e-15)
        assert worked_allocation(0.169) == pytest.approx(0.148, abs = 1e-15)

    def test_rho_of_identity(self, identity):
        np.testing.assert_allclose(identity.rho([0.1, 0.2]), [10.0, 5.0])

    def test_mandate_ordering(self, identity):
        with pytest.raises(ParameterError):
            Mandate(c_ell = 0.2, c_bar = 0.3, c_star = 0.1, allocation = identity)


class TestXi:

    def test_condition_holds_on_aggregate_reading(self, rescaled_params):
        factor = xi(rescaled_params)
        assert factor.value == pytest.approx(0.85)
        assert factor.bound == pytest.approx(1.0)
        assert factor.holds

    def test_condition_fails_on_raw_reading(self, raw_params):
        factor = xi(raw_params)
        assert factor.value == pytest.approx(8.5)
        assert not factor.holds

    def test_undefined_without_spread(self, rescaled_params):
        with pytest.raises(ParameterError):
            xi(rescaled_params.replace(Theta = 0.04))


class TestEquilibriumBid:

    def test_worked_example_bid(self, raw_params, worked_allocation):
        point = equilibrium_bid(config.WORKED_EXAMPLE["c_star"], 0.1, worked_allocation, raw_params)
        assert point.bid == pytest.approx(0.0713831, abs = 1e-6)
        assert abs(point.bid - config.WORKED_EXAMPLE["reported_bid"]) <= config.WORKED_EXAMPLE["bid_tol"]
        assert not point.xi_condition_holds

    def test_worked_example_residual_supply(self, raw_params, worked_allocation):
        point = equilibrium_bid(0.169, 0.1, worked_allocation, raw_params)
        assert point.residual_supply == pytest.approx(0.286169, abs = 1e-5)
        assert abs(point.residual_supply - 0.28) <= 0.01

    def test_bid_at_infimum_budget_is_lambda(self, rescaled_params, identity):
        assert equilibrium_bid(0.1, 0.1, identity, rescaled_params).bid == pytest.approx(0.1, abs = 1e-15)

    def test_unit_weight_gives_lambda(self, rescaled_params):
        assert bid_for_weight(1.0, rescaled_params) == pytest.approx(rescaled_params.lambda_min)

    def test_budget_below_infimum(self, rescaled_params, identity):
        with pytest.raises(ParameterError):
            equilibrium_bid(0.05, 0.1, identity, rescaled_params)

    def test_stop_out_matches_engine_form(self, rescaled_params, identity):
        point = equilibrium_bid(0.15, 0.1, identity, rescaled_params)
        assert point.stop_out == pytest.approx(0.08 - 0.034 * 10 * point.bid, abs = 1e-15)
        assert point.weight == pytest.approx(2.0 / 3.0)

    def test_weight_needs_positive_allocation(self):
        with pytest.raises(ParameterError):
            allocation_weight(0.15, 0.1, AllocationFn(slope = 1.0, intercept = -0.12))


class TestStopOut:

    def test_symmetric_risk_limit(self, rescaled_params):
        assert symmetric_risk_limit(0.1, rescaled_params) == pytest.approx(0.046, abs = 1e-15)

    def test_risk_limit_below_risk_free_rate(self, raw_params):
        with pytest.raises(ParameterError, match = "risk-free"):
            symmetric_risk_limit(0.1, raw_params)

    def test_stop_out_identity_on_grid(self):
        """Symmetric stop-out equals Theta - theta*n*b* over a (theta, lambda, weight) grid inside the xi condition."""
        base = MarketParams(Theta = 0.08, theta = 0.01, n = 10, exp_rs = 0.04, r_f = 0.0, r_bar = 0.06, lambda_min = 0.1)
        for theta in np.linspace(0.001, 0.019, 10):
            for lam in np.linspace(0.05, 0.2, 10):
                p = base.replace(theta = float(theta), lambda_min = float(lam))
                assert xi(p).holds
                for weight in np.linspace(0.05, 1.0, 10):
                    bid = bid_for_weight(float(weight), p)
                    engine_form = p.Theta - p.theta * p.n * bid
                    assert abs(stop_out_for_weight(float(weight), p) - engine_form) < 1e-12

    def test_symmetric_stop_out_at_infimum_budget(self, rescaled_params, identity):
        assert symmetric_stop_out(0.1, 0.1, identity, rescaled_params) == pytest.approx(0.046, abs = 1e-12)


class TestComparativeStatics:

    def test_limit_sweep_converges_to_lambda(self, rescaled_params, identity):
        c_ells = np.linspace(0.05, 0.15, 50)
        bids = proposition_limit_sweep(c_ells, 0.15, identity, rescaled_params)
        distance = np.abs(np.array(bids) - rescaled_params.lambda_min)
        assert np.all(np.diff(distance) < 0)
        assert bids[-1] == pytest.approx(rescaled_params.lambda_min, abs = 1e-15)

    def test_limit_sweep_must_increase(self, rescaled_params, identity):
        with pytest.raises(ParameterError):
            proposition_limit_sweep([0.1, 0.08], 0.15, identity, rescaled_params)

    def test_limit_sweep_stays_below_c_star(self, rescaled_params, identity):
        with pytest.raises(ParameterError):
            proposition_limit_sweep([0.1, 0.16], 0.15, identity, rescaled_params)

    def test_bid_decreases_in_market_power(self, rescaled_params, identity):
        bids = [equilibrium_bid(0.15, 0.1, identity, rescaled_params.replace(theta = float(t))).bid
                for t in np.linspace(0.01, 0.08, 50)]
        assert np.all(np.diff(bids) < 0)


class TestStrategy:

    def test_curve_matches_pointwise_bid(self, rescaled_params, identity):
        grid = np.linspace(0.1, 0.2, 11)
        strategy = EquilibriumStrategy(0.1, identity, rescaled_params)
        np.testing.assert_allclose(bid_curve(grid, 0.1, identity, rescaled_params), [strategy(c) for c in grid], atol = 1e-15)

    def test_undefined_below_infimum(self, rescaled_params, identity):
        with pytest.raises(StrategyUndefinedError):
            EquilibriumStrategy(0.1, identity, rescaled_params)(0.09)

    def test_perturbation_shifts_every_bid(self, rescaled_params, identity):
        strategy = EquilibriumStrategy(0.1, identity, rescaled_params)
        assert strategy.perturbed(0.01)(0.15) == pytest.approx(strategy(0.15) + 0.01)


class TestOde:

    @pytest.fixture(params = [0, 1, 2])
    def random_params(self, request):
        rng = np.random.default_rng(request.param)
        return MarketParams(Theta = 0.08, theta = float(rng.uniform(0.005, 0.03)), n = int(rng.integers(5, 15)),
                            exp_rs = 0.04, r_f = 0.0, r_bar = 0.06, lambda_min = float(rng.uniform(0.02, 0.08)))

    def test_analytic_derivative(self, random_params, identity):
        grid = np.linspace(0.1, 0.2, config.ODE_GRID)
        check = ode_residual(grid, 0.1, identity, random_params, method = "analytic")
        assert check.max_residual < 1e-12
        assert check.ok

    def test_finite_difference_derivative(self, random_params, identity):
        grid = np.linspace(0.1, 0.2, config.ODE_GRID)
        check = ode_residual(grid, 0.1, identity, random_params, method = "finite-difference", h = 1e-5)
        assert check.max_residual < 1e-6

    def test_affine_allocation(self, raw_params, worked_allocation):
        grid = np.linspace(0.1, 0.2, config.ODE_GRID)
        assert ode_residual(grid, 0.1, worked_allocation, raw_params).max_residual < 1e-12
