import numpy as np
import pytest
from scipy.integrate import trapezoid

from src.equilibrium import symmetric_risk_limit
from src.market_model import (
    BidPoint,
    BidderType,
    Marginal,
    ParameterError,
    TypeDistribution,
    draw_types,
    infimum_bid_for_risk_limit,
    is_admissible,
    risk_limit_corners,
    sample_types,
    validate_params,
)


class TestValidateParams:

    def test_valid_params_have_no_violations(self, rescaled_params):
        assert validate_params(rescaled_params) == []

    def test_too_few_bidders(self, rescaled_params):
        violations = validate_params(rescaled_params.replace(n = 2))
        assert len(violations) == 1
        assert "n ≥ 3" in violations[0]

    def test_theta_must_exceed_expected_secondary_yield(self, rescaled_params):
        violations = validate_params(rescaled_params.replace(Theta = 0.04))
        assert any("Theta > exp_rs" in v for v in violations)

    def test_every_violation_is_reported(self, rescaled_params):
        violations = validate_params(rescaled_params.replace(theta = 0.0, lambda_min = 1.5, n = 1))
        assert len(violations) == 3


class TestInfimumBid:

    def test_aggregate_reading_gives_lambda(self, rescaled_params):
        assert infimum_bid_for_risk_limit(0.046, rescaled_params) == pytest.approx(0.1, abs = 1e-12)

    def test_raw_reading_gives_a_tenth_of_lambda(self, raw_params):
        assert infimum_bid_for_risk_limit(0.046, raw_params) == pytest.approx(0.01, abs = 1e-12)

    @pytest.mark.parametrize("r_ell", [0.08, 0.09, -0.01])
    def test_risk_limit_outside_range(self, rescaled_params, r_ell):
        with pytest.raises(ParameterError):
            infimum_bid_for_risk_limit(r_ell, rescaled_params)

    def test_infeasible_mandate(self, rescaled_params):
        # lambda = 0.08 / (0.0034 * 3) > 1
        with pytest.raises(ParameterError, match = "infeasible"):
            infimum_bid_for_risk_limit(0.0, rescaled_params.replace(theta = 0.0034, n = 3))

    def test_strictly_decreasing_in_risk_limit(self, rescaled_params):
        grid = np.linspace(0.0, 0.08, 200, endpoint = False)
        lams = [infimum_bid_for_risk_limit(float(r), rescaled_params) for r in grid]
        assert np.all(np.diff(lams) < 0)

    @pytest.mark.parametrize("r_f", [0.0, 0.01, 0.028052172713633045])
    def test_symmetric_risk_limit_inverts_infimum_bid(self, rescaled_params, r_f):
        p = rescaled_params.replace(r_f = r_f)
        for r in np.linspace(r_f, p.Theta, 200, endpoint = False):
            lam = infimum_bid_for_risk_limit(float(r), p)
            assert abs(symmetric_risk_limit(lam, p) - r) <= 1e-14

    def test_risk_free_boundary_clamps_to_risk_free_rate(self, rescaled_params):
        p = rescaled_params.replace(r_f = 0.028052172713633045)
        lam = infimum_bid_for_risk_limit(p.r_f, p)
        assert symmetric_risk_limit(lam, p) >= p.r_f


class TestAdmissibility:

    @pytest.fixture
    def bidder(self):
        return BidderType(c = 0.15, r_ell = 0.046)

    def test_bid_inside_region(self, bidder, rescaled_params):
        assert is_admissible(BidPoint(0.12, 0.04), bidder, rescaled_params)

    def test_quantity_below_infimum_bid(self, bidder, rescaled_params):
        assert not is_admissible(BidPoint(0.05, 0.04), bidder, rescaled_params)

    def test_quantity_above_budget(self, bidder, rescaled_params):
        assert not is_admissible(BidPoint(0.16, 0.04), bidder, rescaled_params)

    def test_yield_above_risk_limit(self, bidder, rescaled_params):
        assert not is_admissible(BidPoint(0.12, 0.05), bidder, rescaled_params)

    def test_boundary_within_tolerance(self, bidder, rescaled_params):
        assert is_admissible(BidPoint(0.1 - 1e-13, 0.046), bidder, rescaled_params)

    def test_infeasible_mandate_is_not_admissible(self, rescaled_params):
        assert not is_admissible(BidPoint(0.12, 0.04), BidderType(c = 0.15, r_ell = 0.09), rescaled_params)

    def test_corners(self, bidder, rescaled_params):
        corners = risk_limit_corners(bidder, rescaled_params)
        assert corners["L"][0] == pytest.approx(0.1, abs = 1e-12)
        assert corners["L"][1] == 0.046
        assert corners["M"] == (0.15, 0.0)


class TestDomainTypes:

    @pytest.mark.parametrize("c, r_ell", [(1.5, 0.04), (-0.1, 0.04), (0.5, -0.01), (float("nan"), 0.04)])
    def test_bidder_type_bounds(self, c, r_ell):
        with pytest.raises(ParameterError):
            BidderType(c = c, r_ell = r_ell)

    @pytest.mark.parametrize("quantity, yield_req", [(1.0, 0.04), (-0.1, 0.04), (0.5, float("inf"))])
    def test_bid_point_bounds(self, quantity, yield_req):
        with pytest.raises(ParameterError):
            BidPoint(quantity, yield_req)

    def test_budget_support_inside_unit_interval(self):
        with pytest.raises(ParameterError, match = "budget support"):
            TypeDistribution("independent-uniform", (0.5, 1.5), (0.04, 0.05))

    def test_unknown_distribution_kind(self):
        with pytest.raises(ParameterError):
            TypeDistribution("lognormal", (0.1, 0.2), (0.04, 0.05))

    def test_wrong_parameter_count(self):
        with pytest.raises(ParameterError):
            Marginal("uniform", (0.1,))


class TestMarginals:

    def test_two_point_cdf_steps(self):
        marginal = Marginal("two-point", (0.2, 0.4, 0.3))
        np.testing.assert_allclose(marginal.cdf([0.1, 0.2, 0.39, 0.4, 0.5]), [0.0, 0.3, 0.3, 1.0, 1.0])

    def test_discrete_marginal_has_no_density(self):
        with pytest.raises(ParameterError):
            Marginal("point-mass", (0.2,)).pdf(0.2)

    def test_uniform_density_integrates_to_one(self):
        marginal = Marginal("uniform", (0.1, 0.2))
        x = np.linspace(0.1, 0.2, 10001)
        assert trapezoid(marginal.pdf(x), x) == pytest.approx(1.0, rel = 1e-9)

    def test_truncated_normal_samples_stay_in_support(self):
        marginal = Marginal("truncated-normal", (0.15, 0.05, 0.1, 0.2))
        samples = marginal.sample(np.random.default_rng(0), 5000)
        assert samples.min() >= 0.1 and samples.max() <= 0.2


class TestSampling:

    def test_deterministic_per_seed(self, uniform_dist):
        assert sample_types(uniform_dist, 10, 42) == sample_types(uniform_dist, 10, 42)

    def test_seed_changes_the_draw(self, uniform_dist):
        assert sample_types(uniform_dist, 10, 1) != sample_types(uniform_dist, 10, 2)

    def test_types_lie_in_support_and_carry_provenance(self, uniform_dist):
        types = sample_types(uniform_dist, 10, 7)
        assert [t.index for t in types] == list(range(10))
        assert all(t.seed == 7 for t in types)
        assert all(0.1 <= t.c <= 0.2 and 0.04 <= t.r_ell <= 0.05 for t in types)

    def test_two_point_draws_only_atoms(self, two_point_dist):
        types = sample_types(two_point_dist, 50, 3)
        assert {t.c for t in types} <= {0.2, 0.4}
        assert {t.r_ell for t in types} <= {0.04, 0.05}

    def test_uniform_sampler_never_rejects(self, uniform_dist):
        _, rejection_rate = draw_types(uniform_dist, 10, 5)
        assert rejection_rate == 0.0

    def test_too_few_bidders(self, uniform_dist):
        with pytest.raises(ParameterError):
            sample_types(uniform_dist, 2, 1)
