import math

import numpy as np
import pandas as pd
import pytest

from src.equilibrium import Mandate
from src.experiments import (
    MonteCarloCampaign,
    SweepSpec,
    replicate_seed,
    run_campaign,
    run_sweep,
    summarize_campaign,
)
from src.market_model import ParameterError, TypeDistribution, sample_types


@pytest.fixture
def symmetric_dist():
    """Every bidder at the infimum budget with the symmetric risk limit."""
    return TypeDistribution("point-mass", (0.1,), (0.046,))


class TestReplicateSeeds:

    def test_deterministic_and_distinct(self):
        assert replicate_seed(1, 5) == replicate_seed(1, 5)
        assert len({replicate_seed(1, i) for i in range(100)}) == 100

    def test_fits_signed_64_bit(self):
        assert all(0 <= replicate_seed(s, i) < 2 ** 63 for s in range(3) for i in range(50))


class TestCampaign:

    def test_symmetric_equilibrium_clears_at_risk_limit(self, symmetric_dist, rescaled_params, rescaled_mandate):
        result = run_campaign(symmetric_dist, "equilibrium", rescaled_params, replicates = 25, seed = 1,
                              mandate = rescaled_mandate)
        assert len(result.frame) == 25
        np.testing.assert_allclose(result.frame["stop_out"], 0.046, atol = 1e-12)
        assert result.summary["issuance_rate"] == 1.0
        assert result.summary["flagged"] == 0

    def test_fixed_strategy_defaults_to_lambda(self, symmetric_dist, rescaled_params):
        result = run_campaign(symmetric_dist, "fixed", rescaled_params, replicates = 5, seed = 1)
        np.testing.assert_allclose(result.frame["aggregate_demand"], 1.0)
        assert result.summary["issuance_rate"] == 1.0

    def test_under_subscribed_market_never_issues(self, rescaled_params):
        dist = TypeDistribution("independent-uniform", (0.05, 0.1), (0.04, 0.05))
        result = run_campaign(dist, "truthful-budget", rescaled_params.replace(n = 3), replicates = 50, seed = 2)
        assert result.summary["issuance_rate"] == 0.0
        assert (result.frame["stop_out"] == 0.0).all()

    def test_truthful_issuance_rate_matches_budget_sum(self, rescaled_params):
        dist = TypeDistribution("independent-uniform", (0.05, 0.15), (0.04, 0.05))
        replicates = 10_000
        result = run_campaign(dist, "truthful-budget", rescaled_params, replicates = replicates, seed = 5, workers = 4)

        # same per-replicate seeds, summed without the engine
        covered = [math.fsum(t.c for t in sample_types(dist, 10, replicate_seed(5, i))) >= 1.0 for i in range(replicates)]
        assert result.summary["issuance_rate"] == np.mean(covered)

        # independent draw of the budget sum
        sums = np.random.default_rng(99).uniform(0.05, 0.15, (replicates, 10)).sum(axis = 1)
        assert result.summary["issuance_rate"] == pytest.approx(np.mean(sums >= 1.0), abs = 0.03)

    def test_equilibrium_flags_budgets_below_infimum(self, rescaled_params, rescaled_mandate):
        dist = TypeDistribution("independent-uniform", (0.05, 0.2), (0.04, 0.05))
        result = run_campaign(dist, "equilibrium", rescaled_params, replicates = 40, seed = 3, mandate = rescaled_mandate)
        flagged = result.frame[result.frame["flag"] != ""]
        assert len(result.frame) == 40
        assert result.summary["flagged"] == len(flagged) > 0
        assert flagged["stop_out"].isna().all()
        assert not flagged["issued"].any()

    def test_deterministic_and_worker_invariant(self, uniform_dist, rescaled_params, rescaled_mandate):
        runs = [run_campaign(uniform_dist, "equilibrium", rescaled_params, replicates = 200, seed = 8,
                             mandate = rescaled_mandate, workers = workers) for workers in (1, 1, 4)]
        pd.testing.assert_frame_equal(runs[0].frame, runs[1].frame)
        pd.testing.assert_frame_equal(runs[0].frame, runs[2].frame)
        assert runs[0].summary == runs[2].summary

    def test_summary_recomputes_from_rows(self, uniform_dist, rescaled_params, rescaled_mandate):
        result = run_campaign(uniform_dist, "equilibrium", rescaled_params, replicates = 100, seed = 4,
                              mandate = rescaled_mandate)
        assert summarize_campaign(result.frame) == result.summary
        assert {"q05", "q25", "q50", "q75", "q95", "mean_issued_stop_out"} <= set(result.summary)

    def test_unknown_strategy(self, uniform_dist, rescaled_params):
        with pytest.raises(ParameterError):
            run_campaign(uniform_dist, "shade", rescaled_params, replicates = 1, seed = 1)

    def test_equilibrium_needs_mandate(self, uniform_dist, rescaled_params):
        with pytest.raises(ParameterError):
            MonteCarloCampaign.bids_for_types(sample_types(uniform_dist, 10, 1), "equilibrium", rescaled_params)

    def test_needs_a_replicate(self):
        with pytest.raises(ParameterError):
            MonteCarloCampaign(replicates = 0)

    def test_progress_events(self, symmetric_dist, rescaled_params, status_events):
        events, callback = status_events
        MonteCarloCampaign(replicates = 20, seed = 1).run_campaign(symmetric_dist, "fixed", rescaled_params,
                                                                   status_cb = callback)
        progress = [e for e in events if e["type"] == "progress"]
        assert progress[-1]["done"] == 20
        assert events[0]["type"] == "start" and events[-1]["type"] == "done"


class TestSweep:

    def test_theta_sweep_bids_decrease(self, rescaled_params, rescaled_mandate):
        spec = SweepSpec(axis = "theta", values = np.linspace(0.01, 0.08, 50), fixed = rescaled_params,
                         mandate = rescaled_mandate)
        table = run_sweep(spec)
        assert len(table.frame) == 50
        assert np.all(np.diff(table.frame["bid"]) < 0)
        assert table.monotonicity["bid_trend"] == "decreasing"
        assert table.monotonicity["matches_expected"]
        assert table.frame["flags"].iloc[0] == ""
        assert "xi-condition-violated" in table.frame["flags"].iloc[-1]

    def test_c_ell_sweep_converges_to_lambda(self, rescaled_params, rescaled_mandate):
        spec = SweepSpec(axis = "c_ell", values = np.linspace(0.05, 0.15, 50), fixed = rescaled_params,
                         mandate = rescaled_mandate)
        table = run_sweep(spec)
        assert table.frame["bid"].iloc[-1] == pytest.approx(0.1, abs = 1e-15)
        assert table.monotonicity["matches_expected"]
        assert table.monotonicity["limit_gap"] == pytest.approx(0.0, abs = 1e-15)

    def test_n_sweep_with_fixed_lambda_n_keeps_stop_out(self, rescaled_params, rescaled_mandate):
        spec = SweepSpec(axis = "n", values = [5, 8, 10, 16, 20], fixed = rescaled_params, mandate = rescaled_mandate,
                         hold_lambda_n = True)
        stop_outs = run_sweep(spec).frame["stop_out"].to_numpy()
        np.testing.assert_allclose(stop_outs, stop_outs[0], atol = 1e-12)

    def test_risk_limit_below_risk_free_rate_is_flagged(self, rescaled_params, rescaled_mandate):
        spec = SweepSpec(axis = "lambda", values = [0.1, 0.3], fixed = rescaled_params, mandate = rescaled_mandate)
        frame = run_sweep(spec).frame
        assert "risk-limit-below-rf" in frame["flags"].iloc[1]
        assert math.isnan(frame["stop_out"].iloc[1])
        assert not math.isnan(frame["stop_out"].iloc[0])

    def test_requested_quantities_only(self, rescaled_params, rescaled_mandate):
        spec = SweepSpec(axis = "exp_rs", values = [0.03, 0.04], fixed = rescaled_params, mandate = rescaled_mandate)
        frame = run_sweep(spec, derived = ("bid",)).frame
        assert frame["stop_out"].isna().all() and frame["xi"].isna().all()
        assert frame["bid"].notna().all()

    def test_empty_sweep(self, rescaled_params, rescaled_mandate):
        table = run_sweep(SweepSpec(axis = "theta", values = [], fixed = rescaled_params, mandate = rescaled_mandate))
        assert table.frame.empty
        assert list(table.frame.columns) == ["axis_value", "bid", "stop_out", "xi", "flags"]

    @pytest.mark.parametrize("axis, values", [("Theta", [0.1, 0.2]), ("theta", [0.01, 0.03, 0.02])])
    def test_invalid_spec(self, rescaled_params, rescaled_mandate, axis, values):
        with pytest.raises(ParameterError):
            SweepSpec(axis = axis, values = values, fixed = rescaled_params, mandate = rescaled_mandate)

    def test_unknown_derived_quantity(self, rescaled_params, rescaled_mandate):
        spec = SweepSpec(axis = "theta", values = [0.01], fixed = rescaled_params, mandate = rescaled_mandate)
        with pytest.raises(ParameterError):
            run_sweep(spec, derived = ("revenue",))

    @pytest.mark.parametrize("derived", [("stop_out",), ("xi", "stop_out")])
    def test_stop_out_past_c_star_is_flagged(self, rescaled_params, rescaled_mandate, derived):
        spec = SweepSpec(axis = "c_ell", values = [0.1, 0.16], fixed = rescaled_params, mandate = rescaled_mandate)
        frame = run_sweep(spec, derived = derived).frame
        assert len(frame) == 2
        assert frame["flags"].iloc[0] == ""
        assert "bid-undefined" in frame["flags"].iloc[1]
        assert math.isnan(frame["stop_out"].iloc[1])
