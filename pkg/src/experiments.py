import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src import config
from src.clearing import ClearingError, ClearingInput, clear
from src.emit_util import StatusCB, emit, emit_progress
from src.equilibrium import (
    EquilibriumStrategy,
    Mandate,
    StrategyUndefinedError,
    equilibrium_bid,
    symmetric_stop_out,
    xi,
)
from src.market_model import (
    BidPoint,
    BidderType,
    MarketParams,
    ParameterError,
    TypeDistribution,
    sample_types,
    validate_params,
)

STRATEGIES = ("equilibrium","truthful-budget","fixed")
SWEEP_AXES = ("theta","n","lambda","exp_rs","c_ell")
DERIVED = ("bid","stop_out","xi")

# sign of d(bid)/d(axis) implied by the closed form
EXPECTED_BID_TREND = {"theta":"decreasing","c_ell":"toward_lambda"}


def replicate_seed(seed: int, replicate: int) -> int:
    """
    Seed for one replicate, derived from the master seed and the replicate index only.
    Kept below 2**63 to fit a signed 64-bit column.
    """
    state = np.random.SeedSequence(seed, spawn_key = (replicate,)).generate_state(1, dtype = np.uint64)
    return int(state[0] >> np.uint64(1))


def allocation_digest(allocations: Sequence[float]) -> str:
    payload = ",".join(repr(float(a)) for a in allocations).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def summarize_campaign(frame: pd.DataFrame, quantiles = None) -> dict:
    """
    Summary statistics of the stop-out yield over the replicates that cleared (flagged replicates carry a NaN
    stop-out and are counted separately). Recomputes identically from a re-read campaign file.
    """
    quantiles = quantiles or config.SUMMARY_QUANTILES
    valid = frame[frame["stop_out"].notna()]
    r_hat = valid["stop_out"].to_numpy(dtype = float)
    issued = valid["issued"].to_numpy(dtype = bool)

    summary = {
        "replicates":int(len(frame)),
        "flagged":int(len(frame) - len(valid)),
        "issuance_rate":float(np.mean(issued)) if len(valid) else math.nan,
        "mean":float(np.mean(r_hat)) if len(valid) else math.nan,
        "min":float(np.min(r_hat)) if len(valid) else math.nan,
        "max":float(np.max(r_hat)) if len(valid) else math.nan,
        "mean_issued_stop_out":float(np.mean(r_hat[issued])) if issued.any() else math.nan,
    }
    for q in quantiles:
        summary[f"q{int(round(q * 100)):02d}"] = float(np.quantile(r_hat, q)) if len(valid) else math.nan
    return summary


@dataclass
class CampaignResult:
    frame: pd.DataFrame
    summary: dict
    strategy: str
    seed: int


@dataclass(frozen=True)
class SweepSpec:
    """
    One comparative-statics axis swept over `values` around the baseline `fixed`.
    hold_lambda_n recalibrates lambda on the n axis so lambda*n stays at its baseline value.
    """
    axis: str
    values: Sequence[float]
    fixed: MarketParams
    mandate: Mandate
    hold_lambda_n: bool = False

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ParameterError(f"unknown sweep axis '{self.axis}'; expected one of {SWEEP_AXES}")
        values = list(self.values)
        diffs = np.diff(values)
        if len(values) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ParameterError(f"sweep values must be strictly monotone along '{self.axis}'")


@dataclass
class SweepTable:
    frame: pd.DataFrame
    axis: str
    monotonicity: dict = field(default_factory = dict)


class MonteCarloCampaign:

    def __init__(self,
                 replicates = None,
                 seed = None,
                 workers = None,
                 quantiles = None,
                 ):
        """
        Defaults to all parameters as set in config.py; overrides parameters when stated in function call.
        @param replicates: number of auctions to simulate
        @param seed: master seed; each replicate derives its own seed from it and its index
        @param workers: number of threads clearing replicates; results do not depend on it
        @param quantiles: stop-out quantiles reported in the summary
        """
        defaults = {
            "replicates":config.DEFAULT_REPLICATES,
            "seed":config.DEFAULT_SEED,
            "workers":config.WORKERS,
            "quantiles":config.SUMMARY_QUANTILES,
        }

        overrides = {
            "replicates":replicates,
            "seed":seed,
            "workers":workers,
            "quantiles":quantiles,
        }

        for name, default in defaults.items():
            value = overrides[name] if overrides[name] is not None else default
            setattr(self, name, value)

        if self.replicates < 1:
            raise ParameterError(f"a campaign needs at least one replicate, got {self.replicates}")


    @staticmethod
    def bids_for_types(types: Sequence[BidderType], strategy: str, p: MarketParams,
                       mandate: Optional[Mandate] = None, fixed_bid: Optional[float] = None):
        """
        Map sampled types to bid points under the chosen strategy. Every bid is placed at the type's risk limit.
        @param strategy: "equilibrium" (closed-form bid of the budget), "truthful-budget" (bid the budget itself),
                         or "fixed" (bid `fixed_bid`, lambda when unset)
        """
        if strategy == "truthful-budget":
            quantities = [t.c for t in types]
        elif strategy == "equilibrium":
            if mandate is None:
                raise ParameterError("the equilibrium strategy needs a mandate (c_ell, allocation)")
            rule = EquilibriumStrategy(mandate.c_ell, mandate.allocation, p)
            quantities = [rule(t.c) for t in types]
        elif strategy == "fixed":
            quantities = [p.lambda_min if fixed_bid is None else fixed_bid for _ in types]
        else:
            raise ParameterError(f"unknown strategy '{strategy}'; expected one of {STRATEGIES}")
        return [BidPoint(quantity = q, yield_req = t.r_ell, bidder_id = i) for i, (q, t) in enumerate(zip(quantities, types))]


    def run_replicate(self, index: int, dist: TypeDistribution, strategy: str, p: MarketParams,
                      mandate: Optional[Mandate] = None, fixed_bid: Optional[float] = None) -> dict:
        """
        Sample one market, map it to bids, clear it.
        @return: one replicate row; a replicate the strategy or the engine cannot handle is flagged with a NaN stop-out
        """
        seed = replicate_seed(self.seed, index)
        row = {"replicate":index, "seed":seed, "aggregate_demand":math.nan, "stop_out":math.nan,
               "issued":False, "digest":"", "flag":""}
        try:
            types = sample_types(dist, p.n, seed)
            bids = self.bids_for_types(types, strategy, p, mandate, fixed_bid)
            row["aggregate_demand"] = math.fsum(b.quantity for b in bids)
            outcome = clear(ClearingInput(bids = bids, params = p))
        except (StrategyUndefinedError, ClearingError, ParameterError) as err:
            row["flag"] = str(err)
            return row

        row.update({
            "aggregate_demand":outcome.aggregate_demand,
            "stop_out":outcome.stop_out,
            "issued":outcome.issued,
            "digest":allocation_digest(outcome.allocations),
        })
        return row


    def run_campaign(self, dist: TypeDistribution, strategy: str, p: MarketParams,
                     mandate: Optional[Mandate] = None, fixed_bid: Optional[float] = None,
                     status_cb: Optional[StatusCB] = None) -> CampaignResult:
        """
        Run `replicates` independent auctions; deterministic for a fixed seed whatever the worker count.
        @return: per-replicate rows plus the summary
        """
        if strategy not in STRATEGIES:
            raise ParameterError(f"unknown strategy '{strategy}'; expected one of {STRATEGIES}")
        emit(status_cb, {"type":"start", "total":self.replicates,
                         "message":f"  Running {self.replicates} replicates ({strategy} strategy, seed {self.seed})."})

        def task(index):
            return self.run_replicate(index, dist, strategy, p, mandate, fixed_bid)

        rows = []
        every = max(1, self.replicates // 10)
        with ThreadPoolExecutor(max_workers = max(1, int(self.workers))) as pool:
            for row in pool.map(task, range(self.replicates)):
                rows.append(row)
                emit_progress(status_cb, "campaign", len(rows), self.replicates, every = every)

        frame = pd.DataFrame(rows, columns = config.CAMPAIGN_COLUMNS + ["digest","flag"])
        summary = summarize_campaign(frame, self.quantiles)
        if summary["flagged"]:
            emit(status_cb, {"type":"warning",
                             "message":f"  {summary['flagged']} replicates flagged (strategy undefined or clearing failed)."})
        emit(status_cb, {"type":"done", "total":self.replicates,
                         "message":f"  Campaign complete: issuance rate {summary['issuance_rate']:.4f}."})
        return CampaignResult(frame = frame, summary = summary, strategy = strategy, seed = self.seed)


def run_campaign(dist: TypeDistribution, strategy: str, p: MarketParams, replicates: int, seed: int,
                 mandate: Optional[Mandate] = None, fixed_bid: Optional[float] = None,
                 workers: Optional[int] = None, status_cb: Optional[StatusCB] = None) -> CampaignResult:
    campaign = MonteCarloCampaign(replicates = replicates, seed = seed, workers = workers)
    return campaign.run_campaign(dist, strategy, p, mandate, fixed_bid, status_cb)


def _sweep_point(spec: SweepSpec, value):
    """Parameters and c_ell for one axis value."""
    p, c_ell = spec.fixed, spec.mandate.c_ell
    if spec.axis == "theta":
        p = p.replace(theta = value)
    elif spec.axis == "n":
        p = p.replace(n = int(value))
        if spec.hold_lambda_n:
            p = p.replace(lambda_min = spec.fixed.lambda_min * spec.fixed.n / int(value))
    elif spec.axis == "lambda":
        p = p.replace(lambda_min = value)
    elif spec.axis == "exp_rs":
        p = p.replace(exp_rs = value)
    else:
        c_ell = value
    return p, c_ell


def _trend(values: np.ndarray) -> str:
    diffs = np.diff(values)
    if diffs.size == 0 or np.any(np.isnan(diffs)):
        return "undetermined"
    if np.all(diffs < 0):
        return "decreasing"
    if np.all(diffs > 0):
        return "increasing"
    if np.all(diffs == 0):
        return "constant"
    return "mixed"


def sweep_monotonicity(frame: pd.DataFrame, axis: str, lam: float) -> dict:
    """
    Trend flags of the sweep, checked against the signs the closed form predicts on this axis.
    """
    bids = frame["bid"].to_numpy(dtype = float)
    stop_outs = frame["stop_out"].to_numpy(dtype = float)
    flags = {"bid_trend":_trend(bids), "stop_out_trend":_trend(stop_outs)}

    expected = EXPECTED_BID_TREND.get(axis)
    if expected == "decreasing":
        flags["matches_expected"] = flags["bid_trend"] == "decreasing"
    elif expected == "toward_lambda":
        distance = np.abs(bids - lam)
        flags["matches_expected"] = bool(distance.size and _trend(distance) in ("decreasing","constant"))
        flags["limit_gap"] = float(distance[-1]) if distance.size else math.nan
    return flags


def run_sweep(spec: SweepSpec, derived: Sequence[str] = DERIVED, status_cb: Optional[StatusCB] = None) -> SweepTable:
    """
    One row per axis value with the requested closed-form quantities (others left NaN) and the flags that
    apply to that parameter set.
    """
    unknown = set(derived) - set(DERIVED)
    if unknown:
        raise ParameterError(f"unknown derived quantities {sorted(unknown)}; expected a subset of {DERIVED}")

    rows = []
    mandate = spec.mandate
    for i, value in enumerate(spec.values):
        p, c_ell = _sweep_point(spec, value)
        flags = []
        if validate_params(p):
            flags.append("invalid-params")
        row = {"axis_value":float(value), "bid":math.nan, "stop_out":math.nan, "xi":math.nan}

        try:
            factor = xi(p)
            if not factor.holds:
                flags.append("xi-condition-violated")
            if "xi" in derived:
                row["xi"] = factor.value
            if "bid" in derived:
                row["bid"] = equilibrium_bid(mandate.c_star, c_ell, mandate.allocation, p).bid
        except ParameterError:
            flags.append("bid-undefined")

        if p.Theta - p.theta * p.n * p.lambda_min < p.r_f - config.ADMISSIBILITY_TOL:
            flags.append("risk-limit-below-rf")
        elif "stop_out" in derived and "bid-undefined" not in flags:
            try:
                row["stop_out"] = symmetric_stop_out(mandate.c_star, c_ell, mandate.allocation, p)
            except ParameterError:
                flags.append("bid-undefined")

        row["flags"] = ";".join(flags)
        rows.append(row)
        emit_progress(status_cb, "sweep", i + 1, len(spec.values), every = max(1, len(spec.values) // 10))

    frame = pd.DataFrame(rows, columns = config.SWEEP_COLUMNS)
    monotonicity = sweep_monotonicity(frame, spec.axis, spec.fixed.lambda_min) if len(frame) else {}
    return SweepTable(frame = frame, axis = spec.axis, monotonicity = monotonicity)


def sweep_values(start: float, stop: float, count: int) -> list:
    return [float(v) for v in np.linspace(start, stop, count)]
