import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

from src import config


class ParameterError(ValueError):
    """Raised when market or mandate parameters fall outside the model's domain."""


@dataclass(frozen=True)
class MarketParams:
    """
    The auction environment. All yields are decimals (0.046, not 4.6).
    @param Theta: benchmark "high-yield" bond rate, the intercept of the inverse demand rule
    @param theta: aggregate sensitivity of the stop-out yield to the aggregate demand D(b)
    @param n: number of bidders
    @param exp_rs: expectation of the secondary-market yield E[r^s]
    @param r_f: risk-free rate, lower bound of eligible yields
    @param r_bar: upper bound of eligible yields
    @param lambda_min: minimum bid tied to the symmetric risk limit
    """
    Theta: float
    theta: float
    n: int
    exp_rs: float
    r_f: float
    r_bar: float
    lambda_min: float

    def replace(self, **changes) -> "MarketParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class BidderType:
    """
    A mandate pair: budget limit c and risk limit r_ell, plus the seed/index it was sampled under.
    """
    c: float
    r_ell: float
    seed: Optional[int] = None
    index: Optional[int] = None

    def __post_init__(self):
        if not (math.isfinite(self.c) and 0.0 <= self.c <= 1.0):
            raise ParameterError(f"budget limit must lie in [0, 1], got c={self.c}")
        if not (math.isfinite(self.r_ell) and self.r_ell >= 0.0):
            raise ParameterError(f"risk limit must be a non-negative decimal yield, got r_ell={self.r_ell}")


@dataclass(frozen=True)
class BidPoint:
    quantity: float
    yield_req: float
    bidder_id: object = None

    def __post_init__(self):
        if not (math.isfinite(self.quantity) and 0.0 <= self.quantity < 1.0):
            raise ParameterError(f"bid quantity must lie in [0, 1), got {self.quantity} for bidder {self.bidder_id}")
        if not math.isfinite(self.yield_req):
            raise ParameterError(f"bid yield must be finite, got {self.yield_req} for bidder {self.bidder_id}")


@dataclass(frozen=True)
class AuctionOutcome:
    stop_out: float
    allocations: Tuple[float, ...]
    issued: bool
    aggregate_demand: float
    bidder_ids: Tuple[object, ...] = ()
    marginal_yield: Optional[float] = None

    def allocation_for(self, bidder_id) -> float:
        return self.allocations[self.bidder_ids.index(bidder_id)]


MARGINAL_KINDS = ("uniform","truncated-normal","point-mass","two-point")


@dataclass(frozen=True)
class Marginal:
    """
    One independent marginal of the type distribution.
    Parameter layouts:
        uniform          (low, high)
        truncated-normal (mean, sd, low, high)
        point-mass       (value,)
        two-point        (low, high, p_low)
    """
    kind: str
    params: Tuple[float, ...]

    def __post_init__(self):
        expected = {"uniform":2,"truncated-normal":4,"point-mass":1,"two-point":3}
        if self.kind not in expected:
            raise ParameterError(f"unsupported marginal kind '{self.kind}'")
        if len(self.params) != expected[self.kind]:
            raise ParameterError(f"{self.kind} marginal takes {expected[self.kind]} parameters, got {len(self.params)}")
        if self.kind == "uniform" and not self.params[0] < self.params[1]:
            raise ParameterError(f"uniform marginal needs low < high, got {self.params}")
        if self.kind == "truncated-normal":
            _, sd, low, high = self.params
            if sd <= 0 or not low < high:
                raise ParameterError(f"truncated-normal marginal needs sd > 0 and low < high, got {self.params}")
        if self.kind == "two-point":
            low, high, p_low = self.params
            if not low < high or not 0.0 < p_low < 1.0:
                raise ParameterError(f"two-point marginal needs low < high and 0 < p_low < 1, got {self.params}")

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("point-mass","two-point")

    def support(self) -> Tuple[float, float]:
        if self.kind == "uniform":
            return self.params[0], self.params[1]
        if self.kind == "truncated-normal":
            return self.params[2], self.params[3]
        if self.kind == "point-mass":
            return self.params[0], self.params[0]
        return self.params[0], self.params[1]

    def _frozen_truncnorm(self):
        mean, sd, low, high = self.params
        return truncnorm((low - mean) / sd, (high - mean) / sd, loc = mean, scale = sd)

    def atoms(self) -> Optional[List[Tuple[float, float]]]:
        """
        @return: (value, probability) pairs for discrete marginals, None for continuous ones
        """
        if self.kind == "point-mass":
            return [(self.params[0], 1.0)]
        if self.kind == "two-point":
            low, high, p_low = self.params
            return [(low, p_low), (high, 1.0 - p_low)]
        return None

    def cdf(self, x):
        x = np.asarray(x, dtype = float)
        if self.kind == "uniform":
            low, high = self.params
            return np.clip((x - low) / (high - low), 0.0, 1.0)
        if self.kind == "truncated-normal":
            return self._frozen_truncnorm().cdf(x)
        cdf = np.zeros_like(x)
        for value, prob in self.atoms():
            cdf = cdf + prob * (x >= value)
        return cdf

    def pdf(self, x):
        if self.is_discrete:
            raise ParameterError(f"{self.kind} marginal has no density; use atoms()")
        x = np.asarray(x, dtype = float)
        if self.kind == "uniform":
            low, high = self.params
            return np.where((x >= low) & (x <= high), 1.0 / (high - low), 0.0)
        return self._frozen_truncnorm().pdf(x)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.params[0], self.params[1], size)
        if self.kind == "truncated-normal":
            return self._frozen_truncnorm().rvs(size = size, random_state = rng)
        if self.kind == "point-mass":
            return np.full(size, self.params[0], dtype = float)
        low, high, p_low = self.params
        return np.where(rng.random(size) < p_low, low, high)


DISTRIBUTION_KINDS = {
    "independent-uniform":"uniform",
    "independent-truncated-normal":"truncated-normal",
    "point-mass":"point-mass",
    "two-point":"two-point",
}


@dataclass(frozen=True)
class TypeDistribution:
    """
    Independent marginals for the budget limit (c_params) and the risk limit (r_params).
    """
    kind: str
    c_params: Tuple[float, ...]
    r_params: Tuple[float, ...]
    budget: Marginal = field(init = False, repr = False, compare = False)
    risk: Marginal = field(init = False, repr = False, compare = False)

    def __post_init__(self):
        if self.kind not in DISTRIBUTION_KINDS:
            raise ParameterError(f"unsupported distribution kind '{self.kind}'; expected one of {sorted(DISTRIBUTION_KINDS)}")
        marginal_kind = DISTRIBUTION_KINDS[self.kind]
        object.__setattr__(self, "c_params", tuple(float(v) for v in self.c_params))
        object.__setattr__(self, "r_params", tuple(float(v) for v in self.r_params))
        object.__setattr__(self, "budget", Marginal(marginal_kind, self.c_params))
        object.__setattr__(self, "risk", Marginal(marginal_kind, self.r_params))
        c_low, c_high = self.budget.support()
        if c_low < 0.0 or c_high > 1.0:
            raise ParameterError(f"budget support must lie inside [0, 1], got [{c_low}, {c_high}]")


def validate_params(p: MarketParams) -> List[str]:
    """
    Check every MarketParams invariant.
    @return: one message per violated invariant, naming the invariant and the offending values; empty when valid
    """
    violations = []
    if p.n < config.MIN_BIDDERS:
        violations.append(f"n ≥ {config.MIN_BIDDERS} violated: n={p.n}")
    if not 0.0 < p.lambda_min < 1.0:
        violations.append(f"0 < lambda_min < 1 violated: lambda_min={p.lambda_min}")
    if not p.Theta > p.exp_rs:
        violations.append(f"Theta > exp_rs violated: Theta={p.Theta}, exp_rs={p.exp_rs}")
    if not p.r_f <= p.exp_rs:
        violations.append(f"r_f ≤ exp_rs violated: r_f={p.r_f}, exp_rs={p.exp_rs}")
    if not p.exp_rs <= p.r_bar:
        violations.append(f"exp_rs ≤ r_bar violated: exp_rs={p.exp_rs}, r_bar={p.r_bar}")
    if not p.r_bar < p.Theta:
        violations.append(f"r_bar < Theta violated: r_bar={p.r_bar}, Theta={p.Theta}")
    if not p.theta > 0.0:
        violations.append(f"theta > 0 violated: theta={p.theta}")
    return violations


def draw_types(dist: TypeDistribution, n: int, seed: int) -> Tuple[List[BidderType], float]:
    """
    Draw n i.i.d. types from the independent marginals, redrawing any sample outside the support box.
    @return: the sampled types and the sampler's rejection rate
    """
    if n < config.MIN_BIDDERS:
        raise ParameterError(f"n ≥ {config.MIN_BIDDERS} required to sample types, got n={n}")
    rng = np.random.default_rng(seed)
    c_low, c_high = dist.budget.support()
    r_low, r_high = dist.risk.support()

    accepted = []
    attempts = 0
    while len(accepted) < n:
        need = n - len(accepted)
        cs = dist.budget.sample(rng, need)
        rs = dist.risk.sample(rng, need)
        attempts += need
        for c, r in zip(cs, rs):
            if c_low <= c <= c_high and r_low <= r <= r_high:
                accepted.append((float(c), float(r)))

    types = [BidderType(c = c, r_ell = r, seed = seed, index = i) for i, (c, r) in enumerate(accepted)]
    return types, (attempts - n) / attempts


def sample_types(dist: TypeDistribution, n: int, seed: int) -> List[BidderType]:
    """
    Sample n bidder types; deterministic for a fixed seed.
    """
    types, _ = draw_types(dist, n, seed)
    return types


def infimum_bid_for_risk_limit(r_ell: float, p: MarketParams) -> float:
    """
    Invert the symmetric risk limit r_ell = Theta - theta*n*lambda for the infimum bid lambda.
    @return: lambda = (Theta - r_ell) / (theta*n)
    """
    if p.theta * p.n <= 0:
        raise ParameterError(f"theta*n must be positive, got theta={p.theta}, n={p.n}")
    if not p.r_f <= r_ell < p.Theta:
        raise ParameterError(f"risk limit must satisfy r_f ≤ r_ell < Theta, got r_ell={r_ell} (r_f={p.r_f}, Theta={p.Theta})")
    lam = (p.Theta - r_ell) / (p.theta * p.n)
    if not 0.0 < lam < 1.0:
        raise ParameterError(f"infeasible mandate: infimum bid {lam} for r_ell={r_ell} lies outside (0, 1)")
    return lam


def is_admissible(bid: BidPoint, t: BidderType, p: MarketParams) -> bool:
    """
    True iff the bid lies in the participation region of the type: quantity between the infimum bid and
    the budget limit, requested yield between the risk-free rate and the risk limit.
    """
    try:
        lam = infimum_bid_for_risk_limit(t.r_ell, p)
    except ParameterError:
        return False
    tol = config.ADMISSIBILITY_TOL
    in_quantity = lam - tol <= bid.quantity <= t.c + tol
    in_yield = p.r_f - tol <= bid.yield_req <= t.r_ell + tol
    return in_quantity and in_yield


def risk_limit_corners(t: BidderType, p: MarketParams) -> dict:
    """
    Corner points of the participation region: L at (infimum bid, risk limit), M at (budget limit, risk-free rate).
    """
    return {
        "L":(infimum_bid_for_risk_limit(t.r_ell, p), t.r_ell),
        "M":(t.c, p.r_f),
    }
