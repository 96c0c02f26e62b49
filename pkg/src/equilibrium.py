from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from src import config
from src.market_model import MarketParams, ParameterError


class StrategyUndefinedError(ValueError):
    """Raised when a bidding strategy is evaluated outside the budgets it is defined on."""


@dataclass(frozen=True)
class AllocationFn:
    """
    Linear allocation rule alpha(c) = intercept + slope*c.
    When a domain [c_lo, c_hi] is given, alpha must stay inside (0, 1) on it.
    """
    slope: float
    intercept: float = 0.0
    c_lo: Optional[float] = None
    c_hi: Optional[float] = None

    def __post_init__(self):
        if not self.slope > 0:
            raise ParameterError(f"allocation slope must be positive, got {self.slope}; relative rate rho is undefined otherwise")
        if self.c_lo is not None and self(self.c_lo) <= 0:
            raise ParameterError(f"allocation must be positive on its domain, alpha({self.c_lo})={self(self.c_lo)}")
        if self.c_hi is not None and self(self.c_hi) >= 1:
            raise ParameterError(f"allocation must stay below 1 on its domain, alpha({self.c_hi})={self(self.c_hi)}")

    @classmethod
    def identity(cls, c_lo = None, c_hi = None) -> "AllocationFn":
        return cls(slope = 1.0, intercept = 0.0, c_lo = c_lo, c_hi = c_hi)

    @classmethod
    def through_points(cls, c_ell, alpha_ell, c_star, alpha_star) -> "AllocationFn":
        """
        The linear rule passing through (c_ell, alpha_ell) and (c_star, alpha_star).
        """
        if not c_star > c_ell:
            raise ParameterError(f"need c_star > c_ell to fix a line, got c_ell={c_ell}, c_star={c_star}")
        slope = (alpha_star - alpha_ell) / (c_star - c_ell)
        return cls(slope = slope, intercept = alpha_ell - slope * c_ell, c_lo = c_ell, c_hi = c_star)

    def __call__(self, c):
        return self.intercept + self.slope * c

    def derivative(self, c):
        return self.slope + 0.0 * np.asarray(c, dtype = float)

    def rho(self, c):
        """Relative rate of change alpha'(c)/alpha(c)."""
        return self.slope / self(np.asarray(c, dtype = float))


@dataclass(frozen=True)
class Mandate:
    """
    Symmetric investment mandate: infimum budget c_ell, budget cap c_bar, the budget c_star under study,
    and the allocation rule.
    """
    c_ell: float
    c_bar: float
    c_star: float
    allocation: AllocationFn

    def __post_init__(self):
        if not 0.0 < self.c_ell <= self.c_star <= self.c_bar <= 1.0:
            raise ParameterError(f"mandate needs 0 < c_ell ≤ c_star ≤ c_bar ≤ 1, got c_ell={self.c_ell}, c_star={self.c_star}, c_bar={self.c_bar}")


@dataclass(frozen=True)
class XiFactor:
    value: float
    bound: float
    holds: bool


@dataclass(frozen=True)
class EquilibriumPoint:
    c_star: float
    bid: float
    xi: float
    stop_out: float
    weight: float
    residual_supply: float
    xi_condition_holds: bool


def xi(p: MarketParams) -> XiFactor:
    """
    Normalized market-power coefficient theta / (Theta - E[r^s]), with a flag for xi < 1/(lambda*n).
    """
    spread = p.Theta - p.exp_rs
    if not spread > 0:
        raise ParameterError(f"Theta must exceed exp_rs, got Theta={p.Theta}, exp_rs={p.exp_rs}")
    value = p.theta / spread
    bound = 1.0 / (p.lambda_min * p.n)
    return XiFactor(value = value, bound = bound, holds = value < bound)


def allocation_weight(c_star, c_ell, a: AllocationFn) -> float:
    """
    w = alpha(c_ell) / alpha(c_star)
    """
    if c_star < c_ell:
        raise ParameterError(f"c_star={c_star} lies below the infimum budget c_ell={c_ell}")
    alpha_ell, alpha_star = a(c_ell), a(c_star)
    if alpha_ell <= 0 or alpha_star <= 0:
        raise ParameterError(f"allocation must be positive on [c_ell, c_star], got alpha(c_ell)={alpha_ell}, alpha(c_star)={alpha_star}")
    return alpha_ell / alpha_star


def bid_for_weight(weight: float, p: MarketParams) -> float:
    """
    b* = lambda*w + (1 - w)/(xi*n)
    """
    k = xi(p).value
    if k <= 0:
        raise ParameterError(f"xi must be positive to evaluate the equilibrium bid, got {k}")
    return p.lambda_min * weight + (1.0 - weight) / (k * p.n)


def symmetric_risk_limit(lam: float, p: MarketParams) -> float:
    """
    r_ell* = Theta - theta*n*lambda, the stop-out yield when every bidder bids the minimum.
    Values within ADMISSIBILITY_TOL below r_f are round-off and clamp to r_f.
    """
    r_ell = p.Theta - p.theta * p.n * lam
    if r_ell < p.r_f - config.ADMISSIBILITY_TOL:
        raise ParameterError(f"symmetric risk limit {r_ell} falls below the risk-free rate {p.r_f}; mandate and market do not match")
    return max(r_ell, p.r_f)


def stop_out_for_weight(weight: float, p: MarketParams) -> float:
    """
    r_hat = E[r^s] + (r_ell* - E[r^s])*w
    """
    r_ell = symmetric_risk_limit(p.lambda_min, p)
    return p.exp_rs + (r_ell - p.exp_rs) * weight


def equilibrium_bid(c_star, c_ell, a: AllocationFn, p: MarketParams) -> EquilibriumPoint:
    """
    Symmetric equilibrium bid for a bidder of budget c_star when the infimum budget is c_ell.
    The xi condition is recorded on the result, not enforced.
    @return: the equilibrium point, with the stop-out Theta - theta*n*b* and residual supply 1 - n*b*
    """
    w = allocation_weight(c_star, c_ell, a)
    factor = xi(p)
    bid = bid_for_weight(w, p)
    return EquilibriumPoint(
        c_star = c_star,
        bid = bid,
        xi = factor.value,
        stop_out = p.Theta - p.theta * p.n * bid,
        weight = w,
        residual_supply = 1.0 - p.n * bid,
        xi_condition_holds = factor.holds,
    )


def symmetric_stop_out(c_star, c_ell, a: AllocationFn, p: MarketParams) -> float:
    return stop_out_for_weight(allocation_weight(c_star, c_ell, a), p)


def proposition_limit_sweep(c_ell_sequence: Sequence[float], c_star, a: AllocationFn, p: MarketParams) -> List[float]:
    """
    Equilibrium bids for an increasing sequence of infimum budgets approaching c_star (stricter risk limits).
    """
    c_ells = list(c_ell_sequence)
    if any(later <= earlier for earlier, later in zip(c_ells, c_ells[1:])):
        raise ParameterError("c_ell sequence must be strictly increasing")
    if c_ells and c_ells[-1] > c_star:
        raise ParameterError(f"c_ell sequence must stay at or below c_star={c_star}")
    return [equilibrium_bid(c_star, c_ell, a, p).bid for c_ell in c_ells]


def bid_curve(c, c_ell, a: AllocationFn, p: MarketParams) -> np.ndarray:
    """
    Vectorized equilibrium bid over budgets, without the domain check (finite-difference stencils step past c_ell).
    """
    c = np.asarray(c, dtype = float)
    k = 1.0 / (xi(p).value * p.n)
    w = a(c_ell) / a(c)
    return p.lambda_min * w + k * (1.0 - w)


def bid_curve_derivative(c, c_ell, a: AllocationFn, p: MarketParams) -> np.ndarray:
    """
    Analytic b*'(c) = w'(c)*(lambda - 1/(xi*n)) with w' = -alpha(c_ell)*alpha'(c)/alpha(c)^2.
    """
    c = np.asarray(c, dtype = float)
    k = 1.0 / (xi(p).value * p.n)
    w_prime = -a(c_ell) * a.derivative(c) / a(c) ** 2
    return w_prime * (p.lambda_min - k)


@dataclass(frozen=True)
class EquilibriumStrategy:
    """
    Budget-to-bid map of the symmetric equilibrium; `perturbation` shifts every bid for diagnostics.
    """
    c_ell: float
    allocation: AllocationFn
    params: MarketParams
    perturbation: float = 0.0

    def __call__(self, c: float) -> float:
        if c < self.c_ell:
            raise StrategyUndefinedError(f"equilibrium strategy is defined for budgets ≥ c_ell={self.c_ell}, got {c}")
        return equilibrium_bid(c, self.c_ell, self.allocation, self.params).bid + self.perturbation

    def perturbed(self, delta: float) -> "EquilibriumStrategy":
        return EquilibriumStrategy(self.c_ell, self.allocation, self.params, self.perturbation + delta)
