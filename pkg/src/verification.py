import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import roots_legendre

from src import config
from src.clearing import ClearingError, ClearingInput, clear
from src.emit_util import StatusCB, emit, emit_progress
from src.equilibrium import (
    AllocationFn,
    EquilibriumStrategy,
    StrategyUndefinedError,
    bid_curve,
    bid_curve_derivative,
    xi,
)
from src.market_model import BidPoint, MarketParams, ParameterError, TypeDistribution

QUADRATURE = "quadrature"
MONTE_CARLO = "monte-carlo"
PRECONDITION_STAMP = "equilibrium precondition violated"


@dataclass(frozen=True)
class PayoffEstimate:
    value: float
    std_error: float
    method: str
    window_probability: float
    diagnostics: Tuple[str, ...] = ()


@dataclass(frozen=True)
class CurvedAllocation:
    """
    alpha(c) + curvature*(c - center)^2. Breaks the linearity of the allocation rule on purpose,
    to show the zero second derivative depends on it.
    """
    base: AllocationFn
    curvature: float
    center: float

    def __call__(self, c):
        return self.base(c) + self.curvature * (c - self.center) ** 2


@dataclass(frozen=True)
class OdeCheck:
    max_residual: float
    method: str
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_residual < self.tolerance


@dataclass(frozen=True)
class BestResponse:
    argmax: float
    max_payoff: float
    payoff_at_c_star: float
    gap: float
    relative_gap: float
    grid_size: int
    precondition_holds: bool
    stamp: str = ""

    @property
    def ok(self) -> bool:
        return self.precondition_holds and self.relative_gap <= config.GAP_REL_TOL


def symmetric_bid_yield(p: MarketParams) -> float:
    """
    The yield every bidder attaches to the symmetric bid: the symmetric risk limit, kept inside [r_f, r_bar].
    """
    return min(p.r_bar, max(p.r_f, p.Theta - p.theta * p.n * p.lambda_min))


def profile_payoff(own_c: float, strategy: Callable[[float], float], a, p: MarketParams) -> Tuple[float, Optional[str]]:
    """
    Payoff of the reporting bidder once the issue forms: the n bids of strategy(own_c) are cleared by the
    engine, and a winner earns alpha(own_c) * (r_hat - E[r^s]).
    @return: payoff and a diagnostic message when the profile could not be priced
    """
    try:
        bid = strategy(own_c)
        yield_req = symmetric_bid_yield(p)
        bids = [BidPoint(quantity = bid, yield_req = yield_req, bidder_id = i) for i in range(p.n)]
        outcome = clear(ClearingInput(bids = bids, params = p))
    except (StrategyUndefinedError, ParameterError, ClearingError) as err:
        return 0.0, f"c={own_c}: {err}"

    if not outcome.issued or outcome.allocations[0] <= 0.0:
        return 0.0, None
    return float(a(own_c)) * (outcome.stop_out - p.exp_rs), None


def opponent_summary(budgets: np.ndarray) -> np.ndarray:
    """Component-wise highest opponent budget, one per row."""
    return np.max(budgets, axis = -1)


def _gauss_legendre_panels(lo: float, hi: float, nodes: int, panels: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    points = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return points, weights


def window_probability(dist: TypeDistribution, n: int, c_ell: float, c_bar: float,
                       nodes: int = None, panels: int = None) -> float:
    """
    P(c_ell ≤ y ≤ c_bar) for y the highest of n-1 i.i.d. opponent budgets, CDF F(.)^(n-1).
    Discrete marginals are enumerated; continuous ones are integrated with composite Gauss-Legendre.
    """
    nodes = nodes or config.QUADRATURE_NODES
    panels = panels or config.QUADRATURE_PANELS
    marginal = dist.budget
    k = n - 1

    atoms = marginal.atoms()
    if atoms is not None:
        total = 0.0
        for value, prob in atoms:
            if c_ell <= value <= c_bar:
                upper = float(marginal.cdf(value))
                total += upper ** k - (upper - prob) ** k
        return total

    low, high = marginal.support()
    lo, hi = max(c_ell, low), min(c_bar, high)
    if lo >= hi:
        return 0.0
    y, w = _gauss_legendre_panels(lo, hi, nodes, panels)
    density = k * marginal.pdf(y) * marginal.cdf(y) ** (k - 1)
    return float(np.dot(w, density))


def _mc_window_hits(dist: TypeDistribution, n: int, c_ell: float, c_bar: float, replicates: int, seed: int) -> np.ndarray:
    """
    Indicator of the window event for each replicate. Replicates are drawn in fixed-size chunks, each seeded
    from (seed, chunk index), so the draw does not depend on how the work is split.
    """
    chunk = config.MC_CHUNK
    hits = []
    for index, start in enumerate(range(0, replicates, chunk)):
        size = min(chunk, replicates - start)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key = (index,)))
        budgets = dist.budget.sample(rng, size * (n - 1)).reshape(size, n - 1)
        y = opponent_summary(budgets)
        hits.append(((y >= c_ell) & (y <= c_bar)).astype(float))
    return np.concatenate(hits) if hits else np.zeros(0)


def _window(strategy, dist: TypeDistribution, c_ell, c_bar) -> Tuple[float, float]:
    low, high = dist.budget.support()
    if c_ell is None:
        c_ell = getattr(strategy, "c_ell", low)
    if c_bar is None:
        c_bar = high
    return c_ell, c_bar


def expected_payoff(own_c: float, others_strategy: Callable[[float], float], dist: TypeDistribution, a,
                    p: MarketParams, method: str = QUADRATURE, resolution: int = None,
                    c_ell: float = None, c_bar: float = None, seed: int = None) -> PayoffEstimate:
    """
    Expected profit of a bidder reporting budget own_c while the others follow `others_strategy`.
    The issue forms when the highest opponent budget falls in [c_ell, c_bar]; given that, the symmetric
    profile at own_c is priced by the clearing engine.
    @param a: allocation rule giving the winner's share (any callable of the budget)
    @param method: "quadrature" (resolution = Gauss-Legendre nodes per panel, ≥ 16) or
                   "monte-carlo" (resolution = replicates, ≥ 10^4)
    @param c_ell: lower end of the integration window; defaults to the strategy's infimum budget
    @param c_bar: upper end of the integration window; defaults to the top of the budget support
    """
    c_ell, c_bar = _window(others_strategy, dist, c_ell, c_bar)
    value, diagnostic = profile_payoff(own_c, others_strategy, a, p)
    diagnostics = (diagnostic,) if diagnostic else ()

    if method == QUADRATURE:
        nodes = resolution or config.QUADRATURE_NODES
        if nodes < config.MIN_QUADRATURE_NODES:
            raise ParameterError(f"quadrature needs at least {config.MIN_QUADRATURE_NODES} nodes, got {nodes}")
        prob = window_probability(dist, p.n, c_ell, c_bar, nodes = nodes)
        return PayoffEstimate(value = value * prob, std_error = 0.0, method = QUADRATURE,
                              window_probability = prob, diagnostics = diagnostics)

    if method == MONTE_CARLO:
        replicates = resolution or config.MC_REPLICATES
        if replicates < config.MIN_MC_REPLICATES:
            raise ParameterError(f"monte-carlo needs at least {config.MIN_MC_REPLICATES} replicates, got {replicates}")
        seed = config.DEFAULT_SEED if seed is None else seed
        hits = _mc_window_hits(dist, p.n, c_ell, c_bar, replicates, seed)
        samples = value * hits
        std_error = float(np.std(samples, ddof = 1) / math.sqrt(replicates))
        return PayoffEstimate(value = float(np.mean(samples)), std_error = std_error, method = MONTE_CARLO,
                              window_probability = float(np.mean(hits)),
                              diagnostics = diagnostics)

    raise ParameterError(f"unknown payoff method '{method}'; expected '{QUADRATURE}' or '{MONTE_CARLO}'")


def _check_step(c_star, h, c_ell, c_bar):
    if not h > 0:
        raise ParameterError(f"finite-difference step must be positive, got {h}")
    if c_star - h < c_ell or c_star + h > c_bar:
        raise ParameterError(f"step {h} too large for domain: c_star±h must stay inside [{c_ell}, {c_bar}]")


def foc_residual(c_star: float, c_ell: float, a: AllocationFn, dist: TypeDistribution, p: MarketParams,
                 h: float = None, c_bar: float = None, strategy = None, method: str = QUADRATURE,
                 resolution: int = None, seed: int = None) -> float:
    """
    Central difference of the expected payoff in the reported budget at c_star, with everyone on the
    equilibrium strategy (or on `strategy` when given). Zero at an equilibrium.
    """
    h = config.FOC_STEP if h is None else h
    strategy = strategy or EquilibriumStrategy(c_ell, a, p)
    c_ell, c_bar = _window(strategy, dist, c_ell, c_bar)
    _check_step(c_star, h, c_ell, c_bar)

    def payoff(c):
        return expected_payoff(c, strategy, dist, a, p, method, resolution, c_ell, c_bar, seed).value

    return (payoff(c_star + h) - payoff(c_star - h)) / (2.0 * h)


def second_order_flatness(c_star: float, c_ell: float, a: AllocationFn, dist: TypeDistribution, p: MarketParams,
                          h: float = None, c_bar: float = None, curvature: float = 0.0,
                          method: str = QUADRATURE, resolution: int = None, seed: int = None) -> float:
    """
    Central second difference of the expected payoff at c_star under the equilibrium strategy.
    A nonzero `curvature` bends the allocation paid out to the bidder while the strategy keeps the linear rule.
    """
    h = config.SECOND_ORDER_STEP if h is None else h
    strategy = EquilibriumStrategy(c_ell, a, p)
    c_ell, c_bar = _window(strategy, dist, c_ell, c_bar)
    _check_step(c_star, h, c_ell, c_bar)
    share = CurvedAllocation(a, curvature, c_star) if curvature else a

    def payoff(c):
        return expected_payoff(c, strategy, dist, share, p, method, resolution, c_ell, c_bar, seed).value

    return (payoff(c_star + h) - 2.0 * payoff(c_star) + payoff(c_star - h)) / h ** 2


def ode_residual(c_grid: Sequence[float], c_ell: float, a: AllocationFn, p: MarketParams,
                 method: str = "analytic", h: float = None) -> OdeCheck:
    """
    Max over the grid of |b*' + rho*b* - rho/(xi*n)|, with b*' analytic or by central differences.
    """
    c = np.asarray(c_grid, dtype = float)
    if c.size == 0 or np.any(c < c_ell):
        raise ParameterError(f"ODE grid must be non-empty and lie at or above c_ell={c_ell}")
    k = 1.0 / (xi(p).value * p.n)
    b = bid_curve(c, c_ell, a, p)
    rho = a.rho(c)

    if method == "analytic":
        b_prime = bid_curve_derivative(c, c_ell, a, p)
        tolerance = config.ODE_ANALYTIC_TOL
    elif method == "finite-difference":
        h = config.ODE_FD_STEP if h is None else h
        b_prime = (bid_curve(c + h, c_ell, a, p) - bid_curve(c - h, c_ell, a, p)) / (2.0 * h)
        tolerance = config.ODE_FD_TOL
    else:
        raise ParameterError(f"unknown derivative method '{method}'")

    residual = np.abs(b_prime + rho * b - rho * k)
    return OdeCheck(max_residual = float(np.max(residual)), method = method, tolerance = tolerance)


def best_response_search(own_grid: Sequence[float], others, dist: TypeDistribution, a, p: MarketParams,
                         c_star: float, method: str = QUADRATURE, resolution: int = None,
                         c_ell: float = None, c_bar: float = None, seed: int = None,
                         status_cb: Optional[StatusCB] = None) -> BestResponse:
    """
    Grid search over unilateral budget reports against `others`.
    @return: the maximizing report and the payoff gap between it and c_star; stamped when xi ≥ 1/(lambda*n)
    """
    grid = [float(c) for c in own_grid]
    c_ell, c_bar = _window(others, dist, c_ell, c_bar)

    payoffs = []
    for i, c in enumerate(grid):
        payoffs.append(expected_payoff(c, others, dist, a, p, method, resolution, c_ell, c_bar, seed).value)
        emit_progress(status_cb, "best_response", i + 1, len(grid), every = max(1, len(grid) // 10))

    at_star = expected_payoff(c_star, others, dist, a, p, method, resolution, c_ell, c_bar, seed).value
    best = int(np.argmax(payoffs))
    gap = max(0.0, payoffs[best] - at_star)
    relative_gap = gap / abs(at_star) if at_star != 0.0 else (0.0 if gap == 0.0 else math.inf)

    holds = xi(p).holds
    if not holds:
        emit(status_cb, {"type":"warning", "message":f"  best response: {PRECONDITION_STAMP} (xi ≥ 1/(lambda*n))"})
    return BestResponse(
        argmax = grid[best],
        max_payoff = payoffs[best],
        payoff_at_c_star = at_star,
        gap = gap,
        relative_gap = relative_gap,
        grid_size = len(grid),
        precondition_holds = holds,
        stamp = "" if holds else PRECONDITION_STAMP,
    )
