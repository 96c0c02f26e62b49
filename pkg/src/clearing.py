import math
from dataclasses import dataclass
from itertools import groupby
from typing import List, Optional, Sequence, Tuple

from src import config
from src.market_model import AuctionOutcome, BidPoint, MarketParams


class ClearingError(ValueError):
    """Raised when a bid set cannot be cleared under the linear stop-out rule."""


@dataclass(frozen=True)
class ClearingInput:
    bids: Sequence[BidPoint]
    params: MarketParams


def aggregate_demand(bids: Sequence[BidPoint]) -> float:
    """
    D(b): the exactly rounded sum of all submitted quantities.
    """
    if len(bids) < config.MIN_CLEARING_BIDS:
        raise ClearingError(f"at least {config.MIN_CLEARING_BIDS} bids are needed to clear, got {len(bids)}")
    return math.fsum(bid.quantity for bid in bids)


def stop_out_yield(D: float, p: MarketParams) -> float:
    """
    Linear stop-out rule: Theta - theta*D when the issuance is covered, 0 otherwise.
    """
    if D < 1.0:
        return 0.0
    if not p.Theta > p.theta * D:
        raise ClearingError(f"Theta={p.Theta} must exceed theta*D={p.theta * D}; the linear rule is undefined here")
    return p.Theta - p.theta * D


def _ration(bids: Sequence[BidPoint]) -> Tuple[List[float], Optional[float]]:
    """
    Fill the unit issuance from the lowest requested yield upwards. Bids tied at a yield form one group;
    the group at which supply runs out is prorated by quantity.
    @return: allocations in the order of `bids`, and the yield of the marginal group
    """
    order = sorted(range(len(bids)), key = lambda i: bids[i].yield_req)
    allocations = [0.0] * len(bids)
    remaining = 1.0
    marginal_yield = None

    for yield_req, members in groupby(order, key = lambda i: bids[i].yield_req):
        members = list(members)
        group_demand = math.fsum(bids[i].quantity for i in members)
        if group_demand <= remaining:
            for i in members:
                allocations[i] = bids[i].quantity
            remaining = 1.0 - math.fsum(allocations)
            if remaining <= 0.0:
                marginal_yield = yield_req
                break
            continue
        # marginal group: prorate what is left
        for i in members:
            allocations[i] = bids[i].quantity * remaining / group_demand
        marginal_yield = yield_req
        break

    if marginal_yield is None and order:
        marginal_yield = bids[order[-1]].yield_req
    return allocations, marginal_yield


def clear(clearing_input: ClearingInput) -> AuctionOutcome:
    """
    Run the uniform-price auction on one set of bids.
    Under-subscribed issues (D < 1) are not issued: zero stop-out, zero allocations.
    Otherwise quantities are rationed from the lowest requested yield up, with the marginal yield group
    prorated, and every winner receives the same stop-out yield Theta - theta*D.
    @param clearing_input: the bids and the market parameters
    @return: the auction outcome
    """
    # quantities are non-negative: BidPoint rejects anything else at construction
    bids = list(clearing_input.bids)
    p = clearing_input.params

    D = aggregate_demand(bids)
    bidder_ids = tuple(bid.bidder_id if bid.bidder_id is not None else i for i, bid in enumerate(bids))

    if D < 1.0:
        return AuctionOutcome(
            stop_out = 0.0,
            allocations = tuple(0.0 for _ in bids),
            issued = False,
            aggregate_demand = D,
            bidder_ids = bidder_ids,
        )

    stop_out = stop_out_yield(D, p)
    allocations, marginal_yield = _ration(bids)

    return AuctionOutcome(
        stop_out = stop_out,
        allocations = tuple(allocations),
        issued = True,
        aggregate_demand = D,
        bidder_ids = bidder_ids,
        marginal_yield = marginal_yield,
    )
