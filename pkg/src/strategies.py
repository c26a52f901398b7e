from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from models import StrategyKind, to_micro_credits
from scheduler import SchedulerBuffer

DEFAULT_GAMBLER_TOP_K = 20

# Greedy issuers outbid the current maximum by one whole credit.
GREEDY_INCREMENT = to_micro_credits(1.0)


@dataclass(frozen=True)
class BidDecision:
    bid: Optional[int]

    @classmethod
    def issue(cls, bid: int) -> 'BidDecision':
        return cls(bid=bid)

    @classmethod
    def abstain(cls) -> 'BidDecision':
        return cls(bid=None)

    @property
    def is_issue(self) -> bool:
        return self.bid is not None


def impatient_bid(balance: int) -> BidDecision:
    return BidDecision.issue(balance)


def greedy_bid(balance: int, view: Sequence[int]) -> BidDecision:
    target = max(view) + GREEDY_INCREMENT if view else 0
    if target <= balance:
        return BidDecision.issue(target)
    return BidDecision.abstain()


def gambler_bid(
    balance: int,
    view: Sequence[int],
    rng: np.random.Generator,
    top_k: int = DEFAULT_GAMBLER_TOP_K
) -> BidDecision:
    candidates = list(view)[:top_k]
    if not candidates:
        return BidDecision.issue(0)
    picked = candidates[int(rng.integers(len(candidates)))]
    return BidDecision.issue(min(picked, balance))


def opportunistic_bid() -> BidDecision:
    return BidDecision.issue(0)


def decide_bid(
    strategy: StrategyKind,
    balance: int,
    buffer: SchedulerBuffer,
    rng: np.random.Generator,
    gambler_top_k: int = DEFAULT_GAMBLER_TOP_K
) -> BidDecision:
    if strategy is StrategyKind.IMPATIENT:
        return impatient_bid(balance)
    if strategy is StrategyKind.GREEDY:
        return greedy_bid(balance, buffer.congestion_view(1))
    if strategy is StrategyKind.GAMBLER:
        return gambler_bid(balance, buffer.congestion_view(gambler_top_k), rng, gambler_top_k)
    return opportunistic_bid()
