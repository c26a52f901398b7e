import numpy as np
from models import Account, StrategyKind, CREDIT_UNIT
from scheduler import SchedulerBuffer
from strategies import BidDecision, decide_bid, gambler_bid, greedy_bid, impatient_bid, opportunistic_bid
from tokenomics import consume_credits

# chi-square critical value for 2 degrees of freedom at p = 0.001
CHI2_CRITICAL_DF2 = 13.816


def credits(value):
    return int(round(value * CREDIT_UNIT))


def should_bid_whole_balance_when_impatient():
    # Given balances of 42.5 and 0 credits
    # When bidding impatiently
    # Then the whole balance is bid
    assert impatient_bid(credits(42.5)) == BidDecision.issue(credits(42.5))
    assert impatient_bid(0) == BidDecision.issue(0)


def should_bid_zero_when_impatient_issuer_bids_twice_without_accrual():
    # Given an impatient account that just spent everything
    account = Account(id=0, tokens=10.0, credit_balance=credits(8))
    first = impatient_bid(account.credit_balance)
    consume_credits(account, first.bid)

    # When bidding again with no accrual in between
    second = impatient_bid(account.credit_balance)

    # Then the second bid is zero
    assert second.bid == 0


def should_outbid_buffer_maximum_by_one_credit_when_greedy_can_afford_it():
    # Given the buffer's top bid is 12 and the balance is 20
    # When bidding greedily
    decision = greedy_bid(credits(20), [credits(12)])

    # Then the bid is 13
    assert decision == BidDecision.issue(credits(13))


def should_abstain_when_greedy_cannot_afford_outbidding():
    # Given the buffer's top bid is 12 and the balance is 10
    # When bidding greedily
    decision = greedy_bid(credits(10), [credits(12)])

    # Then the issuer abstains
    assert not decision.is_issue
    assert decision.bid is None


def should_bid_zero_when_greedy_sees_empty_buffer():
    # Given an empty buffer and a balance of 5
    # When bidding greedily
    # Then the bid is zero
    assert greedy_bid(credits(5), []) == BidDecision.issue(0)


def should_copy_each_top_bid_equally_often_when_gambling():
    # Given a view of three bids
    view = [credits(30), credits(20), credits(10)]
    rng = np.random.default_rng(5)
    draws = 10_000

    # When gambling many times with ample balance
    picks = [gambler_bid(credits(100), view, rng).bid for _ in range(draws)]

    # Then every bid is chosen about a third of the time
    observed = np.array([picks.count(value) for value in view])
    expected = draws / 3
    chi2 = float(((observed - expected) ** 2 / expected).sum())
    assert observed.sum() == draws
    assert chi2 < CHI2_CRITICAL_DF2


def should_bid_zero_when_gambler_sees_empty_buffer(rng):
    # Given an empty view
    # When gambling
    # Then the bid is zero
    assert gambler_bid(credits(5), [], rng) == BidDecision.issue(0)


def should_clamp_gambler_bid_to_balance_when_pick_is_unaffordable(rng):
    # Given a view of [30] and a balance of 5
    # When gambling
    # Then the bid is clamped to 5
    assert gambler_bid(credits(5), [credits(30)], rng) == BidDecision.issue(credits(5))


def should_only_consider_top_k_when_view_is_longer(rng):
    # Given a 30-entry view and top_k=3
    view = [credits(v) for v in range(30, 0, -1)]

    # When gambling many times
    picks = {gambler_bid(credits(1000), view, rng, top_k=3).bid for _ in range(500)}

    # Then only the three largest bids are ever copied
    assert picks == {credits(30), credits(29), credits(28)}


def should_always_bid_zero_when_opportunistic():
    # Given any state
    # When bidding opportunistically repeatedly
    # Then every bid is zero
    assert all(opportunistic_bid() == BidDecision.issue(0) for _ in range(5))


def should_dispatch_by_strategy_when_deciding_bid(make_entry, rng):
    # Given a buffer whose top bid is 12 credits
    buffer = SchedulerBuffer(capacity=10, max_age=30_000_000)
    buffer.enqueue(make_entry(1, 12))
    buffer.enqueue(make_entry(2, 4))
    balance = credits(1_000_000)

    # When deciding for every strategy
    impatient = decide_bid(StrategyKind.IMPATIENT, balance, buffer, rng)
    greedy = decide_bid(StrategyKind.GREEDY, balance, buffer, rng)
    gambler = decide_bid(StrategyKind.GAMBLER, balance, buffer, rng)
    opportunistic = decide_bid(StrategyKind.OPPORTUNISTIC, balance, buffer, rng)

    # Then each strategy follows its own rule
    assert impatient.bid == balance
    assert greedy.bid == credits(13)
    assert gambler.bid in (credits(12), credits(4))
    assert opportunistic.bid == 0


def should_never_bid_above_balance_when_deciding_randomly(make_entry):
    # Given random buffers and balances
    rng = np.random.default_rng(17)
    for _ in range(500):
        buffer = SchedulerBuffer(capacity=50, max_age=30_000_000)
        for block_id in range(int(rng.integers(0, 30))):
            buffer.enqueue(make_entry(block_id, float(rng.uniform(0, 50))))
        balance = int(rng.integers(0, 60 * CREDIT_UNIT))

        # When every strategy decides
        for strategy in StrategyKind:
            decision = decide_bid(strategy, balance, buffer, rng)

            # Then any issued bid is affordable
            if decision.is_issue:
                assert 0 <= decision.bid <= balance
