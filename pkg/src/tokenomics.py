import logging
import math
from typing import Tuple

import numpy as np

from models import Account, CreditGenParams, GenerationMode, CREDIT_UNIT

logger = logging.getLogger(__name__)


class InsufficientCreditError(Exception):
    def __init__(self, account_id: int, amount: int, balance: int) -> None:
        super().__init__(
            f"Account {account_id} cannot consume {amount / CREDIT_UNIT:.6f} credits "
            f"with a balance of {balance / CREDIT_UNIT:.6f}"
        )
        self.account_id = account_id
        self.amount = amount
        self.balance = balance


def sample_token_distribution(n: int, alpha: float, x_min: float, rng: np.random.Generator) -> np.ndarray:
    """Draw n token holdings from the power law p(x) ~ (x / x_min)^-alpha, x >= x_min."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if alpha <= 1:
        raise ValueError(f"alpha must be greater than 1, got {alpha}")
    if x_min <= 0:
        raise ValueError(f"x_min must be positive, got {x_min}")
    return power_law_inverse_cdf(rng.random(n), alpha, x_min)


def power_law_inverse_cdf(u, alpha: float, x_min: float):
    return x_min * np.power(1.0 - np.asarray(u, dtype=float), -1.0 / (alpha - 1.0))


def power_law_cdf(x, alpha: float, x_min: float):
    x = np.asarray(x, dtype=float)
    return np.where(x < x_min, 0.0, 1.0 - np.power(x / x_min, 1.0 - alpha))


def generated_credits(tokens: float, held_micros: int, params: CreditGenParams) -> int:
    # accrual is always a difference of two values of this function
    if held_micros <= 0:
        return 0
    if params.mode is GenerationMode.LINEAR:
        # tokens * (credits/token/s) * seconds * CREDIT_UNIT == tokens * rate * micros
        return int(round(tokens * params.rate * held_micros))
    held_seconds = held_micros / 1_000_000
    fraction = -math.expm1(-params.gamma * held_seconds)
    return int(round(tokens * params.cap_scale * fraction * CREDIT_UNIT))


def accrue_credits(acct: Account, now: int, params: CreditGenParams) -> Account:
    if now < acct.last_generation_time:
        raise ValueError(
            f"Account {acct.id} accrual at {now}us precedes last generation at {acct.last_generation_time}us"
        )
    gained = (generated_credits(acct.tokens, now - acct.hold_start, params)
              - generated_credits(acct.tokens, acct.last_generation_time - acct.hold_start, params))
    acct.credit_balance += gained
    acct.accrued += gained
    acct.last_generation_time = now
    return acct


def consume_credits(acct: Account, amount: int) -> Account:
    if amount < 0:
        raise ValueError(f"Cannot consume a negative amount ({amount})")
    if amount > acct.credit_balance:
        raise InsufficientCreditError(acct.id, amount, acct.credit_balance)
    acct.credit_balance -= amount
    acct.consumed += amount
    return acct


def reimburse_credits(acct: Account, amount: int) -> Account:
    if amount < 0:
        raise ValueError(f"Cannot reimburse a negative amount ({amount})")
    acct.credit_balance += amount
    acct.reimbursed += amount
    return acct


def allotment_balance(tokens: float, hold_time: float, per_allot_cost: float, gamma: float, n: int) -> float:
    f = -math.expm1(-gamma * hold_time / n)
    return tokens * n * f - n * per_allot_cost


def optimal_allot_count(
    tokens: float,
    hold_time: float,
    per_allot_cost: float,
    gamma: float,
    n_max: int
) -> Tuple[int, float]:
    if min(tokens, hold_time, gamma) <= 0 or per_allot_cost < 0 or n_max < 1:
        raise ValueError("tokens, hold_time, gamma and n_max must be positive and per_allot_cost non-negative")

    best_n = 1
    best_value = allotment_balance(tokens, hold_time, per_allot_cost, gamma, 1)
    for n in range(2, n_max + 1):
        value = allotment_balance(tokens, hold_time, per_allot_cost, gamma, n)
        # strict comparison keeps the smaller n on ties
        if value > best_value:
            best_n, best_value = n, value
    return best_n, best_value
