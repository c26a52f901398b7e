from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, List, Optional, Tuple

# Credits are tracked as integer micro-credits.
CREDIT_UNIT = 1_000_000

GENESIS_ID = 0


def to_micro_credits(credits: float) -> int:
    return int(round(credits * CREDIT_UNIT))


def to_credits(micro_credits: int) -> float:
    return micro_credits / CREDIT_UNIT


class StrategyKind(Enum):
    IMPATIENT = 'impatient'
    GREEDY = 'greedy'
    GAMBLER = 'gambler'
    OPPORTUNISTIC = 'opportunistic'


class GenerationMode(Enum):
    LINEAR = 'linear'
    CONCAVE = 'concave'


class RecordKind(Enum):
    ISSUED = 'Issued'
    ENQUEUED = 'Enqueued'
    SCHEDULED = 'Scheduled'
    DROPPED_FULL = 'DroppedFull'
    DROPPED_STALE = 'DroppedStale'
    DROPPED_REJECTED = 'DroppedRejected'
    DISSEMINATED = 'Disseminated'
    LOCALLY_CONFIRMED = 'LocallyConfirmed'
    CONFIRMED = 'Confirmed'


@dataclass
class Account:
    id: int
    tokens: float
    strategy: StrategyKind = StrategyKind.OPPORTUNISTIC
    credit_balance: int = 0
    last_generation_time: int = 0
    hold_start: int = 0
    node_id: int = 0
    # generation times of payloads waiting to be issued
    mempool: Deque[int] = field(default_factory=deque)
    accrued: int = 0
    consumed: int = 0
    reimbursed: int = 0
    abstentions: int = 0
    abandoned: int = 0


@dataclass
class CreditGenParams:
    mode: GenerationMode = GenerationMode.LINEAR
    rate: float = 0.1
    gamma: float = 0.01
    cap_scale: float = 10.0


@dataclass
class SchedulerParams:
    tau: int
    m: float

    @property
    def throughput(self) -> float:
        # work units per second
        return self.m * 1_000_000 / self.tau


@dataclass(frozen=True)
class DagBlock:
    id: int
    issuer: int
    parents: Tuple[int, ...]
    issue_timestamp: int
    work: float = 1.0
    credits_consumed: int = 0


@dataclass(slots=True)
class BufferEntry:
    block_id: int
    score: float
    arrival_time: int
    work: float
    credits_consumed: int
    issuer: int = -1

    @property
    def order_key(self) -> Tuple[float, int, int]:
        return (-self.score, self.arrival_time, self.block_id)


@dataclass(slots=True, frozen=True)
class MetricRecord:
    time: int
    kind: RecordKind
    block_id: int
    node_id: int
    account_id: int
    credits: Optional[int] = None
    sojourn: Optional[int] = None


@dataclass
class TrafficPhase:
    duration: int
    rate_multiplier: float


@dataclass
class TrafficProfile:
    phases: List[TrafficPhase] = field(default_factory=list)

    @property
    def total_duration(self) -> int:
        return sum(phase.duration for phase in self.phases)

    def boundaries(self) -> List[int]:
        starts = []
        t = 0
        for phase in self.phases:
            starts.append(t)
            t += phase.duration
        return starts
