import bisect
import heapq
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from models import BufferEntry

logger = logging.getLogger(__name__)


def priority_score(credits: float, work: float) -> float:
    if work <= 0:
        raise ValueError(f"Block work must be positive, got {work}")
    return credits / work


class EnqueueOutcome(Enum):
    ACCEPTED = 'accepted'
    ACCEPTED_REPLACING = 'accepted_replacing'
    REJECTED = 'rejected'
    DUPLICATE = 'duplicate'


@dataclass
class EnqueueResult:
    outcome: EnqueueOutcome
    dropped: Optional[BufferEntry] = None

    @property
    def accepted(self) -> bool:
        return self.outcome in (EnqueueOutcome.ACCEPTED, EnqueueOutcome.ACCEPTED_REPLACING)


class SchedulerBuffer:
    """Bounded scheduling buffer ranked by Priority Score.

    Entries are ordered by (score desc, arrival asc, block_id asc). A second
    sorted index of consumed credits answers congestion views in O(k), and an
    arrival heap with lazy deletion finds stale entries without a full scan.
    """

    def __init__(self, capacity: int, max_age: int) -> None:
        if capacity < 1:
            raise ValueError(f"Buffer capacity must be at least 1, got {capacity}")
        self.capacity = capacity
        self.max_age = max_age
        self._entries: Dict[int, BufferEntry] = {}
        self._order: List[Tuple[float, int, int]] = []
        self._credits: List[int] = []
        self._arrivals: List[Tuple[int, int]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, block_id: int) -> bool:
        return block_id in self._entries

    def entries(self) -> List[BufferEntry]:
        return [self._entries[key[2]] for key in self._order]

    def minimum(self) -> Optional[BufferEntry]:
        if not self._order:
            return None
        return self._entries[self._order[-1][2]]

    def enqueue(self, entry: BufferEntry) -> EnqueueResult:
        if entry.block_id in self._entries:
            return EnqueueResult(EnqueueOutcome.DUPLICATE)

        if len(self._entries) < self.capacity:
            self._insert(entry)
            return EnqueueResult(EnqueueOutcome.ACCEPTED)

        lowest_key = self._order[-1]
        if entry.order_key < lowest_key:
            dropped = self._remove(lowest_key[2])
            self._insert(entry)
            return EnqueueResult(EnqueueOutcome.ACCEPTED_REPLACING, dropped)

        return EnqueueResult(EnqueueOutcome.REJECTED)

    def expire_stale(self, now: int) -> List[BufferEntry]:
        expired = []
        while self._arrivals and now - self._arrivals[0][0] > self.max_age:
            arrival_time, block_id = heapq.heappop(self._arrivals)
            entry = self._entries.get(block_id)
            if entry is not None and entry.arrival_time == arrival_time:
                expired.append(self._remove(block_id))
        return expired

    def next_batch(self, m: float) -> List[BufferEntry]:
        if m <= 0:
            raise ValueError(f"Batch work budget must be positive, got {m}")
        batch = []
        budget_used = 0.0
        while self._order:
            head = self._entries[self._order[0][2]]
            # the head is never skipped, even if a smaller block further down would fit
            if budget_used + head.work > m:
                break
            batch.append(self._remove(head.block_id))
            budget_used += head.work
        return batch

    def congestion_view(self, k: int) -> List[int]:
        if k < 1:
            raise ValueError(f"Congestion view size must be at least 1, got {k}")
        return self._credits[:-k - 1:-1]

    def _insert(self, entry: BufferEntry) -> None:
        self._entries[entry.block_id] = entry
        bisect.insort(self._order, entry.order_key)
        bisect.insort(self._credits, entry.credits_consumed)
        heapq.heappush(self._arrivals, (entry.arrival_time, entry.block_id))

    def _remove(self, block_id: int) -> BufferEntry:
        entry = self._entries.pop(block_id)
        del self._order[bisect.bisect_left(self._order, entry.order_key)]
        del self._credits[bisect.bisect_left(self._credits, entry.credits_consumed)]
        if not self._entries:
            self._arrivals.clear()
        return entry
