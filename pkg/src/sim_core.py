import hashlib
import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

MICROS_PER_SECOND = 1_000_000


def to_micros(seconds: float) -> int:
    return int(round(seconds * MICROS_PER_SECOND))


def to_seconds(micros: int) -> float:
    return micros / MICROS_PER_SECOND


class SchedulingError(RuntimeError):
    pass


class EventKind(Enum):
    BLOCK_GENERATED = 'BlockGenerated'
    SCHEDULER_TICK = 'SchedulerTick'
    BLOCK_ARRIVAL = 'BlockArrival'
    TRAFFIC_PHASE_CHANGE = 'TrafficPhaseChange'
    METRIC_SAMPLE = 'MetricSample'
    ISSUE_RETRY = 'IssueRetry'
    PARENT_RESPONSE = 'ParentResponse'


@dataclass
class Event:
    fire_at: int
    kind: EventKind
    payload: Any = None
    sequence: int = -1


class EventQueue:
    # equal timestamps fire in insertion order

    def __init__(self) -> None:
        self._heap: List[Tuple[int, int, Event]] = []
        self._next_sequence = 0

    def push(self, event: Event) -> Event:
        event.sequence = self._next_sequence
        self._next_sequence += 1
        heapq.heappush(self._heap, (event.fire_at, event.sequence, event))
        return event

    def pop(self) -> Event:
        return heapq.heappop(self._heap)[2]

    def peek_time(self) -> Optional[int]:
        if not self._heap:
            return None
        return self._heap[0][0]

    def __len__(self) -> int:
        return len(self._heap)


class RngStreams:
    """Independent numpy generators keyed by a stream label.

    Each stream is seeded from (seed, sha256(label)), so draws on one stream
    never shift another stream's sequence.
    """

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._streams: Dict[str, np.random.Generator] = {}

    def get(self, stream_id: str) -> np.random.Generator:
        stream = self._streams.get(stream_id)
        if stream is None:
            stream = np.random.default_rng(self._seed_sequence(stream_id))
            self._streams[stream_id] = stream
        return stream

    def _seed_sequence(self, stream_id: str) -> np.random.SeedSequence:
        digest = hashlib.sha256(stream_id.encode('utf-8')).digest()
        label_words = [int.from_bytes(digest[i:i + 4], 'little') for i in range(0, 16, 4)]
        return np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *label_words])


Handler = Callable[[Event], None]


@dataclass
class SimulationEngine:

    seed: int = 42
    log: Any = None
    now: int = 0
    queue: EventQueue = field(default_factory=EventQueue)
    handlers: Dict[EventKind, Handler] = field(default_factory=dict)
    processed: int = 0

    def __post_init__(self) -> None:
        self.rng = RngStreams(self.seed)

    def register(self, kind: EventKind, handler: Handler) -> None:
        self.handlers[kind] = handler

    def schedule_event(self, event: Event) -> Event:
        if event.fire_at < self.now:
            raise SchedulingError(
                f"Cannot schedule {event.kind.value} at {event.fire_at}us, clock is already at {self.now}us"
            )
        return self.queue.push(event)

    def schedule(self, fire_at: int, kind: EventKind, payload: Any = None) -> Event:
        return self.schedule_event(Event(fire_at=fire_at, kind=kind, payload=payload))

    def run_until(self, end: int) -> Any:
        while True:
            next_time = self.queue.peek_time()
            if next_time is None or next_time > end:
                break
            event = self.queue.pop()
            self.now = event.fire_at
            handler = self.handlers.get(event.kind)
            if handler is None:
                logger.debug(f"No handler for {event.kind.value}, event dropped")
                continue
            handler(event)
            self.processed += 1
        self.now = max(self.now, end)
        return self.log
