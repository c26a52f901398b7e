import heapq
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from dag_ledger import ConfirmationState, DagView
from metrics import MetricsLog
from models import Account, BufferEntry, DagBlock, MetricRecord, RecordKind, TrafficProfile
from scheduler import EnqueueOutcome, SchedulerBuffer, priority_score
from sim_core import to_micros

logger = logging.getLogger(__name__)

MAX_TOPOLOGY_RETRIES = 10_000


@dataclass
class Topology:
    n: int
    adjacency: Dict[int, Set[int]]
    delays: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def neighbors(self, node: int) -> List[int]:
        return sorted(self.adjacency[node])

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def to_graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from((u, v) for u, peers in self.adjacency.items() for v in peers if u < v)
        return graph

    def is_connected(self) -> bool:
        return self.n <= 1 or nx.is_connected(self.to_graph())


def single_node_topology() -> Topology:
    return Topology(n=1, adjacency={0: set()})


def random_k_regular(n: int, k: int, rng: np.random.Generator, max_retries: int = MAX_TOPOLOGY_RETRIES) -> Topology:
    if (n * k) % 2 != 0:
        raise ValueError(f"No {k}-regular graph on {n} nodes exists: n * k must be even")
    if not 0 <= k < n:
        raise ValueError(f"Degree must satisfy 0 <= k < n, got k={k}, n={n}")
    if k == 0 and n > 1:
        raise ValueError(f"A 0-regular graph on {n} nodes cannot be connected")

    for attempt in range(1, max_retries + 1):
        edges = _try_pairing(n, k, rng)
        if edges is None:
            continue
        adjacency = {node: set() for node in range(n)}
        for u, v in edges:
            adjacency[u].add(v)
            adjacency[v].add(u)
        topology = Topology(n=n, adjacency=adjacency)
        if topology.is_connected():
            logger.debug(f"Built {k}-regular topology on {n} nodes after {attempt} attempt(s)")
            return topology

    raise RuntimeError(f"Could not build a simple connected {k}-regular graph on {n} nodes in {max_retries} attempts")


def _try_pairing(n: int, k: int, rng: np.random.Generator) -> Optional[Set[Tuple[int, int]]]:
    stubs = np.repeat(np.arange(n), k)
    rng.shuffle(stubs)
    edges = set()
    for s1, s2 in zip(stubs[0::2].tolist(), stubs[1::2].tolist()):
        if s1 > s2:
            s1, s2 = s2, s1
        if s1 == s2 or (s1, s2) in edges:
            return None
        edges.add((s1, s2))
    return edges


def sample_delays(topology: Topology, lo: float, hi: float, rng: np.random.Generator) -> Topology:
    if lo > hi:
        raise ValueError(f"Delay lower bound {lo} exceeds upper bound {hi}")
    topology.delays = {}
    for u in range(topology.n):
        for v in topology.neighbors(u):
            topology.delays[(u, v)] = to_micros(float(rng.uniform(lo, hi)))
    return topology


def generate_traffic(
    profile: TrafficProfile,
    accounts: Sequence[Account],
    scheduling_rate: float,
    rng_for: Callable[[int], np.random.Generator]
) -> Iterator[Tuple[int, int]]:
    # one Poisson process per account, restarted at every phase boundary
    total_tokens = sum(account.tokens for account in accounts)
    streams = [
        _account_arrivals(account.id, account.tokens / total_tokens, profile, scheduling_rate, rng_for(account.id))
        for account in accounts
    ]
    return heapq.merge(*streams)


def _account_arrivals(
    account_id: int,
    weight: float,
    profile: TrafficProfile,
    scheduling_rate: float,
    rng: np.random.Generator
) -> Iterator[Tuple[int, int]]:
    phase_start = 0
    for phase in profile.phases:
        phase_end = phase_start + phase.duration
        rate = phase.rate_multiplier * scheduling_rate * weight
        t = phase_start
        while rate > 0:
            t += max(1, to_micros(float(rng.exponential(1.0 / rate))))
            if t >= phase_end:
                break
            yield t, account_id
        phase_start = phase_end


@dataclass(frozen=True)
class ParentRequest:
    block_id: int
    provider: int


@dataclass
class NodeState:
    id: int
    buffer: SchedulerBuffer
    view: Optional[DagView] = None
    confirmation: Optional[ConfirmationState] = None
    accounts: List[Account] = field(default_factory=list)
    seen: Set[int] = field(default_factory=set)
    received_from: Dict[int, Optional[int]] = field(default_factory=dict)
    payloads: Dict[int, DagBlock] = field(default_factory=dict)
    solidifying: Dict[int, DagBlock] = field(default_factory=dict)
    waiting_on: Dict[int, Set[int]] = field(default_factory=dict)
    sent: Set[Tuple[int, int]] = field(default_factory=set)
    dropped: Set[int] = field(default_factory=set)
    requested: Set[int] = field(default_factory=set)
    parent_requests: List[ParentRequest] = field(default_factory=list)


@dataclass
class GossipOutcome:
    forwards: List[Tuple[int, int, DagBlock]] = field(default_factory=list)
    attached: List[int] = field(default_factory=list)
    dropped: List[BufferEntry] = field(default_factory=list)


def on_arrival(
    node: NodeState,
    block: DagBlock,
    now: int,
    log: MetricsLog,
    sender: Optional[int] = None
) -> List[BufferEntry]:
    """Score and enqueue a newly seen block. Returns every entry dropped as a result."""
    if block.id in node.seen:
        return []
    node.seen.add(block.id)
    node.received_from[block.id] = sender

    if node.view is not None:
        missing = node.view.missing_parents(block)
        if missing:
            _park(node, block, missing, sender)
            return []

    return _enqueue(node, block, now, log)


def on_parent_response(
    node: NodeState,
    block: DagBlock,
    provider: int,
    topology: Topology,
    now: int,
    log: MetricsLog
) -> GossipOutcome:
    # a requested parent was solid when dropped here, so it attaches without scheduling
    node.requested.discard(block.id)
    outcome = GossipOutcome()
    if block.id in node.view or block.id in node.solidifying or block.id in node.payloads:
        return outcome

    node.seen.add(block.id)
    node.dropped.discard(block.id)
    node.received_from.setdefault(block.id, provider)
    logger.debug(f"Node {node.id} solidified block {block.id} from node {provider}")
    _attach_and_release(node, block, topology, now, log, outcome)
    return outcome


def take_parent_requests(node: NodeState) -> List[ParentRequest]:
    requests, node.parent_requests = node.parent_requests, []
    return requests


def expire_stale(node: NodeState, now: int, log: MetricsLog) -> List[BufferEntry]:
    expired = node.buffer.expire_stale(now)
    for entry in expired:
        node.payloads.pop(entry.block_id, None)
        _note_drop(node, entry.block_id)
        log.record(MetricRecord(now, RecordKind.DROPPED_STALE, entry.block_id, node.id, entry.issuer,
                                credits=entry.credits_consumed))
    return expired


def _enqueue(node: NodeState, block: DagBlock, now: int, log: MetricsLog) -> List[BufferEntry]:
    dropped = expire_stale(node, now, log)
    entry = BufferEntry(
        block_id=block.id,
        score=priority_score(block.credits_consumed, block.work),
        arrival_time=now,
        work=block.work,
        credits_consumed=block.credits_consumed,
        issuer=block.issuer
    )
    result = node.buffer.enqueue(entry)

    if result.outcome is EnqueueOutcome.REJECTED:
        _note_drop(node, block.id)
        log.record(MetricRecord(now, RecordKind.DROPPED_REJECTED, block.id, node.id, block.issuer,
                                credits=block.credits_consumed))
        dropped.append(entry)
        return dropped

    if result.accepted:
        node.payloads[block.id] = block
        log.record(MetricRecord(now, RecordKind.ENQUEUED, block.id, node.id, block.issuer,
                                credits=block.credits_consumed))
    if result.dropped is not None:
        evicted = result.dropped
        node.payloads.pop(evicted.block_id, None)
        _note_drop(node, evicted.block_id)
        log.record(MetricRecord(now, RecordKind.DROPPED_FULL, evicted.block_id, node.id, evicted.issuer,
                                credits=evicted.credits_consumed))
        dropped.append(evicted)
    return dropped


def on_scheduled(node: NodeState, block: DagBlock, topology: Topology, now: int, log: MetricsLog) -> GossipOutcome:
    outcome = GossipOutcome()
    node.payloads.pop(block.id, None)
    if node.view is None:
        _flood(node, block, topology, now, outcome)
    else:
        _attach_and_release(node, block, topology, now, log, outcome)
    return outcome


def _attach_and_release(
    node: NodeState,
    block: DagBlock,
    topology: Topology,
    now: int,
    log: MetricsLog,
    outcome: GossipOutcome
) -> None:
    attached = node.view.attach(block).attached
    outcome.attached.extend(attached)
    _flood(node, block, topology, now, outcome)
    for attached_id in attached:
        for child in _solid_children(node, attached_id):
            outcome.dropped.extend(_enqueue(node, child, now, log))


def _flood(node: NodeState, block: DagBlock, topology: Topology, now: int, outcome: GossipOutcome) -> None:
    sender = node.received_from.get(block.id)
    for neighbor in topology.neighbors(node.id):
        if neighbor == sender or (block.id, neighbor) in node.sent:
            continue
        node.sent.add((block.id, neighbor))
        outcome.forwards.append((neighbor, now + topology.delays[(node.id, neighbor)], block))


def _park(node: NodeState, block: DagBlock, missing: List[int], provider: Optional[int]) -> None:
    node.solidifying[block.id] = block
    for parent in missing:
        node.waiting_on.setdefault(parent, set()).add(block.id)
        if parent in node.dropped:
            _request_parent(node, parent, provider)


def _note_drop(node: NodeState, block_id: int) -> None:
    node.dropped.add(block_id)
    waiting = node.waiting_on.get(block_id)
    if waiting:
        _request_parent(node, block_id, node.received_from.get(min(waiting)))


def _request_parent(node: NodeState, block_id: int, provider: Optional[int]) -> None:
    # whoever sent a waiting child holds all of its parents in its view
    if provider is None or block_id in node.requested:
        return
    node.requested.add(block_id)
    node.parent_requests.append(ParentRequest(block_id, provider))


def _solid_children(node: NodeState, parent_id: int) -> List[DagBlock]:
    released = []
    for child_id in sorted(node.waiting_on.pop(parent_id, ())):
        child = node.solidifying.get(child_id)
        if child is None or not node.view.is_solid(child):
            continue
        del node.solidifying[child_id]
        released.append(child)
    return released
