import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from config import ScenarioConfig
from dag_ledger import ConfirmationState, DagView, update_confirmations
from metrics import LedgerObserver, MetricsLog
from models import (
    Account, BufferEntry, CreditGenParams, DagBlock, GenerationMode, MetricRecord, RecordKind,
    SchedulerParams, StrategyKind, TrafficPhase, TrafficProfile
)
from network import (
    GossipOutcome, NodeState, Topology, expire_stale, generate_traffic, on_arrival, on_parent_response,
    on_scheduled, random_k_regular, sample_delays, single_node_topology, take_parent_requests
)
from scheduler import SchedulerBuffer
from sim_core import Event, EventKind, SimulationEngine, to_micros, to_seconds
from strategies import decide_bid
from tokenomics import accrue_credits, consume_credits, reimburse_credits, sample_token_distribution

logger = logging.getLogger(__name__)


def assign_strategies(n: int, fractions: Dict[str, float], rng: np.random.Generator) -> List[StrategyKind]:
    # largest-remainder split, then a shuffle of who gets what
    kinds = [kind for kind in StrategyKind if fractions.get(kind.value, 0) > 0]
    exact = [fractions[kind.value] * n for kind in kinds]
    counts = [int(np.floor(x)) for x in exact]
    by_remainder = sorted(range(len(kinds)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in by_remainder[:n - sum(counts)]:
        counts[i] += 1
    assignment = [kind for kind, count in zip(kinds, counts) for _ in range(count)]
    return [assignment[i] for i in rng.permutation(n)]


@dataclass
class SimulationResult:
    config: ScenarioConfig
    log: MetricsLog
    accounts: List[Account]
    nodes: List[NodeState]
    topology: Topology
    observer: Optional[LedgerObserver]
    end_time: int

    @property
    def scheduling_rate(self) -> float:
        return self.config.scheduling_rate


class AccessSimulation:
    def __init__(self, config: ScenarioConfig) -> None:
        self.config = config
        self.log = MetricsLog()
        self.engine = SimulationEngine(seed=config.seed, log=self.log)
        self.rng = self.engine.rng

        self.credit_params = CreditGenParams(
            mode=GenerationMode(config.credit.mode),
            rate=config.credit.rate,
            gamma=config.credit.gamma,
            cap_scale=config.credit.cap_scale
        )
        self.scheduler_params = SchedulerParams(tau=to_micros(config.scheduler.tau), m=config.scheduler.m)
        self.end_time = to_micros(config.duration)

        self.accounts = self._build_accounts()
        self.topology, self.nodes = self._build_network()
        self.observer = LedgerObserver(self.log, len(self.nodes)) if config.is_multi_node else None
        self.profile = TrafficProfile([
            TrafficPhase(to_micros(phase['duration']), phase['rate_multiplier'])
            for phase in config.traffic.phases
        ])
        self._traffic: Iterator[Tuple[int, int]] = generate_traffic(
            self.profile, self.accounts, config.scheduling_rate,
            lambda account_id: self.rng.get(f'traffic/account/{account_id}')
        )
        self._next_block_id = 1
        self._backlogged: Set[int] = set()

        self.engine.register(EventKind.BLOCK_GENERATED, self._on_block_generated)
        self.engine.register(EventKind.ISSUE_RETRY, self._on_issue_retry)
        self.engine.register(EventKind.SCHEDULER_TICK, self._on_scheduler_tick)
        self.engine.register(EventKind.BLOCK_ARRIVAL, self._on_block_arrival)
        self.engine.register(EventKind.TRAFFIC_PHASE_CHANGE, self._on_phase_change)
        self.engine.register(EventKind.METRIC_SAMPLE, self._on_metric_sample)
        self.engine.register(EventKind.PARENT_RESPONSE, self._on_parent_response)

    def run(self) -> SimulationResult:
        logger.info(
            f"Running '{self.config.name}' ({self.config.mode}) for {self.config.duration:g}s "
            f"with {len(self.accounts)} accounts on {len(self.nodes)} node(s), seed {self.config.seed}"
        )
        self._schedule_initial_events()
        self.engine.run_until(self.end_time)

        for account in self.accounts:
            accrue_credits(account, self.end_time, self.credit_params)

        logger.info(f"Processed {self.engine.processed} events, {len(self.log)} metric records")
        return SimulationResult(
            config=self.config,
            log=self.log,
            accounts=self.accounts,
            nodes=self.nodes,
            topology=self.topology,
            observer=self.observer,
            end_time=self.end_time
        )

    def _build_accounts(self) -> List[Account]:
        cfg = self.config
        tokens = sample_token_distribution(cfg.accounts.n, cfg.accounts.alpha, cfg.accounts.x_min,
                                           self.rng.get('tokens'))
        if cfg.strategies.assignment is not None:
            strategies = [StrategyKind(name) for name in cfg.strategies.assignment]
        else:
            strategies = assign_strategies(cfg.accounts.n, cfg.strategies.fractions, self.rng.get('strategies'))

        return [
            Account(
                id=i,
                tokens=float(tokens[i]),
                strategy=strategies[i],
                node_id=i if cfg.is_multi_node else 0
            )
            for i in range(cfg.accounts.n)
        ]

    def _build_network(self) -> Tuple[Topology, List[NodeState]]:
        cfg = self.config
        max_age = to_micros(cfg.scheduler.max_age)
        if not cfg.is_multi_node:
            node = NodeState(id=0, buffer=SchedulerBuffer(cfg.scheduler.capacity, max_age), accounts=self.accounts)
            return single_node_topology(), [node]

        topology = random_k_regular(cfg.network.n_nodes, cfg.network.k, self.rng.get('topology'))
        sample_delays(topology, cfg.network.delay_lo, cfg.network.delay_hi, self.rng.get('delays'))
        nodes = [
            NodeState(
                id=node_id,
                buffer=SchedulerBuffer(cfg.scheduler.capacity, max_age),
                view=DagView(),
                confirmation=ConfirmationState(cfg.dag.cw_threshold),
                accounts=[self.accounts[node_id]]
            )
            for node_id in range(cfg.network.n_nodes)
        ]
        return topology, nodes

    def _schedule_initial_events(self) -> None:
        for index, start in enumerate(self.profile.boundaries()):
            self.engine.schedule(start, EventKind.TRAFFIC_PHASE_CHANGE, index)
        if self.profile.total_duration < self.end_time:
            self.engine.schedule(self.profile.total_duration, EventKind.TRAFFIC_PHASE_CHANGE, len(self.profile.phases))

        self._schedule_next_generation()
        for node in self.nodes:
            self.engine.schedule(self.scheduler_params.tau, EventKind.SCHEDULER_TICK, node.id)
        self.engine.schedule(to_micros(self.config.strategies.retry_interval), EventKind.ISSUE_RETRY)
        self.engine.schedule(0, EventKind.METRIC_SAMPLE)

    def _schedule_next_generation(self) -> None:
        upcoming = next(self._traffic, None)
        if upcoming is not None:
            fire_at, account_id = upcoming
            self.engine.schedule(fire_at, EventKind.BLOCK_GENERATED, account_id)

    def _on_block_generated(self, event: Event) -> None:
        account = self.accounts[event.payload]
        account.mempool.append(self.engine.now)
        self._try_issue(account)
        self._schedule_next_generation()

    def _on_issue_retry(self, event: Event) -> None:
        for account_id in sorted(self._backlogged):
            self._try_issue(self.accounts[account_id])
        self.engine.schedule(self.engine.now + to_micros(self.config.strategies.retry_interval),
                             EventKind.ISSUE_RETRY)

    def _try_issue(self, account: Account) -> None:
        # at most one payload per attempt; an abstention keeps it queued
        now = self.engine.now
        self._abandon_expired(account, now)
        if not account.mempool:
            self._backlogged.discard(account.id)
            return
        node = self.nodes[account.node_id]
        self._settle(node, expire_stale(node, now, self.log))
        accrue_credits(account, now, self.credit_params)

        decision = decide_bid(
            account.strategy,
            account.credit_balance,
            node.buffer,
            self.rng.get(f'bids/account/{account.id}'),
            self.config.strategies.gambler_top_k
        )
        if not decision.is_issue:
            account.abstentions += 1
            self._backlogged.add(account.id)
            return

        consume_credits(account, decision.bid)
        account.mempool.popleft()
        if account.mempool:
            self._backlogged.add(account.id)
        else:
            self._backlogged.discard(account.id)

        parents: Sequence[int] = ()
        if node.view is not None:
            parents = node.view.select_tips(
                self.config.dag.parents_k, now, self.rng.get(f'tips/node/{node.id}'),
                to_micros(self.config.dag.tip_freshness)
            )
        block = DagBlock(
            id=self._next_block_id,
            issuer=account.id,
            parents=tuple(parents),
            issue_timestamp=now,
            work=self.config.traffic.block_work,
            credits_consumed=decision.bid
        )
        self._next_block_id += 1

        self.log.record(MetricRecord(now, RecordKind.ISSUED, block.id, node.id, account.id, credits=block.credits_consumed))
        if self.observer is not None:
            self.observer.on_issued(block)
        self._settle(node, on_arrival(node, block, now, self.log))

    def _abandon_expired(self, account: Account, now: int) -> None:
        max_age = to_micros(self.config.strategies.mempool_max_age)
        while account.mempool and now - account.mempool[0] > max_age:
            generated = account.mempool.popleft()
            account.abandoned += 1
            logger.debug(f"Account {account.id} abandoned a payload generated at {to_seconds(generated):.3f}s")

    def _on_scheduler_tick(self, event: Event) -> None:
        now = self.engine.now
        node = self.nodes[event.payload]
        self._settle(node, expire_stale(node, now, self.log))

        attached_any = False
        for entry in node.buffer.next_batch(self.scheduler_params.m):
            block = node.payloads[entry.block_id]
            self.log.record(MetricRecord(now, RecordKind.SCHEDULED, block.id, node.id, block.issuer,
                                         credits=block.credits_consumed, sojourn=now - entry.arrival_time))
            outcome = on_scheduled(node, block, self.topology, now, self.log)
            attached_any = self._apply_gossip(node, outcome) or attached_any

        if attached_any:
            self._confirm(node)
        self.engine.schedule(now + self.scheduler_params.tau, EventKind.SCHEDULER_TICK, node.id)

    def _on_block_arrival(self, event: Event) -> None:
        node_id, block, sender = event.payload
        node = self.nodes[node_id]
        self._settle(node, on_arrival(node, block, self.engine.now, self.log, sender))

    def _on_parent_response(self, event: Event) -> None:
        node_id, block, provider = event.payload
        node = self.nodes[node_id]
        outcome = on_parent_response(node, block, provider, self.topology, self.engine.now, self.log)
        if self._apply_gossip(node, outcome):
            self._confirm(node)

    def _on_phase_change(self, event: Event) -> None:
        index = event.payload
        now_s = to_seconds(self.engine.now)
        if index >= len(self.profile.phases):
            logger.info(f"t={now_s:.0f}s traffic stopped, draining buffers")
            return
        phase = self.profile.phases[index]
        logger.info(
            f"t={now_s:.0f}s phase {index + 1}/{len(self.profile.phases)}: "
            f"{phase.rate_multiplier:g}x scheduling rate for {to_seconds(phase.duration):g}s"
        )

    def _on_metric_sample(self, event: Event) -> None:
        now = self.engine.now
        for node in self.nodes:
            self.log.sample_occupancy(now, node.id, len(node.buffer))
        self.engine.schedule(now + to_micros(self.config.metrics.sample_interval), EventKind.METRIC_SAMPLE)

    def _apply_gossip(self, node: NodeState, outcome: GossipOutcome) -> bool:
        now = self.engine.now
        for neighbor, fire_at, forwarded in outcome.forwards:
            self.engine.schedule(fire_at, EventKind.BLOCK_ARRIVAL, (neighbor, forwarded, node.id))
        if self.observer is not None:
            for block_id in outcome.attached:
                self.observer.on_attached(block_id, now)
        self._settle(node, outcome.dropped)
        return bool(outcome.attached)

    def _confirm(self, node: NodeState) -> None:
        for block_id in update_confirmations(node.view, node.confirmation):
            self.observer.on_locally_confirmed(block_id, node.id, self.engine.now)

    def _settle(self, node: NodeState, dropped: List[BufferEntry]) -> None:
        self._send_parent_requests(node)
        if not dropped or not self.config.credit.reimburse_on_drop:
            return
        for entry in dropped:
            issuer = self.accounts[entry.issuer]
            # blocks only leave their origin once scheduled there, so a drop at
            # the origin means no node will ever schedule the block
            if issuer.node_id == node.id:
                reimburse_credits(issuer, entry.credits_consumed)
                logger.debug(f"Reimbursed {entry.credits_consumed} micro-credits to account {issuer.id}")

    def _send_parent_requests(self, node: NodeState) -> None:
        now = self.engine.now
        for request in take_parent_requests(node):
            provider = self.nodes[request.provider]
            block = provider.view.blocks[request.block_id]
            round_trip = self.topology.delays[(node.id, provider.id)] + self.topology.delays[(provider.id, node.id)]
            self.engine.schedule(now + round_trip, EventKind.PARENT_RESPONSE, (node.id, block, provider.id))


def run_simulation(config: ScenarioConfig) -> SimulationResult:
    return AccessSimulation(config).run()
