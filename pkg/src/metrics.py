import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models import Account, DagBlock, MetricRecord, RecordKind, StrategyKind, to_credits
from sim_core import to_seconds

logger = logging.getLogger(__name__)

Series = List[Tuple[float, float]]

DROP_KINDS = (RecordKind.DROPPED_FULL, RecordKind.DROPPED_STALE, RecordKind.DROPPED_REJECTED)


class MetricsLog:
    def __init__(self) -> None:
        self.records: List[MetricRecord] = []
        self.occupancy: Dict[int, List[Tuple[int, int]]] = defaultdict(list)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, rec: MetricRecord) -> None:
        self.records.append(rec)

    def sample_occupancy(self, time: int, node_id: int, size: int) -> None:
        self.occupancy[node_id].append((time, size))

    def sorted_records(self) -> List[MetricRecord]:
        # sorted() is stable, so records sharing a timestamp keep insertion order
        return sorted(self.records, key=lambda rec: rec.time)

    def of_kind(self, kind: RecordKind) -> List[MetricRecord]:
        return [rec for rec in self.records if rec.kind is kind]

    def count(self, kind: RecordKind) -> int:
        return sum(1 for rec in self.records if rec.kind is kind)


def record(log: MetricsLog, rec: MetricRecord) -> None:
    log.record(rec)


class LedgerObserver:
    # a node has seen a block once it attaches it

    def __init__(self, log: MetricsLog, n_nodes: int) -> None:
        self.log = log
        self.n_nodes = n_nodes
        self.issued: Dict[int, DagBlock] = {}
        self._attached = defaultdict(int)
        self._confirmed = defaultdict(int)
        self.disseminated_at: Dict[int, int] = {}
        self.confirmed_at: Dict[int, int] = {}

    def on_issued(self, block: DagBlock) -> None:
        self.issued[block.id] = block

    def on_attached(self, block_id: int, now: int) -> None:
        block = self.issued.get(block_id)
        if block is None:
            return
        self._attached[block_id] += 1
        if self._attached[block_id] == self.n_nodes:
            self.disseminated_at[block_id] = now
            self.log.record(MetricRecord(now, RecordKind.DISSEMINATED, block_id, -1, block.issuer,
                                         credits=block.credits_consumed))

    def on_locally_confirmed(self, block_id: int, node_id: int, now: int) -> None:
        block = self.issued.get(block_id)
        if block is None:
            return
        self.log.record(MetricRecord(now, RecordKind.LOCALLY_CONFIRMED, block_id, node_id, block.issuer))
        self._confirmed[block_id] += 1
        if self._confirmed[block_id] == self.n_nodes:
            self.confirmed_at[block_id] = now
            self.log.record(MetricRecord(now, RecordKind.CONFIRMED, block_id, -1, block.issuer,
                                         credits=block.credits_consumed))

    def dissemination_latencies(self, issuers: Optional[Iterable[int]] = None) -> List[float]:
        wanted = None if issuers is None else set(issuers)
        return [
            to_seconds(t - self.issued[block_id].issue_timestamp)
            for block_id, t in sorted(self.disseminated_at.items())
            if wanted is None or self.issued[block_id].issuer in wanted
        ]


def moving_average(series: Sequence[Tuple[float, float]], window: float) -> Series:
    if window <= 0:
        raise ValueError(f"Moving-average window must be positive, got {window}")
    if not series:
        return []
    ordered = sorted(series, key=lambda point: point[0])
    times = np.array([point[0] for point in ordered], dtype=float)
    values = np.array([point[1] for point in ordered], dtype=float)
    cumulative = np.concatenate([[0.0], np.cumsum(values)])
    hi = np.searchsorted(times, times, side='right')
    lo = np.searchsorted(times, times - window, side='right')
    means = (cumulative[hi] - cumulative[lo]) / (hi - lo)
    return list(zip(times.tolist(), means.tolist()))


def latency_cdf(latencies: Sequence[float]) -> Series:
    if len(latencies) == 0:
        return []
    values, counts = np.unique(np.asarray(latencies, dtype=float), return_counts=True)
    fractions = np.cumsum(counts) / counts.sum()
    return list(zip(values.tolist(), fractions.tolist()))


def windowed_rate(
    event_times: Sequence[float],
    window: float,
    step: float = 1.0,
    end: Optional[float] = None,
    fair_share: Optional[float] = None
) -> Series:
    # events per second in (t - window, t]; dividing by fair_share gives the scaled rate
    if window <= 0:
        raise ValueError(f"Rate window must be positive, got {window}")
    times = np.sort(np.asarray(event_times, dtype=float))
    if end is None:
        if times.size == 0:
            return []
        end = float(times[-1])
    grid = np.arange(1, int(np.floor(end / step + 1e-9)) + 1) * step
    counts = np.searchsorted(times, grid, side='right') - np.searchsorted(times, grid - window, side='right')
    rates = counts / window
    if fair_share is not None:
        rates = rates / fair_share
    return list(zip(grid.tolist(), rates.tolist()))


def fair_shares(accounts: Sequence[Account], scheduling_rate: float) -> Dict[int, float]:
    total_tokens = sum(account.tokens for account in accounts)
    return {account.id: scheduling_rate * account.tokens / total_tokens for account in accounts}


@dataclass
class SeriesSettings:
    rate_window: float = 10.0
    ma_window: float = 10.0
    step: float = 1.0


def derive_series(
    log: MetricsLog,
    accounts: Sequence[Account],
    scheduling_rate: float,
    end: float,
    settings: SeriesSettings,
    observer: Optional[LedgerObserver] = None
) -> Dict[str, Series]:
    by_id = {account.id: account for account in accounts}
    series: Dict[str, Series] = {}

    issued_times = [to_seconds(rec.time) for rec in log.records if rec.kind is RecordKind.ISSUED]
    series['traffic_load'] = windowed_rate(issued_times, settings.rate_window, settings.step, end)

    origin_scheduled = [
        rec for rec in log.records
        if rec.kind is RecordKind.SCHEDULED and rec.node_id == by_id[rec.account_id].node_id
    ]
    series['credits_ma'] = moving_average(
        [(to_seconds(rec.time), to_credits(rec.credits)) for rec in origin_scheduled], settings.ma_window)
    series['sojourn_ma'] = moving_average(
        [(to_seconds(rec.time), to_seconds(rec.sojourn)) for rec in origin_scheduled], settings.ma_window)

    strategies_present = sorted({account.strategy for account in accounts}, key=lambda s: s.value)
    for strategy in strategies_present:
        series[f'sojourn_ma_{strategy.value}'] = moving_average(
            [(to_seconds(rec.time), to_seconds(rec.sojourn)) for rec in origin_scheduled
             if by_id[rec.account_id].strategy is strategy],
            settings.ma_window)

    for node_id, samples in sorted(log.occupancy.items()):
        name = 'buffer_occupancy' if len(log.occupancy) == 1 else f'buffer_occupancy_node{node_id:02d}'
        series[name] = [(to_seconds(t), float(size)) for t, size in samples]

    ranked = sorted((account.tokens for account in accounts), reverse=True)
    series['token_distribution'] = [(float(rank), tokens) for rank, tokens in enumerate(ranked, start=1)]

    if observer is None:
        return series

    disseminated = [rec for rec in log.records if rec.kind is RecordKind.DISSEMINATED]
    confirmed = [rec for rec in log.records if rec.kind is RecordKind.CONFIRMED]
    series['dissemination_rate'] = windowed_rate(
        [to_seconds(rec.time) for rec in disseminated], settings.rate_window, settings.step, end)
    series['confirmation_rate'] = windowed_rate(
        [to_seconds(rec.time) for rec in confirmed], settings.rate_window, settings.step, end)

    shares = fair_shares(accounts, scheduling_rate)
    for account in accounts:
        series[f'scaled_dissemination_rate_node{account.node_id:02d}'] = windowed_rate(
            [to_seconds(rec.time) for rec in disseminated if rec.account_id == account.id],
            settings.rate_window, settings.step, end, fair_share=shares[account.id])
        series[f'scaled_confirmation_rate_node{account.node_id:02d}'] = windowed_rate(
            [to_seconds(rec.time) for rec in confirmed if rec.account_id == account.id],
            settings.rate_window, settings.step, end, fair_share=shares[account.id])

    series['latency_cdf'] = latency_cdf(observer.dissemination_latencies())
    for strategy in strategies_present:
        issuers = [account.id for account in accounts if account.strategy is strategy]
        series[f'latency_cdf_{strategy.value}'] = latency_cdf(observer.dissemination_latencies(issuers))
    return series


@dataclass
class _AccountTally:
    issued: int = 0
    scheduled: int = 0
    dropped_full: int = 0
    dropped_stale: int = 0
    dropped_rejected: int = 0
    bids: List[int] = field(default_factory=list)
    sojourns: List[int] = field(default_factory=list)


def _mean(values: Sequence[float]) -> Optional[float]:
    if not values:
        return None
    return round(float(np.mean(values)), 6)


def summarize(log: MetricsLog, accounts: Sequence[Account]) -> dict:
    by_id = {account.id: account for account in accounts}
    tallies = {account.id: _AccountTally() for account in accounts}

    totals = {kind.value: 0 for kind in RecordKind}
    for rec in log.records:
        totals[rec.kind.value] += 1
        tally = tallies.get(rec.account_id)
        if tally is None or rec.node_id not in (by_id[rec.account_id].node_id, -1):
            continue
        if rec.kind is RecordKind.ISSUED:
            tally.issued += 1
            tally.bids.append(rec.credits)
        elif rec.kind is RecordKind.SCHEDULED:
            tally.scheduled += 1
            tally.sojourns.append(rec.sojourn)
        elif rec.kind is RecordKind.DROPPED_FULL:
            tally.dropped_full += 1
        elif rec.kind is RecordKind.DROPPED_STALE:
            tally.dropped_stale += 1
        elif rec.kind is RecordKind.DROPPED_REJECTED:
            tally.dropped_rejected += 1

    per_account = []
    for account in accounts:
        tally = tallies[account.id]
        per_account.append({
            'account_id': account.id,
            'node_id': account.node_id,
            'strategy': account.strategy.value,
            'tokens': round(account.tokens, 6),
            'issued': tally.issued,
            'scheduled': tally.scheduled,
            'dropped_full': tally.dropped_full,
            'dropped_stale': tally.dropped_stale,
            'dropped_rejected': tally.dropped_rejected,
            'abstentions': account.abstentions,
            'abandoned': account.abandoned,
            'backlog': len(account.mempool),
            'mean_sojourn': _mean([to_seconds(s) for s in tally.sojourns]),
            'mean_bid': _mean([to_credits(b) for b in tally.bids]),
            'final_balance': to_credits(account.credit_balance),
            'accrued': to_credits(account.accrued),
            'consumed': to_credits(account.consumed),
            'reimbursed': to_credits(account.reimbursed),
        })

    per_strategy = {}
    for strategy in StrategyKind:
        members = [account for account in accounts if account.strategy is strategy]
        if not members:
            continue
        member_tallies = [tallies[account.id] for account in members]
        per_strategy[strategy.value] = {
            'accounts': len(members),
            'issued': sum(t.issued for t in member_tallies),
            'scheduled': sum(t.scheduled for t in member_tallies),
            'dropped': sum(t.dropped_full + t.dropped_stale + t.dropped_rejected for t in member_tallies),
            'abandoned': sum(account.abandoned for account in members),
            'mean_sojourn': _mean([to_seconds(s) for t in member_tallies for s in t.sojourns]),
            'mean_bid': _mean([to_credits(b) for t in member_tallies for b in t.bids]),
        }

    return {'totals': totals, 'per_strategy': per_strategy, 'per_account': per_account}
