import math

import numpy as np
import pytest
from dag_ledger import ConfirmationState, DagView
from metrics import MetricsLog
from models import Account, DagBlock, GENESIS_ID, RecordKind, TrafficPhase, TrafficProfile, CREDIT_UNIT
from network import (
    NodeState, ParentRequest, Topology, expire_stale, generate_traffic, on_arrival, on_parent_response,
    on_scheduled, random_k_regular, sample_delays, single_node_topology, take_parent_requests
)
from scheduler import SchedulerBuffer
from sim_core import RngStreams


def ring_topology(n, delay=100_000):
    adjacency = {node: {(node - 1) % n, (node + 1) % n} for node in range(n)}
    topology = Topology(n=n, adjacency=adjacency)
    topology.delays = {(u, v): delay for u in range(n) for v in adjacency[u]}
    return topology


def dag_node(node_id, capacity=10):
    return NodeState(
        id=node_id,
        buffer=SchedulerBuffer(capacity, 30_000_000),
        view=DagView(),
        confirmation=ConfirmationState(100)
    )


def dag_block(block_id, parents=(GENESIS_ID,), credits=0, issuer=0, ts=0):
    return DagBlock(id=block_id, issuer=issuer, parents=tuple(parents), issue_timestamp=ts,
                    credits_consumed=credits * CREDIT_UNIT)


def should_build_connected_four_regular_graph_when_n_is_twenty():
    # Given many seeds
    for seed in range(1000):
        # When building a 4-regular topology on 20 nodes
        topology = random_k_regular(20, 4, np.random.default_rng(seed))

        # Then every node has degree 4, there are no self-loops and the graph is connected
        assert all(topology.degree(node) == 4 for node in range(20))
        assert all(node not in topology.adjacency[node] for node in range(20))
        assert topology.is_connected()
        assert topology.to_graph().number_of_edges() == 40


def should_build_single_edge_when_two_nodes_have_degree_one(rng):
    # Given two nodes of degree one
    # When building the topology
    topology = random_k_regular(2, 1, rng)

    # Then the only edge joins them
    assert topology.neighbors(0) == [1]
    assert topology.neighbors(1) == [0]


def should_reject_topology_when_degree_sum_is_odd(rng):
    # Given n=5 and k=3
    # When building the topology
    # Then ValueError should be raised
    with pytest.raises(ValueError, match="must be even"):
        random_k_regular(5, 3, rng)


def should_reject_topology_when_degree_is_out_of_range(rng):
    # Given a degree not below n
    # When building the topology
    # Then ValueError should be raised
    with pytest.raises(ValueError, match="0 <= k < n"):
        random_k_regular(4, 4, rng)


def should_raise_runtime_error_when_retries_are_exhausted():
    # Given a generator that always produces a self-loop
    class LoopingRng:
        def shuffle(self, stubs):
            stubs[:] = 0

    # When building the topology
    # Then the retry limit is reported
    with pytest.raises(RuntimeError, match="3 attempts"):
        random_k_regular(4, 2, LoopingRng(), max_retries=3)


def should_describe_single_node_without_peers():
    # Given the single-node topology
    topology = single_node_topology()

    # Then it has one isolated node
    assert topology.n == 1
    assert topology.neighbors(0) == []
    assert topology.is_connected()


def should_use_fixed_delay_when_bounds_are_equal(rng):
    # Given a ring and equal delay bounds
    topology = ring_topology(6)

    # When sampling delays
    sample_delays(topology, 0.1, 0.1, rng)

    # Then every directed edge has a 0.1 s delay
    assert len(topology.delays) == 12
    assert set(topology.delays.values()) == {100_000}


def should_average_midpoint_when_sampling_many_uniform_delays():
    # Given a ring with 10^4 directed edges
    topology = ring_topology(5000)

    # When sampling delays in [50 ms, 150 ms]
    sample_delays(topology, 0.05, 0.15, np.random.default_rng(2))

    # Then all delays are in range and the mean is 0.1 s within 3 sigma
    delays = np.array(list(topology.delays.values())) / 1_000_000
    sigma = 0.1 / math.sqrt(12)
    assert delays.size == 10_000
    assert delays.min() >= 0.05 and delays.max() <= 0.15
    assert abs(delays.mean() - 0.1) <= 3 * sigma / math.sqrt(delays.size)


def should_raise_error_when_delay_bounds_are_inverted(rng):
    # Given lo above hi
    # When sampling delays
    # Then ValueError should be raised
    with pytest.raises(ValueError):
        sample_delays(ring_topology(4), 0.2, 0.1, rng)


def should_generate_poisson_count_when_running_one_phase(sample_accounts):
    # Given one 360 s phase at 100% of a 25 blocks/s scheduler
    profile = TrafficProfile([TrafficPhase(duration=360_000_000, rate_multiplier=1.0)])
    streams = RngStreams(3)

    # When generating traffic
    arrivals = list(generate_traffic(profile, sample_accounts, 25.0,
                                     lambda account_id: streams.get(f'traffic/account/{account_id}')))

    # Then the count is 9000 within three standard deviations and arrivals are ordered
    assert abs(len(arrivals) - 9000) <= 3 * math.sqrt(9000)
    times = [t for t, _ in arrivals]
    assert times == sorted(times)
    assert all(0 < t < 360_000_000 for t in times)


def should_split_traffic_by_token_share_when_accounts_differ(sample_accounts):
    # Given accounts holding 50%, 30% and 20% of the tokens
    profile = TrafficProfile([TrafficPhase(duration=400_000_000, rate_multiplier=1.0)])
    streams = RngStreams(4)

    # When generating traffic
    arrivals = list(generate_traffic(profile, sample_accounts, 25.0,
                                     lambda account_id: streams.get(f'traffic/account/{account_id}')))

    # Then each account's share of blocks follows its share of tokens
    counts = np.bincount([account_id for _, account_id in arrivals], minlength=3)
    expected = np.array([0.5, 0.3, 0.2]) * 10_000
    assert np.all(np.abs(counts - expected) <= 4 * np.sqrt(expected))


def should_follow_phase_multipliers_when_profile_changes_rate():
    # Given a quiet phase followed by a busy one
    accounts = [Account(id=0, tokens=1.0)]
    profile = TrafficProfile([
        TrafficPhase(duration=200_000_000, rate_multiplier=0.5),
        TrafficPhase(duration=200_000_000, rate_multiplier=1.5),
    ])
    streams = RngStreams(5)

    # When generating traffic at a 10 blocks/s scheduler
    times = np.array([t for t, _ in generate_traffic(profile, accounts, 10.0, lambda i: streams.get('traffic'))])

    # Then each phase carries its own expected volume
    quiet = int((times < 200_000_000).sum())
    busy = int((times >= 200_000_000).sum())
    assert abs(quiet - 1000) <= 4 * math.sqrt(1000)
    assert abs(busy - 3000) <= 4 * math.sqrt(3000)


def should_enqueue_new_block_when_it_first_arrives():
    # Given a node and a solid block
    node = dag_node(0)
    log = MetricsLog()

    # When the block arrives
    dropped = on_arrival(node, dag_block(1, credits=3), 10, log)

    # Then it is buffered and an Enqueued record is written
    assert dropped == []
    assert 1 in node.buffer
    assert [rec.kind for rec in log.records] == [RecordKind.ENQUEUED]


def should_ignore_arrival_when_block_was_already_seen():
    # Given a node that already received block 1
    node = dag_node(0)
    log = MetricsLog()
    on_arrival(node, dag_block(1), 10, log, sender=1)

    # When a second copy arrives from another peer
    on_arrival(node, dag_block(1), 20, log, sender=2)

    # Then nothing more is recorded and the first sender is kept
    assert len(log) == 1
    assert node.received_from[1] == 1


def should_record_rejection_when_full_buffer_outranks_arrival():
    # Given a full one-slot buffer holding a 5-credit block
    node = dag_node(0, capacity=1)
    log = MetricsLog()
    on_arrival(node, dag_block(1, credits=5), 0, log)

    # When a 1-credit block arrives
    dropped = on_arrival(node, dag_block(2, credits=1), 5, log)

    # Then it is rejected
    assert [entry.block_id for entry in dropped] == [2]
    assert log.records[-1].kind is RecordKind.DROPPED_REJECTED


def should_record_eviction_when_higher_bid_replaces_buffered_block():
    # Given a full one-slot buffer holding a 1-credit block
    node = dag_node(0, capacity=1)
    log = MetricsLog()
    on_arrival(node, dag_block(1, credits=1), 0, log)

    # When a 5-credit block arrives
    dropped = on_arrival(node, dag_block(2, credits=5), 5, log)

    # Then the old block is evicted and its payload forgotten
    assert [entry.block_id for entry in dropped] == [1]
    assert [rec.kind for rec in log.records[-2:]] == [RecordKind.ENQUEUED, RecordKind.DROPPED_FULL]
    assert 1 not in node.payloads


def should_record_stale_drop_when_block_waits_too_long():
    # Given a block buffered at t=0
    node = dag_node(0)
    log = MetricsLog()
    on_arrival(node, dag_block(1), 0, log)

    # When checking 31 s later
    expired = expire_stale(node, 31_000_000, log)

    # Then it is dropped as stale
    assert [entry.block_id for entry in expired] == [1]
    assert log.records[-1].kind is RecordKind.DROPPED_STALE


def should_hold_block_until_parent_is_attached_when_arrival_is_not_solid(rng):
    # Given a node missing block 1
    node = dag_node(0)
    log = MetricsLog()
    topology = ring_topology(3)

    # When block 2 (child of 1) arrives first, then block 1 arrives and is scheduled
    on_arrival(node, dag_block(2, parents=[1]), 0, log, sender=1)
    assert 2 not in node.buffer
    on_arrival(node, dag_block(1), 10, log, sender=1)
    node.buffer.next_batch(1)
    outcome = on_scheduled(node, node.payloads[1], topology, 20, log)

    # Then block 2 becomes schedulable once its parent is attached
    assert outcome.attached == [1]
    assert 2 in node.buffer
    assert node.solidifying == {}


def should_forward_to_every_neighbor_except_sender_when_scheduled():
    # Given node 0 on a 4-ring that received block 1 from node 1
    node = dag_node(0)
    log = MetricsLog()
    topology = ring_topology(4)
    on_arrival(node, dag_block(1), 0, log, sender=1)
    node.buffer.next_batch(1)

    # When the block is scheduled
    outcome = on_scheduled(node, dag_block(1), topology, 1_000, log)

    # Then it goes only to node 3, after the link delay
    assert [(neighbor, fire_at) for neighbor, fire_at, _ in outcome.forwards] == [(3, 101_000)]
    assert 1 in node.view


def should_forward_to_all_neighbors_when_block_is_local():
    # Given a locally issued block
    node = dag_node(0)
    log = MetricsLog()
    topology = ring_topology(4)
    on_arrival(node, dag_block(1), 0, log)
    node.buffer.next_batch(1)

    # When it is scheduled
    outcome = on_scheduled(node, dag_block(1), topology, 0, log)

    # Then both neighbors receive it exactly once
    assert sorted(neighbor for neighbor, _, _ in outcome.forwards) == [1, 3]
    assert on_scheduled(node, dag_block(1), topology, 0, log).forwards == []


def should_request_parent_from_child_sender_when_parent_was_rejected_earlier():
    # Given a full one-slot buffer that rejected block 2 from node 3
    node = dag_node(0, capacity=1)
    log = MetricsLog()
    on_arrival(node, dag_block(1, credits=5), 0, log, sender=3)
    on_arrival(node, dag_block(2, credits=1), 5, log, sender=3)
    assert take_parent_requests(node) == []

    # When a child of block 2 arrives from node 1
    on_arrival(node, dag_block(4, parents=[2], credits=9), 10, log, sender=1)

    # Then the child is parked and block 2 is requested from node 1 exactly once
    assert 4 in node.solidifying
    assert take_parent_requests(node) == [ParentRequest(2, 1)]
    assert take_parent_requests(node) == []


def should_request_parent_when_it_is_evicted_while_a_child_waits():
    # Given block 1 buffered and its child parked behind it
    node = dag_node(0, capacity=1)
    log = MetricsLog()
    on_arrival(node, dag_block(1, credits=1), 0, log, sender=3)
    on_arrival(node, dag_block(2, parents=[1], credits=1), 5, log, sender=1)
    assert take_parent_requests(node) == []

    # When a higher bid evicts block 1
    on_arrival(node, dag_block(3, credits=5), 10, log, sender=3)

    # Then block 1 is requested from the sender of the waiting child
    assert take_parent_requests(node) == [ParentRequest(1, 1)]
    assert 1 in node.dropped


def should_request_dropped_parent_once_when_several_children_wait_on_it():
    # Given block 2 rejected at node 0
    node = dag_node(0, capacity=1)
    log = MetricsLog()
    on_arrival(node, dag_block(1, credits=5), 0, log, sender=3)
    on_arrival(node, dag_block(2, credits=1), 5, log, sender=3)

    # When two children of block 2 arrive from different peers
    on_arrival(node, dag_block(4, parents=[2]), 10, log, sender=1)
    on_arrival(node, dag_block(5, parents=[2]), 12, log, sender=3)

    # Then a single request is issued
    assert take_parent_requests(node) == [ParentRequest(2, 1)]
    assert node.waiting_on[2] == {4, 5}


def should_attach_parent_and_release_child_when_parent_response_arrives():
    # Given node 0 on a 4-ring that rejected block 2 from node 3 and parked its child from node 1
    node = dag_node(0, capacity=1)
    log = MetricsLog()
    topology = ring_topology(4)
    on_arrival(node, dag_block(1, credits=5), 0, log, sender=3)
    on_arrival(node, dag_block(2, credits=1), 5, log, sender=3)
    on_arrival(node, dag_block(4, parents=[2], credits=9), 10, log, sender=1)
    take_parent_requests(node)
    node.buffer.next_batch(1)

    # When node 1 answers with block 2
    outcome = on_parent_response(node, dag_block(2, credits=1), 1, topology, 50, log)

    # Then block 2 joins the view without a second pass through the buffer
    assert outcome.attached == [2]
    assert 2 in node.view
    assert 2 not in node.dropped
    assert [rec.kind for rec in log.records if rec.block_id == 2] == [RecordKind.DROPPED_REJECTED]
    # And the child is buffered while block 2 goes on to every neighbor except its first sender
    assert 4 in node.buffer
    assert node.solidifying == {}
    assert [(neighbor, fire_at, block.id) for neighbor, fire_at, block in outcome.forwards] == [(1, 100_050, 2)]
    assert outcome.dropped == []


def should_ignore_parent_response_when_block_is_already_attached():
    # Given a node that already attached block 2 through a response
    node = dag_node(0, capacity=1)
    log = MetricsLog()
    topology = ring_topology(4)
    on_arrival(node, dag_block(1, credits=5), 0, log, sender=3)
    on_arrival(node, dag_block(2, credits=1), 5, log, sender=3)
    on_arrival(node, dag_block(4, parents=[2], credits=9), 10, log, sender=1)
    node.buffer.next_batch(1)
    on_parent_response(node, dag_block(2, credits=1), 1, topology, 50, log)

    # When a second response for block 2 arrives
    outcome = on_parent_response(node, dag_block(2, credits=1), 1, topology, 60, log)

    # Then nothing is attached or forwarded again
    assert outcome.attached == []
    assert outcome.forwards == []
    assert node.requested == set()
