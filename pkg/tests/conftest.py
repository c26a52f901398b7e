import sys
import os

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import numpy as np
import pytest
from models import Account, BufferEntry, StrategyKind, to_micro_credits
from presets import get_preset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_entry():
    def _make(block_id, credits, arrival_time=0, work=1.0, issuer=0):
        micro = to_micro_credits(credits)
        return BufferEntry(
            block_id=block_id,
            score=micro / work,
            arrival_time=arrival_time,
            work=work,
            credits_consumed=micro,
            issuer=issuer
        )
    return _make


@pytest.fixture
def sample_accounts():
    return [
        Account(id=0, tokens=50.0, strategy=StrategyKind.GREEDY),
        Account(id=1, tokens=30.0, strategy=StrategyKind.IMPATIENT),
        Account(id=2, tokens=20.0, strategy=StrategyKind.GAMBLER),
    ]


@pytest.fixture
def short_single_node_data():
    data = get_preset('single-node-mixed')
    data['duration'] = 40.0
    data['accounts']['n'] = 100
    data['traffic']['phases'] = [
        {'duration': 20.0, 'rate_multiplier': 0.5},
        {'duration': 20.0, 'rate_multiplier': 1.5},
    ]
    return data


@pytest.fixture
def short_multi_node_data():
    data = get_preset('multi-node-greedy-opp')
    n_nodes = 8
    data['duration'] = 30.0
    data['accounts']['n'] = n_nodes
    data['network']['n_nodes'] = n_nodes
    data['network']['k'] = 3
    data['strategies']['assignment'] = ['greedy', 'opportunistic'] * (n_nodes // 2)
    data['dag']['cw_threshold'] = 10
    # light load so nothing is dropped and the drain empties every buffer
    data['traffic']['phases'] = [{'duration': 20.0, 'rate_multiplier': 0.3}]
    return data
