import copy
from typing import Any, Dict, List

UNCONGESTED_MULTIPLIER = 0.5
CONGESTED_MULTIPLIER = 1.5

SINGLE_NODE_PHASE_SECONDS = 180.0
SINGLE_NODE_CYCLES = 10


def _single_node_phases() -> List[Dict[str, float]]:
    phases = []
    for _ in range(SINGLE_NODE_CYCLES):
        phases.append({'duration': SINGLE_NODE_PHASE_SECONDS, 'rate_multiplier': UNCONGESTED_MULTIPLIER})
        phases.append({'duration': SINGLE_NODE_PHASE_SECONDS, 'rate_multiplier': CONGESTED_MULTIPLIER})
    return phases


def _single_node(name: str, fractions: Dict[str, float]) -> Dict[str, Any]:
    return {
        'name': name,
        'mode': 'single_node',
        'duration': 3600.0,
        'seed': 42,
        'accounts': {'n': 1000, 'alpha': 2.0, 'x_min': 10.0},
        'credit': {'mode': 'linear', 'rate': 0.1, 'reimburse_on_drop': False},
        'scheduler': {'tau': 0.01, 'm': 1.0, 'capacity': 500, 'max_age': 30.0},
        'strategies': {'fractions': fractions, 'gambler_top_k': 20, 'retry_interval': 1.0, 'mempool_max_age': 30.0},
        'traffic': {'phases': _single_node_phases(), 'block_work': 1.0},
        'metrics': {'rate_window': 10.0, 'ma_window': 10.0, 'step': 1.0, 'sample_interval': 1.0},
    }


def _multi_node_greedy_opportunistic() -> Dict[str, Any]:
    n_nodes = 20
    return {
        'name': 'multi-node-greedy-opp',
        'mode': 'multi_node',
        'duration': 240.0,
        'seed': 42,
        'accounts': {'n': n_nodes, 'alpha': 2.0, 'x_min': 10.0},
        'credit': {'mode': 'linear', 'rate': 0.1, 'reimburse_on_drop': False},
        'scheduler': {'tau': 0.04, 'm': 1.0, 'capacity': 500, 'max_age': 30.0},
        'strategies': {
            'assignment': ['greedy', 'opportunistic'] * (n_nodes // 2),
            'gambler_top_k': 20,
            'retry_interval': 1.0,
            'mempool_max_age': 30.0,
        },
        'traffic': {
            'phases': [
                {'duration': 60.0, 'rate_multiplier': UNCONGESTED_MULTIPLIER},
                {'duration': 120.0, 'rate_multiplier': CONGESTED_MULTIPLIER},
                {'duration': 60.0, 'rate_multiplier': UNCONGESTED_MULTIPLIER},
            ],
            'block_work': 1.0,
        },
        'network': {'n_nodes': n_nodes, 'k': 4, 'delay_lo': 0.05, 'delay_hi': 0.15},
        'dag': {'parents_k': 2, 'cw_threshold': 100, 'tip_freshness': 30.0},
        'metrics': {'rate_window': 10.0, 'ma_window': 10.0, 'step': 1.0, 'sample_interval': 1.0},
    }


def _single_node_mixed_concave() -> Dict[str, Any]:
    preset = _single_node('single-node-mixed-concave', {'impatient': 0.1, 'greedy': 0.6, 'gambler': 0.3})
    # cap_scale * gamma matches the linear rate at t = 0
    preset['credit'] = {'mode': 'concave', 'gamma': 0.01, 'cap_scale': 10.0, 'reimburse_on_drop': False}
    return preset


PRESETS = {
    'single-node-impatient': lambda: _single_node('single-node-impatient', {'impatient': 1.0}),
    'single-node-greedy': lambda: _single_node('single-node-greedy', {'greedy': 1.0}),
    'single-node-gambler': lambda: _single_node('single-node-gambler', {'gambler': 1.0}),
    'single-node-mixed': lambda: _single_node(
        'single-node-mixed', {'impatient': 0.1, 'greedy': 0.6, 'gambler': 0.3}),
    'single-node-mixed-concave': _single_node_mixed_concave,
    'multi-node-greedy-opp': _multi_node_greedy_opportunistic,
}

PRESET_NAMES = sorted(PRESETS)


def get_preset(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ValueError(f"Unknown scenario {name!r}. Available: {', '.join(PRESET_NAMES)}")
    return copy.deepcopy(PRESETS[name]())
