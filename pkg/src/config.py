import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

from models import GenerationMode, StrategyKind

logger = logging.getLogger(__name__)

SINGLE_NODE = 'single_node'
MULTI_NODE = 'multi_node'
MODES = (SINGLE_NODE, MULTI_NODE)

FRACTION_TOLERANCE = 1e-9

_INVALID = object()


class ConfigError(ValueError):
    def __init__(self, errors: List[str]) -> None:
        super().__init__("Invalid scenario configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


@dataclass
class AccountsConfig:
    n: int = 1000
    alpha: float = 2.0
    x_min: float = 10.0

    def validate(self, path: str, errors: List[str]) -> None:
        _require(self.n >= 1, f"{path}.n", "must be at least 1", errors)
        _require(self.alpha > 1, f"{path}.alpha", "must be greater than 1", errors)
        _require(self.x_min > 0, f"{path}.x_min", "must be positive", errors)


@dataclass
class CreditConfig:
    mode: str = GenerationMode.LINEAR.value
    rate: float = 0.1
    gamma: float = 0.01
    cap_scale: float = 10.0
    reimburse_on_drop: bool = False

    def validate(self, path: str, errors: List[str]) -> None:
        modes = [m.value for m in GenerationMode]
        _require(self.mode in modes, f"{path}.mode", f"must be one of {modes}", errors)
        _require(self.rate > 0, f"{path}.rate", "must be positive", errors)
        _require(self.gamma > 0, f"{path}.gamma", "must be positive", errors)
        _require(self.cap_scale > 0, f"{path}.cap_scale", "must be positive", errors)


@dataclass
class SchedulerConfig:
    tau: float = 0.01
    m: float = 1.0
    capacity: int = 500
    max_age: float = 30.0

    def validate(self, path: str, errors: List[str]) -> None:
        _require(self.tau > 0, f"{path}.tau", "must be positive", errors)
        _require(self.m > 0, f"{path}.m", "must be positive", errors)
        _require(self.capacity >= 1, f"{path}.capacity", "must be at least 1", errors)
        _require(self.max_age > 0, f"{path}.max_age", "must be positive", errors)


@dataclass
class StrategiesConfig:
    fractions: Optional[Dict[str, float]] = None
    assignment: Optional[List[str]] = None
    gambler_top_k: int = 20
    retry_interval: float = 1.0
    mempool_max_age: float = 30.0

    def validate(self, path: str, errors: List[str], n_accounts: int) -> None:
        known = [kind.value for kind in StrategyKind]
        _require(self.fractions is not None or self.assignment is not None, path,
                 "needs either fractions or assignment", errors)
        if self.fractions is not None:
            for name, fraction in self.fractions.items():
                _require(name in known, f"{path}.fractions.{name}", f"unknown strategy, expected one of {known}", errors)
                _require(_is_number(fraction) and fraction >= 0, f"{path}.fractions.{name}",
                         "must be a non-negative number", errors)
            if all(_is_number(f) for f in self.fractions.values()):
                total = sum(self.fractions.values())
                _require(abs(total - 1.0) <= FRACTION_TOLERANCE, f"{path}.fractions",
                         f"must sum to 1 (got {total:g})", errors)
        if self.assignment is not None:
            _require(len(self.assignment) == n_accounts, f"{path}.assignment",
                     f"must list exactly {n_accounts} strategies (got {len(self.assignment)})", errors)
            for index, name in enumerate(self.assignment):
                _require(name in known, f"{path}.assignment[{index}]", f"unknown strategy {name!r}", errors)
        _require(self.gambler_top_k >= 1, f"{path}.gambler_top_k", "must be at least 1", errors)
        _require(self.retry_interval > 0, f"{path}.retry_interval", "must be positive", errors)
        _require(self.mempool_max_age > 0, f"{path}.mempool_max_age", "must be positive", errors)


@dataclass
class TrafficConfig:
    phases: List[Dict[str, float]] = field(default_factory=list)
    block_work: float = 1.0

    def validate(self, path: str, errors: List[str]) -> None:
        _require(len(self.phases) > 0, f"{path}.phases", "must contain at least one phase", errors)
        for index, phase in enumerate(self.phases):
            phase_path = f"{path}.phases[{index}]"
            if not isinstance(phase, dict):
                errors.append(f"{phase_path}: must be an object with duration and rate_multiplier")
                continue
            unknown = sorted(set(phase) - {'duration', 'rate_multiplier'})
            for key in unknown:
                errors.append(f"{phase_path}.{key}: unknown key")
            duration = phase.get('duration')
            multiplier = phase.get('rate_multiplier')
            _require(_is_number(duration) and duration > 0, f"{phase_path}.duration", "must be positive", errors)
            _require(_is_number(multiplier) and multiplier > 0, f"{phase_path}.rate_multiplier",
                     "must be positive", errors)
        _require(self.block_work > 0, f"{path}.block_work", "must be positive", errors)


@dataclass
class NetworkConfig:
    n_nodes: int = 20
    k: int = 4
    delay_lo: float = 0.05
    delay_hi: float = 0.15

    def validate(self, path: str, errors: List[str]) -> None:
        _require(self.n_nodes >= 1, f"{path}.n_nodes", "must be at least 1", errors)
        _require(0 <= self.k < self.n_nodes, f"{path}.k", "must satisfy 0 <= k < n_nodes", errors)
        _require((self.n_nodes * self.k) % 2 == 0, f"{path}.k", "n_nodes * k must be even", errors)
        _require(self.k >= 1 or self.n_nodes == 1, f"{path}.k", "must be at least 1 for a connected topology", errors)
        _require(self.delay_lo >= 0, f"{path}.delay_lo", "must be non-negative", errors)
        _require(self.delay_lo <= self.delay_hi, f"{path}.delay_hi", "must not be below delay_lo", errors)


@dataclass
class DagConfig:
    parents_k: int = 2
    cw_threshold: int = 100
    tip_freshness: float = 30.0

    def validate(self, path: str, errors: List[str]) -> None:
        _require(self.parents_k >= 1, f"{path}.parents_k", "must be at least 1", errors)
        _require(self.cw_threshold >= 1, f"{path}.cw_threshold", "must be at least 1", errors)
        _require(self.tip_freshness > 0, f"{path}.tip_freshness", "must be positive", errors)


@dataclass
class MetricsConfig:
    rate_window: float = 10.0
    ma_window: float = 10.0
    step: float = 1.0
    sample_interval: float = 1.0

    def validate(self, path: str, errors: List[str]) -> None:
        for name in ('rate_window', 'ma_window', 'step', 'sample_interval'):
            _require(getattr(self, name) > 0, f"{path}.{name}", "must be positive", errors)


SECTIONS = {
    'accounts': AccountsConfig,
    'credit': CreditConfig,
    'scheduler': SchedulerConfig,
    'strategies': StrategiesConfig,
    'traffic': TrafficConfig,
    'network': NetworkConfig,
    'dag': DagConfig,
    'metrics': MetricsConfig,
}

MULTI_NODE_SECTIONS = ('network', 'dag')


@dataclass
class ScenarioConfig:
    name: str = 'custom'
    mode: str = SINGLE_NODE
    duration: float = 3600.0
    seed: int = 42
    accounts: AccountsConfig = field(default_factory=AccountsConfig)
    credit: CreditConfig = field(default_factory=CreditConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    strategies: StrategiesConfig = field(default_factory=StrategiesConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    network: Optional[NetworkConfig] = None
    dag: Optional[DagConfig] = None
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    @property
    def is_multi_node(self) -> bool:
        return self.mode == MULTI_NODE

    @property
    def scheduling_rate(self) -> float:
        # blocks per second at the configured block work
        return self.scheduler.m / self.scheduler.tau / self.traffic.block_work

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        return {key: value for key, value in data.items() if value is not None}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ScenarioConfig':
        errors: List[str] = []
        if not isinstance(data, dict):
            raise ConfigError(["<root>: must be a JSON object"])

        top_level = {f.name for f in fields(cls)}
        for key in sorted(set(data) - top_level):
            errors.append(f"{key}: unknown key")

        config = cls()
        for name in ('name', 'mode', 'duration', 'seed'):
            if name in data:
                value = _coerce(data[name], type(getattr(config, name)), name, errors)
                if value is not _INVALID:
                    setattr(config, name, value)

        for section, section_cls in SECTIONS.items():
            if section in data:
                setattr(config, section, _build_section(section_cls, data[section], section, errors))
            elif section in MULTI_NODE_SECTIONS and config.mode == MULTI_NODE:
                setattr(config, section, section_cls())

        config._validate(errors)
        if errors:
            raise ConfigError(errors)
        return config

    def _validate(self, errors: List[str]) -> None:
        _require(self.mode in MODES, 'mode', f"must be one of {list(MODES)}", errors)
        _require(self.duration > 0, 'duration', "must be positive", errors)
        _require(self.seed >= 0, 'seed', "must be non-negative", errors)
        self.accounts.validate('accounts', errors)
        self.credit.validate('credit', errors)
        self.scheduler.validate('scheduler', errors)
        self.strategies.validate('strategies', errors, self.accounts.n)
        self.traffic.validate('traffic', errors)
        self.metrics.validate('metrics', errors)
        if self.mode == MULTI_NODE:
            self.network.validate('network', errors)
            self.dag.validate('dag', errors)
            _require(self.network.n_nodes == self.accounts.n, 'network.n_nodes',
                     f"must equal accounts.n ({self.accounts.n}) in multi_node mode", errors)
        else:
            for section in MULTI_NODE_SECTIONS:
                _require(getattr(self, section) is None, section, "only allowed in multi_node mode", errors)


def load_config(path: str) -> ScenarioConfig:
    return ScenarioConfig.from_dict(read_config_file(path))


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except OSError as e:
        raise ConfigError([f"<file>: cannot read {path}: {e.strerror}"])
    except json.JSONDecodeError as e:
        raise ConfigError([f"<file>: {path} is not valid JSON: {e.msg} (line {e.lineno}, column {e.colno})"])


def apply_overrides(data: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    errors = []
    for override in overrides:
        key, sep, raw_value = override.partition('=')
        if not sep or not key:
            errors.append(f"{override}: override must look like key.path=value")
            continue
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        target = data
        parts = key.split('.')
        for part in parts[:-1]:
            if not isinstance(target.get(part), dict):
                target[part] = {}
            target = target[part]
        target[parts[-1]] = value
    if errors:
        raise ConfigError(errors)
    return data


def _build_section(section_cls, raw: Any, path: str, errors: List[str]):
    section = section_cls()
    if not isinstance(raw, dict):
        errors.append(f"{path}: must be an object")
        return section
    known = {f.name for f in fields(section_cls)}
    for key in sorted(set(raw) - known):
        errors.append(f"{path}.{key}: unknown key")
    for f in fields(section_cls):
        if f.name in raw:
            default = getattr(section, f.name)
            expected = type(default) if default is not None else _optional_type(section_cls, f.name)
            value = _coerce(raw[f.name], expected, f"{path}.{f.name}", errors)
            if value is not _INVALID:
                setattr(section, f.name, value)
    return section


def _optional_type(section_cls, name: str) -> type:
    # Optional fields default to None; their payload type comes from the annotation
    annotation = str(section_cls.__annotations__[name])
    if 'Dict' in annotation:
        return dict
    if 'List' in annotation:
        return list
    return object


def _coerce(value: Any, expected: type, path: str, errors: List[str]) -> Any:
    if expected is float:
        if _is_number(value):
            return float(value)
        errors.append(f"{path}: expected a number, got {value!r}")
    elif expected is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        errors.append(f"{path}: expected an integer, got {value!r}")
    elif expected is bool:
        if isinstance(value, bool):
            return value
        errors.append(f"{path}: expected true or false, got {value!r}")
    elif expected is str:
        if isinstance(value, str):
            return value
        errors.append(f"{path}: expected a string, got {value!r}")
    elif expected in (list, dict):
        if isinstance(value, expected) or value is None:
            return value
        errors.append(f"{path}: expected {'a list' if expected is list else 'an object'}, got {value!r}")
    else:
        return value
    return _INVALID


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _require(condition: bool, path: str, message: str, errors: List[str]) -> None:
    if not condition:
        errors.append(f"{path}: {message}")
